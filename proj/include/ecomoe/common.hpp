#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecomoe {

/// Thrown for invalid configuration (bad dimensions, inconsistent modes,
/// malformed files). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown for unrecoverable runtime faults (unwritable output, corrupt
/// checkpoint). The CLI maps this to exit code 3.
struct RuntimeFault : std::runtime_error {
    explicit RuntimeFault(const std::string& what) : std::runtime_error(what) {}
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 rotate(Vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// --- seeding -----------------------------------------------------------
// All randomness in the engine is derived statelessly from (root seed,
// role, index) so that interrupted runs resume on exactly the same
// streams. splitmix64 is the usual mixer for this.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, uint64_t stream, uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ (0xa076'1d64'78bd'642full * (stream + 1))) + index);
}

// Seed roles; values are arbitrary but frozen (they are part of the
// reproducibility surface of checkpoints and golden files).
enum SeedRole : uint64_t {
    kSeedPopulation = 1,
    kSeedRollout = 2,
    kSeedShuffle = 3,
    kSeedPolicyInit = 4,
    kSeedCriticInit = 5,
    kSeedEncode = 6,
    kSeedPretrain = 7,
    kSeedBootstrap = 8,
};

/// Deterministic RNG: xoshiro-free, stdlib-engine based, but with our own
/// normal/uniform mappings so draws are identical across standard
/// libraries (std::normal_distribution's algorithm is unspecified).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {}

    uint64_t next_u64() {
        // xorshift* keeps the state tiny and trivially serializable.
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (sibling draw discarded; two
    /// uniforms per normal keeps the stream position predictable).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
};

}  // namespace ecomoe
