#pragma once

#include <optional>

#include "ecomoe/genome.hpp"
#include "ecomoe/linalg.hpp"
#include "ecomoe/morphology.hpp"

namespace ecomoe {

/// Body-plan generator constants. Genotype components are spread over a
/// fixed random projection, squashed by tanh, and read off as limb
/// counts, segment counts, lengths, masses and attachment angles of a
/// star-shaped body (central torso, radial limbs of chained segments).
struct DecoderConfig {
    int latent_dim = 16;
    int max_limbs = 6;
    int max_segments = 3;
    double len_lo = 0.1;   // m
    double len_hi = 0.5;   // m
    double mass_lo = 0.2;  // kg
    double mass_hi = 2.0;  // kg
    double torso_mass = 1.0;    // kg
    double torso_length = 0.3;  // m
    double angle_jitter = 0.8;  // fraction of half the limb spacing
    double torque_limit = 8.0;  // N*m
    double joint_range = 1.0;   // rad, symmetric about rest
    uint64_t projection_seed = 0xEC0;

    int max_joints() const { return max_limbs * max_segments; }
};

class MorphologyDecoder {
public:
    explicit MorphologyDecoder(DecoderConfig cfg = {});

    /// Deterministic genotype -> body map. Returns nullopt (Invalid) for
    /// non-finite z or when the derived limb count rounds to zero.
    std::optional<Morphology> decode(const LatentGenotype& z) const;

    const DecoderConfig& config() const { return cfg_; }
    int feature_count() const { return proj_.rows; }

private:
    DecoderConfig cfg_;
    Matrix proj_;  // feature_count x latent_dim, fixed at construction
};

/// Weighted L2 distance over a fixed-length structural feature vector
/// (branch count, sorted per-limb masses/lengths, total mass, n_eff,
/// mass-bias magnitude). Symmetric, zero iff the features coincide.
double morphology_distance(const Morphology& a, const Morphology& b);

struct EncodeOptions {
    int iterations = 60;
    int population = 16;
    int attempts_per_restart = 3;
    double init_sigma = 0.5;
    double accept_tol = 1e-5;  // per-restart retry threshold
    double warn_tol = 1e-3;    // reconstruction warning threshold
};

struct EncodedPrior {
    LatentPrior prior;
    bool reconstruction_warning = false;
    double reconstruction_distance = 0.0;
    std::vector<LatentGenotype> latents;  // one per restart
};

/// Inverts the decoder by derivative-free search: `restarts` independent
/// CMA-ES minimizations of morphology_distance(decode(z), target) from
/// random starts; the collected best latents define the prior's mean and
/// per-dimension standard deviation (floored at 1e-4).
EncodedPrior encode_by_search(const MorphologyDecoder& decoder, const Morphology& target,
                              int restarts, uint64_t seed, const EncodeOptions& opts = {});

}  // namespace ecomoe
