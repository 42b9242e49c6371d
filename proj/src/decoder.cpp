#include "ecomoe/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecomoe {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

double lerp01(double lo, double hi, double t01) { return lo + (hi - lo) * t01; }

// Distance feature weights. Frozen: they define the metric used by the
// encoder and all its tests.
constexpr double kWeightBranchCount = 1.0;
constexpr double kWeightLimbMass = 1.0;
constexpr double kWeightLimbLength = 1.0;
constexpr double kWeightTotalMass = 0.5;
constexpr double kWeightNeff = 0.5;
constexpr double kWeightMassBias = 0.5;
constexpr int kFeatureLimbSlots = 6;  // pad limit, matches DecoderConfig::max_limbs

std::vector<double> structure_features(const Morphology& m) {
    std::vector<std::vector<int>> children(m.bones.size());
    for (const auto& j : m.joints) children[j.parent].push_back(j.child);

    // Subtree mass/length per branch hanging off the designated root.
    std::vector<double> branch_mass, branch_len;
    for (int limb_root : children[m.root_index]) {
        double mass = 0.0, len = 0.0;
        std::vector<int> stack{limb_root};
        while (!stack.empty()) {
            const int b = stack.back();
            stack.pop_back();
            mass += m.bones[b].mass;
            len += m.bones[b].length;
            for (int c : children[b]) stack.push_back(c);
        }
        branch_mass.push_back(mass);
        branch_len.push_back(len);
    }
    std::sort(branch_mass.rbegin(), branch_mass.rend());
    std::sort(branch_len.rbegin(), branch_len.rend());
    branch_mass.resize(kFeatureLimbSlots, 0.0);
    branch_len.resize(kFeatureLimbSlots, 0.0);

    const auto metrics = morph_metrics(m);

    std::vector<double> f;
    f.reserve(3 + 2 * kFeatureLimbSlots);
    f.push_back(kWeightBranchCount * static_cast<double>(children[m.root_index].size()));
    for (double bm : branch_mass) f.push_back(kWeightLimbMass * bm);
    for (double bl : branch_len) f.push_back(kWeightLimbLength * bl);
    f.push_back(kWeightTotalMass * total_mass(m));
    f.push_back(kWeightNeff * metrics.n_eff);
    f.push_back(kWeightMassBias * metrics.mass_bias_magnitude);
    return f;
}

}  // namespace

MorphologyDecoder::MorphologyDecoder(DecoderConfig cfg) : cfg_(cfg) {
    if (cfg_.latent_dim < 1) throw ConfigError("decoder: latent_dim must be >= 1");
    if (cfg_.max_limbs < 1 || cfg_.max_segments < 1)
        throw ConfigError("decoder: limb/segment limits must be >= 1");

    const int features =
        1 + cfg_.max_limbs + 2 * cfg_.max_limbs * cfg_.max_segments + cfg_.max_limbs;
    proj_ = Matrix(features, cfg_.latent_dim);
    Rng rng(derive_seed(cfg_.projection_seed, 0xDECull));
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim));
    for (double& w : proj_.data) w = scale * rng.normal();
}

std::optional<Morphology> MorphologyDecoder::decode(const LatentGenotype& z) const {
    if (z.dim() != cfg_.latent_dim) throw ConfigError("decode: genotype dimension mismatch");
    if (!z.finite()) return std::nullopt;

    const int L = cfg_.max_limbs;
    const int S = cfg_.max_segments;
    std::vector<double> t(proj_.rows);
    for (int f = 0; f < proj_.rows; ++f) {
        double acc = 0.0;
        for (int d = 0; d < cfg_.latent_dim; ++d) acc += proj_(f, d) * z.values[d];
        t[f] = std::tanh(acc);
    }
    auto unit = [](double v) { return 0.5 * (v + 1.0); };  // (-1,1) -> (0,1)

    const int idx_limb_count = 0;
    const int idx_seg_count = 1;            // L entries
    const int idx_len = idx_seg_count + L;  // L*S entries
    const int idx_mass = idx_len + L * S;   // L*S entries
    const int idx_angle = idx_mass + L * S; // L entries

    const int limb_count =
        static_cast<int>(std::floor(unit(t[idx_limb_count]) * L + 0.5));
    if (limb_count == 0) return std::nullopt;

    Morphology m;
    m.root_index = 0;
    Bone torso;
    torso.mass = cfg_.torso_mass;
    torso.length = cfg_.torso_length;
    torso.rest_position = {0.0, 0.0};
    torso.rest_angle = 0.0;
    m.bones.push_back(torso);

    const double hub_radius = 0.5 * cfg_.torso_length;
    for (int i = 0; i < limb_count; ++i) {
        const int segs = std::clamp(
            1 + static_cast<int>(std::floor(unit(t[idx_seg_count + i]) * S)), 1, S);
        const double spacing = kTwoPi / limb_count;
        const double angle = spacing * (i + 0.5) +
                             t[idx_angle + i] * cfg_.angle_jitter * 0.5 * spacing;
        const Vec2 dir{std::cos(angle), std::sin(angle)};

        Vec2 inner = dir * hub_radius;
        int parent = 0;
        for (int s = 0; s < segs; ++s) {
            const double len =
                lerp01(cfg_.len_lo, cfg_.len_hi, unit(t[idx_len + i * S + s]));
            const double mass =
                lerp01(cfg_.mass_lo, cfg_.mass_hi, unit(t[idx_mass + i * S + s]));

            Bone b;
            b.mass = mass;
            b.length = len;
            b.rest_angle = angle;
            b.rest_position = inner + dir * (0.5 * len);
            const int child = static_cast<int>(m.bones.size());
            m.bones.push_back(b);

            Joint j;
            j.parent = parent;
            j.child = child;
            j.anchor = inner;
            j.lo = -cfg_.joint_range;
            j.hi = cfg_.joint_range;
            j.torque_limit = cfg_.torque_limit;
            m.joints.push_back(j);

            inner += dir * len;
            parent = child;
        }
    }
    return m;
}

double morphology_distance(const Morphology& a, const Morphology& b) {
    const auto fa = structure_features(a);
    const auto fb = structure_features(b);
    double acc = 0.0;
    for (size_t i = 0; i < fa.size(); ++i) {
        const double d = fa[i] - fb[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

EncodedPrior encode_by_search(const MorphologyDecoder& decoder, const Morphology& target,
                              int restarts, uint64_t seed, const EncodeOptions& opts) {
    if (!morphology_valid(target)) throw ConfigError("encode_by_search: target morphology invalid");
    if (restarts < 2) throw ConfigError("encode_by_search: restarts must be >= 2");

    const int dim = decoder.config().latent_dim;

    auto score_genotype = [&](const LatentGenotype& z) -> std::optional<double> {
        const auto body = decoder.decode(z);
        if (!body) return std::nullopt;
        return morphology_distance(*body, target);
    };

    EncodedPrior out;
    out.latents.reserve(restarts);

    for (int r = 0; r < restarts; ++r) {
        LatentGenotype best_z;
        double best_dist = std::numeric_limits<double>::infinity();

        for (int attempt = 0; attempt < opts.attempts_per_restart; ++attempt) {
            Rng init_rng(derive_seed(seed, kSeedEncode, static_cast<uint64_t>(r) * 97 + attempt));
            LatentPrior start;
            start.mean.resize(dim);
            start.sigma.assign(dim, opts.init_sigma);
            for (double& v : start.mean) v = init_rng.normal();

            DesignDistribution dist = init_distribution(dim, start, 1.0);
            LatentGenotype attempt_best;
            double attempt_dist = std::numeric_limits<double>::infinity();

            for (int it = 0; it < opts.iterations; ++it) {
                const uint64_t pop_seed =
                    derive_seed(seed, kSeedEncode + 100,
                                (static_cast<uint64_t>(r) * opts.attempts_per_restart + attempt) *
                                        static_cast<uint64_t>(opts.iterations) + it);
                auto pop = sample_population(dist, opts.population, pop_seed);
                std::vector<ScoredGenotype> scored(pop.size());
                for (size_t i = 0; i < pop.size(); ++i) {
                    scored[i].genotype = pop[i];
                    const auto d = score_genotype(pop[i]);
                    if (d) {
                        scored[i].score = -*d;  // higher is better
                        if (*d < attempt_dist) {
                            attempt_dist = *d;
                            attempt_best = pop[i];
                        }
                    } else {
                        scored[i].valid = false;
                    }
                }
                auto res = cma_update(dist, scored);
                dist = std::move(res.dist);
                if (attempt_dist < 1e-9) break;
            }

            if (attempt_dist < best_dist) {
                best_dist = attempt_dist;
                best_z = attempt_best;
            }
            if (best_dist <= opts.accept_tol) break;
        }

        if (!best_z.values.empty()) out.latents.push_back(best_z);
    }

    if (out.latents.size() < 2)
        throw RuntimeFault("encode_by_search: fewer than 2 restarts produced a decodable latent");

    const int n = static_cast<int>(out.latents.size());
    out.prior.mean.assign(dim, 0.0);
    out.prior.sigma.assign(dim, 0.0);
    for (const auto& z : out.latents)
        for (int d = 0; d < dim; ++d) out.prior.mean[d] += z.values[d];
    for (double& v : out.prior.mean) v /= n;
    for (const auto& z : out.latents)
        for (int d = 0; d < dim; ++d) {
            const double diff = z.values[d] - out.prior.mean[d];
            out.prior.sigma[d] += diff * diff;
        }
    for (double& s : out.prior.sigma) s = std::max(std::sqrt(s / (n - 1)), 1e-4);

    LatentGenotype mean_z{out.prior.mean};
    const auto body = decoder.decode(mean_z);
    if (body) {
        out.reconstruction_distance = morphology_distance(*body, target);
    } else {
        out.reconstruction_distance = std::numeric_limits<double>::infinity();
    }
    out.reconstruction_warning = !(out.reconstruction_distance <= opts.warn_tol);
    return out;
}

}  // namespace ecomoe
