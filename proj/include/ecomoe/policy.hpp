#pragma once

#include <cstdint>
#include <vector>

#include "ecomoe/autodiff.hpp"
#include "ecomoe/genome.hpp"
#include "ecomoe/morphology.hpp"
#include "ecomoe/sim.hpp"

namespace ecomoe {

// Log-std head clamp. The floor keeps importance ratios finite when the
// optimizer pushes exploration noise toward zero.
constexpr double kLogStdFloor = -5.0;
constexpr double kLogStdCap = 2.0;

/// Fixed padded observation: joint angles, joint velocities, root pose
/// and velocity, per-bone contact flags, joint mask.
struct ObsLayout {
    int max_joints = 18;
    int max_bones = 19;

    int obs_dim() const { return 3 * max_joints + 6 + max_bones; }
};

std::vector<double> build_observation(const Morphology& m, const SimState& state,
                                      const ObsLayout& layout);
std::vector<double> joint_mask(const Morphology& m, const ObsLayout& layout);
std::vector<double> torque_bounds(const Morphology& m, const ObsLayout& layout);

/// Linear gating layer: w = softmax(W z + b).
struct GateParams {
    Matrix W;  // K x D
    Matrix b;  // 1 x K
};

/// One feed-forward expert: obs -> hidden -> hidden -> per-joint action
/// mean and log-std (2 * max_joints outputs), tanh activations.
struct ExpertParams {
    Matrix w1, b1;  // obs_dim x h, 1 x h
    Matrix w2, b2;  // h x h, 1 x h
    Matrix w3, b3;  // h x 2A, 1 x 2A
    bool frozen = false;

    size_t param_count() const {
        return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
    }
};

struct MixturePolicy {
    GateParams gate;
    std::vector<ExpertParams> experts;
    int latent_dim = 0;
    ObsLayout layout;

    int expert_count() const { return static_cast<int>(experts.size()); }
    int action_dim() const { return layout.max_joints; }
};

/// Largest hidden width whose K-expert mixture (plus gate) stays within
/// the single-expert baseline's parameter budget.
int budget_matched_hidden(int k, const ObsLayout& layout, int latent_dim,
                          int baseline_hidden = 64);

MixturePolicy make_policy(int k, int latent_dim, const ObsLayout& layout, int hidden,
                          uint64_t seed);

size_t total_param_count(const MixturePolicy& policy);
size_t trainable_param_count(const MixturePolicy& policy);

/// softmax(W z + b); positive entries summing to 1.
std::vector<double> gate_forward(const GateParams& gate, const LatentGenotype& z);

/// Exact mixture log-density log sum_k w_k N(a; mu_k, diag sigma_k^2)
/// over the unmasked joint dimensions, logsumexp-stabilized.
double mixture_logprob(const MixturePolicy& policy, const std::vector<double>& obs,
                       const LatentGenotype& z, const std::vector<double>& action,
                       const std::vector<double>& mask);

/// Samples expert index from the gate, then the expert's Gaussian.
/// Masked joints emit 0; actions clamp to the per-joint bounds.
std::vector<double> mixture_sample(const MixturePolicy& policy, const std::vector<double>& obs,
                                   const LatentGenotype& z, const std::vector<double>& mask,
                                   const std::vector<double>& bounds, Rng& rng);
std::vector<double> mixture_sample(const MixturePolicy& policy, const std::vector<double>& obs,
                                   const LatentGenotype& z, const Morphology& m, Rng& rng);
std::vector<double> mixture_sample(const MixturePolicy& policy, const std::vector<double>& obs,
                                   const LatentGenotype& z, const Morphology& m, uint64_t seed);

/// L_div = -mean over unordered pairs of ||z_i - z_j|| * ||w(z_i) - w(z_j)||.
/// Always <= 0. Fewer than two genotypes: warns and returns 0.
double routing_diversity_loss(const GateParams& gate, const std::vector<LatentGenotype>& zs);

/// Replaces expert k's parameters and marks them frozen; training leaves
/// them bit-identical from then on.
void freeze_expert(MixturePolicy& policy, int k, const ExpertParams& params);

// --- differentiable forms (training path) -------------------------------

struct ExpertParamRefs {
    Ref w1, b1, w2, b2, w3, b3;
};

struct PolicyParamRefs {
    Ref gate_w, gate_b;
    std::vector<ExpertParamRefs> experts;
};

/// Registers every policy parameter on the tape (frozen experts as
/// frozen leaves).
PolicyParamRefs register_policy_params(Tape& tape, const MixturePolicy& policy);

/// B x K gate logits for a batch of genotypes (rows of zmat).
Ref build_gate_logits(Tape& tape, const PolicyParamRefs& refs, Ref zmat);

/// B x 2A expert head for a batch of observations.
Ref build_expert_forward(Tape& tape, const ExpertParamRefs& refs, Ref obs);

struct MixtureGraph {
    Ref logp;     // B x 1
    Ref entropy;  // 1 x 1: mean joint entropy bound H(k) + sum_k w_k H(a|k)
};

MixtureGraph build_mixture_logprob_graph(Tape& tape, const MixturePolicy& policy,
                                         const PolicyParamRefs& refs, Ref obs, Ref zmat,
                                         const Matrix& actions, const Matrix& mask);

/// Differentiable L_div over the rows of zmat (constants) against the
/// registered gate parameters.
Ref build_routing_diversity_graph(Tape& tape, const PolicyParamRefs& refs, const Matrix& zmat);

}  // namespace ecomoe
