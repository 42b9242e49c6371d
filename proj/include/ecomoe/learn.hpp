#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecomoe/decoder.hpp"
#include "ecomoe/policy.hpp"
#include "ecomoe/sim.hpp"

namespace ecomoe {

/// Shared value network over (observation, z). Architecture and size are
/// held identical across method variants in any comparison run.
struct Critic {
    Matrix w1, b1, w2, b2, w3, b3;
    int input_dim() const { return w1.rows; }
    size_t param_count() const {
        return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
    }
};

Critic make_critic(int obs_dim, int latent_dim, int hidden, uint64_t seed);
double critic_value(const Critic& c, const std::vector<double>& obs,
                    const std::vector<double>& z);

struct PPOConfig {
    double actor_lr = 6e-5;
    double critic_lr = 6e-5;
    double gamma = 0.9;
    std::optional<double> gae_lambda;  // disengaged: Monte-Carlo returns
    double clip_eps = 0.2;
    double entropy_weight = 0.01;
    double lambda_div = 0.01;
    int epochs_per_gen = 5;
    int batch_size = 128;
    int steps_per_epoch = 40;
    bool normalize_advantages = true;
};

/// Expert-pretraining preset: longer effective horizon and an explicit
/// entropy bonus.
PPOConfig pretrain_ppo_preset();

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long t = 0;
};

struct LossReport {
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double entropy = 0.0;
    double l_div = 0.0;
    double mean_ratio = 1.0;  // importance ratio averaged over the batch
    int steps = 0;
    int skipped = 0;  // non-finite loss steps
};

struct TransitionBatch {
    Matrix obs;      // B x obs_dim
    Matrix z;        // B x D
    Matrix actions;  // B x A
    Matrix mask;     // B x A
    std::vector<double> logp_old;
    std::vector<double> advantage;
    std::vector<double> return_target;
    Matrix div_zs;   // generation design latents for L_div (>= 2 rows to engage)
};

/// One clipped-surrogate gradient step on the actor (exact mixture
/// likelihood ratios, entropy bonus, lambda_div * L_div) and one MSE step
/// on the critic. Frozen experts stay bit-identical. A non-finite loss
/// skips the step and bumps the skip counter.
LossReport ppo_update(MixturePolicy& policy, Critic& critic, AdamState& actor_adam,
                      AdamState& critic_adam, const TransitionBatch& batch,
                      const PPOConfig& cfg);

struct StepTargets {
    std::vector<double> advantage;
    std::vector<double> return_target;
};

/// Monte-Carlo discounted suffix returns (advantage = return - value)
/// when GAE is off; the standard GAE(gamma, lambda) recursion otherwise.
/// The post-horizon value is treated as zero on both routes.
StepTargets returns_and_advantages(const Trajectory& traj, const std::vector<double>& values,
                                   const PPOConfig& cfg);

/// Flat on-policy dataset collected from a set of rollouts.
struct CollectedData {
    Matrix obs, z, actions, mask;
    std::vector<double> logp_old, advantage, return_target;
    int size = 0;
};

CollectedData collect_transitions(const std::vector<Trajectory>& trajs,
                                  const std::vector<const Morphology*>& bodies,
                                  const std::vector<LatentGenotype>& zs,
                                  const MixturePolicy& policy, const Critic& critic,
                                  const PPOConfig& cfg);

TransitionBatch slice_batch(const CollectedData& data, const std::vector<int>& idx,
                            const Matrix& div_zs);

struct CompatibilityScore {
    double value = 0.0;
    LatentGenotype genotype;
    int generation = 0;
};

/// Post-inner-loop gate weight of the frozen expert for genotype z.
/// Errors when no expert is frozen.
CompatibilityScore compatibility(const MixturePolicy& policy, const LatentGenotype& z,
                                 int generation = 0);

/// F~ = F * c_hat^alpha. c_hat outside [0,1] is clamped with a warning.
double augmented_fitness(double f, double c_hat, double alpha);

// --- generation driver ---------------------------------------------------

struct EngineConfig {
    PPOConfig ppo;
    TaskSpec task;
    int pop_size = 64;
    int elites = 4;
    int horizon = 500;
    int rollout_threads = 1;
    PhysicsConfig physics;
    bool augment_fitness = false;  // engaged by evo-by-demo modes with a frozen expert
    double alpha = 2.0;
};

struct EngineState {
    DesignDistribution dist;
    MixturePolicy policy;
    Critic critic;
    AdamState actor_adam, critic_adam;
    std::vector<ScoredGenotype> prev_scored;
    int generation = 0;
    long fault_count = 0;
};

/// One generation's full log line.
struct GenerationRecord {
    int gen = 0;
    std::vector<double> mean;
    std::vector<double> sigma;
    std::vector<double> scores;       // what the evolutionary update consumed
    std::vector<double> fitness_raw;  // sparse F(tau) per design
    std::vector<double> c_hat;        // empty unless augmentation is on
    std::vector<std::vector<double>> gate_weights;  // per design, post inner loop
    std::vector<std::vector<double>> population;    // sampled latents
    std::vector<bool> design_valid;
    LossReport loss;
    double best_n_eff = 0.0;
    double best_mass_bias = 0.0;
    std::vector<std::string> events;  // ordered phase markers
    double wallclock = 0.0;
    bool failed = false;
    int ppo_epochs = 0;
    double first_ratio = 1.0;  // mean importance ratio of the first pass
};

/// Runs one generation: sample (with elites), decode, roll out, exactly
/// n PPO epochs on the collected data, post-inner-loop compatibility and
/// scoring, then a single evolutionary update.
GenerationRecord run_generation(EngineState& state, const EngineConfig& cfg,
                                const MorphologyDecoder& decoder, uint64_t run_seed);

/// Actor-side trainable parameter matrices in stable order (gate first,
/// then non-frozen experts).
std::vector<Matrix*> collect_actor_params(MixturePolicy& policy);
std::vector<Matrix*> collect_critic_params(Critic& critic);

/// Adam with bias correction; state buffers are allocated on first use
/// and validated against the parameter list afterwards.
void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr);

}  // namespace ecomoe
