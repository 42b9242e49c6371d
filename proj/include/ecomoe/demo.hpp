#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecomoe/decoder.hpp"
#include "ecomoe/learn.hpp"

namespace ecomoe {

/// Reward-weight and optimizer grids for expert pretraining. w_move stays
/// fixed at 1.0; learning rates default to the single selected value and
/// widen only when overridden.
struct SweepGrid {
    std::vector<double> w_stand{0.005, 0.01, 0.02};
    std::vector<double> w_height{0.005, 0.01, 0.02};
    std::vector<double> w_act{1e-4, 5e-4};
    std::vector<double> actor_lr{6e-5};
    std::vector<double> critic_lr{6e-5};
    std::vector<std::optional<double>> gae_lambda{0.8, 0.9, 0.95, std::nullopt};

    size_t cell_count() const {
        return w_stand.size() * w_height.size() * w_act.size() * actor_lr.size() *
               critic_lr.size() * gae_lambda.size();
    }
};

struct DemoSpec {
    Morphology morphology;
    std::string name;
    RewardWeights reward_weights;
    PPOConfig pretrain_config;  // pretraining preset by default
    SweepGrid sweep;
    int pretrain_epochs = 300;
    int pretrain_horizon = 500;
    int episodes_per_epoch = 2;
};

/// Loads <base>.morph.json plus the optional <base>.config.json sidecar
/// (reward weights, sweep overrides, budgets).
DemoSpec load_demo(const std::string& base_path);

enum class DemoVariant { PretrainOnly, PredesignOnly, CoSteering };

const char* variant_name(DemoVariant v);
DemoVariant variant_from_name(const std::string& name);

struct EvoByDemoMode {
    DemoVariant variant = DemoVariant::CoSteering;
    double alpha = 2.0;
    std::optional<ExpertParams> pretrained;
    std::optional<LatentPrior> prior;
    bool augment = true;  // fitness augmentation can be switched off
};

/// Mode/field consistency (PretrainOnly needs the expert and no prior,
/// and so on). Throws ConfigError on mismatch.
void validate_mode(const EvoByDemoMode& mode);

struct SweepCell {
    RewardWeights weights;
    double actor_lr = 0.0;
    double critic_lr = 0.0;
    std::optional<double> gae_lambda;
    double mean_return = 0.0;
    bool stable = false;
    bool selected = false;
};

struct SweepReport {
    std::vector<SweepCell> cells;
    int selected_index = -1;
};

struct PretrainResult {
    ExpertParams expert;
    SweepReport report;
    double expert_fitness = 0.0;  // task fitness of the selected expert on the demo
    double zero_fitness = 0.0;    // zero-torque baseline on the demo
};

struct PretrainOptions {
    ObsLayout layout;
    int latent_dim = 16;
    int hidden = 64;
    PhysicsConfig physics;
};

/// Grid search over the sweep: each cell trains a single-expert policy
/// on the demo with the shaped pretraining reward and is scored by mean
/// episodic return. Throws when every cell diverges.
PretrainResult pretrain_expert(const DemoSpec& demo, const SweepGrid& sweep, int budget_epochs,
                               uint64_t seed, const PretrainOptions& opts);

/// CSV report, one row per cell.
void write_sweep_csv(const SweepReport& report, const std::string& path);

struct BuildModeOptions {
    PretrainOptions pretrain;
    EncodeOptions encode;
    int pretrain_epochs = -1;  // -1: use the demo's budget
};

/// Assembles a mode: PredesignOnly/CoSteering encode the demo into a
/// latent prior; PretrainOnly/CoSteering pretrain (and gate) an expert.
EvoByDemoMode build_mode(DemoVariant variant, const DemoSpec& demo,
                         const MorphologyDecoder& decoder, int restarts, uint64_t seed,
                         const BuildModeOptions& opts);

/// Injects the frozen expert at index 0 and routes fitness through the
/// augmentation when one is present. The caller initializes the
/// distribution from mode.prior.
void apply_mode(const EvoByDemoMode& mode, EngineState& state, EngineConfig& cfg);

}  // namespace ecomoe
