#pragma once

#include <map>
#include <string>
#include <vector>

#include "ecomoe/decoder.hpp"
#include "ecomoe/demo.hpp"
#include "ecomoe/learn.hpp"

namespace ecomoe {

enum class Method { Baseline, ECoMoE, EvoByDemo };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

/// Full experiment description: task, method, evolution and learning
/// settings, seeds, output location.
struct ExperimentConfig {
    TaskKind task = TaskKind::FlatGround;
    Method method = Method::ECoMoE;
    int experts = 4;
    int generations = 20;
    int pop_size = 64;
    int elites = 4;
    int latent_dim = 16;
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    std::string output_dir = "runs/out";
    int horizon = 500;
    int threads = 0;  // 0: ECOMOE_THREADS or hardware count
    double base_sigma = 1.0;
    bool full_covariance = false;
    int baseline_hidden = 64;
    int critic_hidden = 64;
    bool dump_traj = false;  // write the final best design's trajectory per seed

    PPOConfig ppo;
    PhysicsConfig physics;
    DecoderConfig decoder;
    TaskSpec task_spec;  // derived from task + physics section

    // evo-by-demo
    DemoVariant demo_variant = DemoVariant::CoSteering;
    std::string demo_path;
    int encode_restarts = 128;
    int pretrain_epochs = -1;  // -1: demo default
    bool augment = true;
    EncodeOptions encode;

    void validate() const;
};

/// Sectioned key/value text format ([section] headers, key = value,
/// '#' comments).
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<text>");

/// Echo of the effective configuration, reparseable by parse_config_file.
std::string render_config(const ExperimentConfig& cfg);

/// Rollout-parallelism cap: explicit config, else ECOMOE_THREADS, else
/// the hardware count.
int resolve_threads(int configured);

}  // namespace ecomoe
