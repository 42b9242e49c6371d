#pragma once

#include <string>
#include <vector>

#include "ecomoe/analytics.hpp"
#include "ecomoe/config.hpp"

namespace ecomoe {

/// Shared-across-seeds evo-by-demo artifacts (written once per
/// experiment so resumes never redo the pretraining).
struct ModeArtifacts {
    EvoByDemoMode mode;
    std::string prior_path;
    std::string expert_path;
};

/// Runs one seed end-to-end into dir: records.jsonl (one RunRecord per
/// generation), checkpoint.json after each generation, final policy and
/// distribution snapshots. stop_after >= 0 truncates the run (testing
/// and ops aid); resuming later completes it bit-identically.
void run_seed(const ExperimentConfig& cfg, uint64_t seed, const std::string& dir,
              int stop_after = -1);

/// All seeds plus the analytics bundle and SVG/CSV report. Resumable:
/// finished generations are never recomputed.
void run_experiment(const ExperimentConfig& cfg);

/// Continues an interrupted experiment from its echoed config.
void resume_experiment(const std::string& run_dir);

/// Rebuilds the analytics/report of a finished run directory.
void report_experiment(const std::string& run_dir);

std::vector<GenerationRecord> load_records(const std::string& path);

struct CompareResult {
    double final_a = 0.0;   // final mean cumulative-max fitness, run A
    double final_b = 0.0;
    size_t critic_params_a = 0;
    size_t critic_params_b = 0;
    size_t policy_params_a = 0;
    size_t policy_params_b = 0;
};

/// Paired comparison of two run directories: joint CI plot, pooled-basis
/// PCA traces, stats CSV. Asserts equal critic parameter counts. The
/// fitness direction is reported, not gated.
CompareResult compare_runs(const std::string& dir_a, const std::string& dir_b,
                           const std::string& out_dir);

}  // namespace ecomoe
