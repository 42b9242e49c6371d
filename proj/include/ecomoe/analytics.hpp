#pragma once

#include <array>
#include <string>
#include <vector>

#include "ecomoe/learn.hpp"

namespace ecomoe {

/// Per-generation population-mean fitness turned into a running max.
/// Nondecreasing by construction. Invalid designs contribute 0.
std::vector<double> cumulative_max_mean_fitness(const std::vector<GenerationRecord>& records);

struct PcaProjection {
    std::vector<double> center;
    std::vector<double> pc1, pc2;
    double eig1 = 0.0, eig2 = 0.0;
    double total_variance = 0.0;
    bool rank_deficient = false;

    std::pair<double, double> project(const std::vector<double>& v) const;
};

/// Top-2 principal components of the pooled latent history (distribution
/// means plus population samples), found by power iteration with
/// deflation. Components are eigenvalue-ordered; the sign convention
/// makes the first nonzero loading positive.
PcaProjection pca_project(const std::vector<std::vector<double>>& rows);

struct UsageView {
    // [generation][expert]; both views are rows on the simplex
    std::vector<std::vector<double>> rank_view;   // weights sorted per design, then averaged
    std::vector<std::vector<double>> index_view;  // averaged per expert index
    std::vector<bool> collapsed;                  // index view max >= 0.95
};

UsageView expert_usage_stats(
    const std::vector<std::vector<std::vector<double>>>& gate_weights_per_gen);

constexpr double kCollapseThreshold = 0.95;

struct CiSeries {
    std::vector<double> point, lo, hi;
};

/// Percentile bootstrap of the across-seed mean, per generation. A single
/// seed degenerates to the point estimate.
CiSeries bootstrap_mean_ci(const std::vector<std::vector<double>>& per_seed_series,
                           int resamples, uint64_t seed);

struct AnalyticsBundle {
    int generations = 0;
    int experts = 0;
    std::vector<std::vector<double>> cummax_per_seed;
    CiSeries cummax_ci;
    PcaProjection pca;
    std::vector<std::vector<std::pair<double, double>>> mean_traces;        // [seed][gen]
    std::vector<std::vector<std::array<double, 3>>> sigma_ellipses;         // rx, ry, angle
    UsageView usage;  // averaged across seeds
    std::vector<std::vector<double>> neff_per_seed, vmag_per_seed;
    CiSeries neff_ci, vmag_ci;
};

AnalyticsBundle build_analytics(const std::vector<std::vector<GenerationRecord>>& per_seed,
                                int resamples = 1000, uint64_t seed = 1234);

/// CSV series plus self-contained SVG charts under dir.
void emit_report(const AnalyticsBundle& bundle, const std::string& dir);

/// Shortest round-trip decimal for doubles (stable golden-file output).
std::string format_double(double v);

}  // namespace ecomoe
