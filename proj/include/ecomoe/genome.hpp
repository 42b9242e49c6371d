#pragma once

#include <optional>
#include <vector>

#include "ecomoe/common.hpp"
#include "ecomoe/linalg.hpp"

namespace ecomoe {

/// A latent design vector z. Dimension is fixed per run.
struct LatentGenotype {
    std::vector<double> values;

    int dim() const { return static_cast<int>(values.size()); }
    bool finite() const { return all_finite(values); }
};

/// Demo-derived initialization for the design distribution (componentwise
/// mean and standard deviation of a collection of encoded latents).
struct LatentPrior {
    std::vector<double> mean;
    std::vector<double> sigma;
    std::string source_demo;
};

/// A genotype together with the scalar it is ranked by. Invalid designs
/// (decoder rejection, simulation fault) rank below every valid one.
struct ScoredGenotype {
    LatentGenotype genotype;
    double score = 0.0;
    bool valid = true;
};

/// Evolution-strategy internals: global step size, covariance (diagonal
/// by default, full behind a flag), evolution paths, generation counter.
struct EsState {
    double sigma_g = 1.0;
    std::vector<double> diag_c;       // diagonal of C
    Matrix cov;                       // full C (only when full_cov)
    Matrix cov_eigvec;                // sampling factors of full C
    std::vector<double> cov_eigval;
    std::vector<double> path_sigma;
    std::vector<double> path_c;
    int generation = 0;
};

/// The evolving search distribution N(mean, Sigma) over latent space.
/// `sigma` always mirrors the effective per-dimension standard deviation
/// (sigma_g * sqrt(C_ii)); it is what sampling uses in diagonal mode and
/// what checkpoints serialize.
struct DesignDistribution {
    int dim = 0;
    std::vector<double> mean;
    std::vector<double> sigma;
    bool full_cov = false;
    EsState es;
};

/// Random init: mean = 0, per-dim sigma = base_sigma. Prior init: mean
/// and sigma copied from the prior.
DesignDistribution init_distribution(int dim, const std::optional<LatentPrior>& prior,
                                     double base_sigma, bool full_cov = false);

/// n i.i.d. draws from the distribution. Bit-exact for a given seed.
std::vector<LatentGenotype> sample_population(const DesignDistribution& dist, int n, uint64_t seed);

struct CmaUpdateResult {
    DesignDistribution dist;
    bool skipped = false;  // true when every score was invalid
};

/// Standard rank-mu CMA-ES update (separable variant in diagonal mode)
/// with log-linear recombination weights over the top half. Depends on
/// score ranks only, so any strictly monotone score transform yields a
/// bit-identical update.
CmaUpdateResult cma_update(const DesignDistribution& dist, const std::vector<ScoredGenotype>& scored);

/// Replaces the first k entries of next_pop with the top-k genotypes of
/// prev (score descending, ties broken by lowest index).
std::vector<LatentGenotype> preserve_elites(const std::vector<ScoredGenotype>& prev,
                                            const std::vector<LatentGenotype>& next_pop, int k);

/// Indices of prev sorted best-first (valid before invalid, then score
/// descending, then lowest index). Shared by elitism and reporting.
std::vector<int> rank_indices(const std::vector<ScoredGenotype>& scored);

}  // namespace ecomoe
