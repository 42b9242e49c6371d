#include "ecomoe/genome.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace ecomoe {

namespace {

constexpr double kMinDiagC = 1e-20;

double expected_norm(int dim) {
    // E||N(0,I_n)|| ~= sqrt(n) (1 - 1/(4n) + 1/(21 n^2))
    const double n = static_cast<double>(dim);
    return std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
}

void refresh_sigma_view(DesignDistribution& d) {
    for (int i = 0; i < d.dim; ++i) {
        d.sigma[i] = d.es.sigma_g * std::sqrt(d.es.diag_c[i]);
    }
}

void refresh_full_factors(DesignDistribution& d) {
    SymEig eig = jacobi_eigen_sym(d.es.cov);
    for (double& v : eig.values) v = std::max(v, kMinDiagC);
    d.es.cov_eigvec = eig.vectors;
    d.es.cov_eigval = eig.values;
    for (int i = 0; i < d.dim; ++i) d.es.diag_c[i] = std::max(d.es.cov(i, i), kMinDiagC);
}

}  // namespace

DesignDistribution init_distribution(int dim, const std::optional<LatentPrior>& prior,
                                     double base_sigma, bool full_cov) {
    if (dim < 1) throw ConfigError("init_distribution: dim must be >= 1");
    if (base_sigma <= 0.0) throw ConfigError("init_distribution: base_sigma must be positive");

    DesignDistribution d;
    d.dim = dim;
    d.full_cov = full_cov;
    d.mean.assign(dim, 0.0);
    d.sigma.assign(dim, base_sigma);
    d.es.diag_c.assign(dim, 1.0);
    d.es.path_sigma.assign(dim, 0.0);
    d.es.path_c.assign(dim, 0.0);
    d.es.sigma_g = base_sigma;

    if (prior) {
        if (static_cast<int>(prior->mean.size()) != dim ||
            static_cast<int>(prior->sigma.size()) != dim) {
            throw ConfigError("init_distribution: prior dimension does not match dim");
        }
        d.mean = prior->mean;
        d.sigma = prior->sigma;
        // Split the per-dim stddevs into a global step size (geometric
        // mean) and a well-scaled diagonal C.
        double log_sum = 0.0;
        for (double s : prior->sigma) {
            if (s <= 0.0) throw ConfigError("init_distribution: prior sigma must be positive");
            log_sum += std::log(s);
        }
        d.es.sigma_g = std::exp(log_sum / dim);
        for (int i = 0; i < dim; ++i) {
            const double r = prior->sigma[i] / d.es.sigma_g;
            d.es.diag_c[i] = r * r;
        }
    }

    if (full_cov) {
        d.es.cov = Matrix(dim, dim);
        for (int i = 0; i < dim; ++i) d.es.cov(i, i) = d.es.diag_c[i];
        refresh_full_factors(d);
    }
    refresh_sigma_view(d);
    return d;
}

std::vector<LatentGenotype> sample_population(const DesignDistribution& dist, int n, uint64_t seed) {
    if (n < 1) throw ConfigError("sample_population: n must be >= 1");
    Rng rng(seed);
    std::vector<LatentGenotype> out;
    out.reserve(n);
    for (int s = 0; s < n; ++s) {
        LatentGenotype g;
        g.values.resize(dist.dim);
        if (!dist.full_cov) {
            for (int i = 0; i < dist.dim; ++i) {
                g.values[i] = dist.mean[i] + dist.sigma[i] * rng.normal();
            }
        } else {
            std::vector<double> y(dist.dim);
            for (int i = 0; i < dist.dim; ++i) {
                y[i] = std::sqrt(dist.es.cov_eigval[i]) * rng.normal();
            }
            for (int i = 0; i < dist.dim; ++i) {
                double acc = 0.0;
                for (int j = 0; j < dist.dim; ++j) acc += dist.es.cov_eigvec(i, j) * y[j];
                g.values[i] = dist.mean[i] + dist.es.sigma_g * acc;
            }
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<int> rank_indices(const std::vector<ScoredGenotype>& scored) {
    std::vector<int> idx(scored.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scored[a].valid != scored[b].valid) return scored[a].valid;
        if (scored[a].valid && scored[a].score != scored[b].score)
            return scored[a].score > scored[b].score;
        return a < b;
    });
    return idx;
}

CmaUpdateResult cma_update(const DesignDistribution& dist, const std::vector<ScoredGenotype>& scored) {
    if (scored.size() < 2) throw ConfigError("cma_update: need at least 2 scored genotypes");
    for (const auto& s : scored) {
        if (s.genotype.dim() != dist.dim) throw ConfigError("cma_update: genotype dimension mismatch");
    }

    const bool any_valid = std::any_of(scored.begin(), scored.end(),
                                       [](const ScoredGenotype& s) { return s.valid; });
    if (!any_valid) {
        std::cerr << "[genome] warning: all scores invalid, distribution unchanged\n";
        return {dist, true};
    }

    const int n = dist.dim;
    const int lambda = static_cast<int>(scored.size());
    const int mu = lambda / 2;

    std::vector<double> weights(mu);
    double wsum = 0.0;
    for (int i = 0; i < mu; ++i) {
        weights[i] = std::log(mu + 0.5) - std::log(static_cast<double>(i + 1));
        wsum += weights[i];
    }
    for (double& w : weights) w /= wsum;
    double mu_eff = 0.0;
    for (double w : weights) mu_eff += w * w;
    mu_eff = 1.0 / mu_eff;

    const double nd = static_cast<double>(n);
    const double c_sigma = (mu_eff + 2.0) / (nd + mu_eff + 5.0);
    const double d_sigma =
        1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (nd + 1.0)) - 1.0) + c_sigma;
    const double c_c = (4.0 + mu_eff / nd) / (nd + 4.0 + 2.0 * mu_eff / nd);
    // Separable variant uses faster covariance learning (Ros & Hansen).
    const double sep_scale = dist.full_cov ? 1.0 : (nd + 2.0) / 3.0;
    double c_1 = sep_scale * 2.0 / ((nd + 1.3) * (nd + 1.3) + mu_eff);
    double c_mu = std::min(1.0 - c_1, sep_scale * 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) /
                                          ((nd + 2.0) * (nd + 2.0) + mu_eff));
    c_1 = std::min(c_1, 1.0 - c_mu);
    const double chi_n = expected_norm(n);

    const std::vector<int> order = rank_indices(scored);

    CmaUpdateResult result;
    result.dist = dist;
    DesignDistribution& d = result.dist;
    EsState& es = d.es;

    // Recombination displacement in x-space and whitened y-space.
    std::vector<double> dx(n, 0.0);   // sum_i w_i (x_i - m)
    for (int i = 0; i < mu; ++i) {
        const auto& x = scored[order[i]].genotype.values;
        for (int j = 0; j < n; ++j) dx[j] += weights[i] * (x[j] - dist.mean[j]);
    }

    std::vector<double> y_w(n, 0.0);  // C^{-1/2} dx / sigma_g
    if (!dist.full_cov) {
        for (int j = 0; j < n; ++j) {
            const double scale = es.sigma_g * std::sqrt(es.diag_c[j]);
            y_w[j] = scale > 0.0 ? dx[j] / scale : 0.0;
        }
    } else {
        // y_w = B D^-1 B^T dx / sigma_g
        std::vector<double> proj(n, 0.0);
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += es.cov_eigvec(i, j) * dx[i];
            proj[j] = acc / (es.sigma_g * std::sqrt(es.cov_eigval[j]));
        }
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += es.cov_eigvec(i, j) * proj[j];
            y_w[i] = acc;
        }
    }

    for (int j = 0; j < n; ++j) d.mean[j] = dist.mean[j] + dx[j];

    const double ps_decay = 1.0 - c_sigma;
    const double ps_scale = std::sqrt(c_sigma * (2.0 - c_sigma) * mu_eff);
    double ps_norm_sq = 0.0;
    for (int j = 0; j < n; ++j) {
        es.path_sigma[j] = ps_decay * es.path_sigma[j] + ps_scale * y_w[j];
        ps_norm_sq += es.path_sigma[j] * es.path_sigma[j];
    }
    const double ps_norm = std::sqrt(ps_norm_sq);

    const int g_next = es.generation + 1;
    const double denom = std::sqrt(1.0 - std::pow(1.0 - c_sigma, 2.0 * g_next));
    const bool h_sig = ps_norm / denom / chi_n < 1.4 + 2.0 / (nd + 1.0);

    const double pc_decay = 1.0 - c_c;
    const double pc_scale = h_sig ? std::sqrt(c_c * (2.0 - c_c) * mu_eff) : 0.0;
    for (int j = 0; j < n; ++j) {
        es.path_c[j] = pc_decay * es.path_c[j] + pc_scale * dx[j] / es.sigma_g;
    }
    const double h_corr = (1.0 - (h_sig ? 1.0 : 0.0)) * c_c * (2.0 - c_c);

    if (!dist.full_cov) {
        for (int j = 0; j < n; ++j) {
            double rank_mu = 0.0;
            for (int i = 0; i < mu; ++i) {
                const double yj =
                    (scored[order[i]].genotype.values[j] - dist.mean[j]) / es.sigma_g;
                rank_mu += weights[i] * yj * yj;
            }
            es.diag_c[j] = (1.0 - c_1 - c_mu) * es.diag_c[j] +
                           c_1 * (es.path_c[j] * es.path_c[j] + h_corr * es.diag_c[j]) +
                           c_mu * rank_mu;
            es.diag_c[j] = std::max(es.diag_c[j], kMinDiagC);
        }
    } else {
        Matrix& c = es.cov;
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                double rank_mu = 0.0;
                for (int i = 0; i < mu; ++i) {
                    const auto& x = scored[order[i]].genotype.values;
                    rank_mu += weights[i] * (x[a] - dist.mean[a]) * (x[b] - dist.mean[b]) /
                               (es.sigma_g * es.sigma_g);
                }
                c(a, b) = (1.0 - c_1 - c_mu) * c(a, b) +
                          c_1 * (es.path_c[a] * es.path_c[b] + h_corr * c(a, b)) + c_mu * rank_mu;
            }
        }
        // keep exactly symmetric
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                const double avg = 0.5 * (c(a, b) + c(b, a));
                c(a, b) = avg;
                c(b, a) = avg;
            }
        refresh_full_factors(d);
    }

    es.sigma_g *= std::exp((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0));
    es.generation = g_next;
    refresh_sigma_view(d);
    return result;
}

std::vector<LatentGenotype> preserve_elites(const std::vector<ScoredGenotype>& prev,
                                            const std::vector<LatentGenotype>& next_pop, int k) {
    if (k < 0) throw ConfigError("preserve_elites: k must be >= 0");
    if (k > static_cast<int>(next_pop.size()))
        throw ConfigError("preserve_elites: k exceeds population size");
    if (k > static_cast<int>(prev.size()))
        throw ConfigError("preserve_elites: k exceeds previous population size");

    std::vector<LatentGenotype> out = next_pop;
    const std::vector<int> order = rank_indices(prev);
    for (int i = 0; i < k; ++i) out[i] = prev[order[i]].genotype;
    return out;
}

}  // namespace ecomoe
