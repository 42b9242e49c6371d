#include "ecomoe/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ecomoe/svg.hpp"

namespace ecomoe {

namespace {

const char* kSeedColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                             "#8c564b", "#e377c2", "#7f7f7f"};

double percentile(std::vector<double> sorted, double q) {
    const size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const size_t idx = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(idx);
    if (idx + 1 >= n) return sorted[n - 1];
    return sorted[idx] * (1.0 - frac) + sorted[idx + 1] * frac;
}

std::ofstream open_file(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFault("cannot write " + path);
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<double> cumulative_max_mean_fitness(const std::vector<GenerationRecord>& records) {
    if (records.empty()) throw ConfigError("cumulative_max_mean_fitness: no records");
    std::vector<double> out;
    out.reserve(records.size());
    double running = -std::numeric_limits<double>::infinity();
    for (const auto& r : records) {
        double mean = 0.0;
        for (double f : r.fitness_raw) mean += f;
        if (!r.fitness_raw.empty()) mean /= static_cast<double>(r.fitness_raw.size());
        running = std::max(running, mean);
        out.push_back(running);
    }
    return out;
}

std::pair<double, double> PcaProjection::project(const std::vector<double>& v) const {
    double a = 0.0, b = 0.0;
    for (size_t i = 0; i < center.size(); ++i) {
        const double c = v[i] - center[i];
        a += c * pc1[i];
        b += c * pc2[i];
    }
    return {a, b};
}

PcaProjection pca_project(const std::vector<std::vector<double>>& rows) {
    if (rows.size() < 2) throw ConfigError("pca_project: need at least 2 history points");
    const int d = static_cast<int>(rows[0].size());
    const int n = static_cast<int>(rows.size());

    PcaProjection p;
    p.center.assign(d, 0.0);
    for (const auto& r : rows)
        for (int i = 0; i < d; ++i) p.center[i] += r[i];
    for (double& c : p.center) c /= n;

    Matrix cov(d, d);
    for (const auto& r : rows) {
        for (int i = 0; i < d; ++i) {
            const double ci = r[i] - p.center[i];
            for (int j = i; j < d; ++j) cov(i, j) += ci * (r[j] - p.center[j]);
        }
    }
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            cov(i, j) /= (n - 1);
            cov(j, i) = cov(i, j);
        }
    for (int i = 0; i < d; ++i) p.total_variance += cov(i, i);

    auto power_iterate = [&](const Matrix& m) {
        std::vector<double> v(d);
        Rng rng(0x9CA5EED);
        for (double& x : v) x = rng.normal();
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;

        double eig = 0.0;
        for (int it = 0; it < 2000; ++it) {
            std::vector<double> w(d, 0.0);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) w[i] += m(i, j) * v[j];
            double wn = 0.0;
            for (double x : w) wn += x * x;
            wn = std::sqrt(wn);
            if (wn < 1e-300) {
                eig = 0.0;
                break;
            }
            double diff = 0.0;
            for (int i = 0; i < d; ++i) {
                w[i] /= wn;
                diff += std::abs(w[i] - v[i]);
            }
            v = w;
            eig = wn;
            if (diff < 1e-13) break;
        }
        return std::make_pair(v, eig);
    };

    auto [v1, e1] = power_iterate(cov);
    Matrix deflated = cov;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) deflated(i, j) -= e1 * v1[i] * v1[j];
    auto [v2, e2] = power_iterate(deflated);

    auto fix_sign = [](std::vector<double>& v) {
        for (double x : v) {
            if (std::abs(x) > 1e-12) {
                if (x < 0.0)
                    for (double& y : v) y = -y;
                return;
            }
        }
    };
    fix_sign(v1);
    fix_sign(v2);

    p.pc1 = v1;
    p.pc2 = v2;
    p.eig1 = e1;
    p.eig2 = e2;
    if (e2 < 1e-12 * std::max(e1, 1.0)) {
        p.rank_deficient = true;
        p.pc2.assign(d, 0.0);
        p.eig2 = 0.0;
    }
    return p;
}

UsageView expert_usage_stats(
    const std::vector<std::vector<std::vector<double>>>& gate_weights_per_gen) {
    UsageView view;
    for (const auto& gen : gate_weights_per_gen) {
        if (gen.empty()) {
            view.rank_view.emplace_back();
            view.index_view.emplace_back();
            view.collapsed.push_back(false);
            continue;
        }
        const int k = static_cast<int>(gen[0].size());
        std::vector<double> rank(k, 0.0), index(k, 0.0);
        for (const auto& w : gen) {
            std::vector<double> sorted = w;
            std::sort(sorted.rbegin(), sorted.rend());
            for (int e = 0; e < k; ++e) {
                rank[e] += sorted[e];
                index[e] += w[e];
            }
        }
        for (int e = 0; e < k; ++e) {
            rank[e] /= static_cast<double>(gen.size());
            index[e] /= static_cast<double>(gen.size());
        }
        const double mx = *std::max_element(index.begin(), index.end());
        view.collapsed.push_back(mx >= kCollapseThreshold);
        view.rank_view.push_back(std::move(rank));
        view.index_view.push_back(std::move(index));
    }
    return view;
}

CiSeries bootstrap_mean_ci(const std::vector<std::vector<double>>& per_seed_series,
                           int resamples, uint64_t seed) {
    if (per_seed_series.empty()) throw ConfigError("bootstrap_mean_ci: no series");
    const int s = static_cast<int>(per_seed_series.size());
    const size_t g = per_seed_series[0].size();
    for (const auto& series : per_seed_series)
        if (series.size() != g) throw ConfigError("bootstrap_mean_ci: ragged series");

    CiSeries out;
    out.point.resize(g);
    out.lo.resize(g);
    out.hi.resize(g);
    Rng rng(derive_seed(seed, kSeedBootstrap));
    for (size_t gen = 0; gen < g; ++gen) {
        double mean = 0.0;
        for (const auto& series : per_seed_series) mean += series[gen];
        mean /= s;
        out.point[gen] = mean;
        if (s == 1) {
            out.lo[gen] = mean;
            out.hi[gen] = mean;
            continue;
        }
        std::vector<double> means(resamples);
        for (int r = 0; r < resamples; ++r) {
            double acc = 0.0;
            for (int i = 0; i < s; ++i)
                acc += per_seed_series[rng.below(static_cast<uint64_t>(s))][gen];
            means[r] = acc / s;
        }
        std::sort(means.begin(), means.end());
        out.lo[gen] = percentile(means, 0.025);
        out.hi[gen] = percentile(means, 0.975);
    }
    return out;
}

AnalyticsBundle build_analytics(const std::vector<std::vector<GenerationRecord>>& per_seed,
                                int resamples, uint64_t seed) {
    if (per_seed.empty() || per_seed[0].empty())
        throw ConfigError("build_analytics: no records");
    AnalyticsBundle b;
    b.generations = static_cast<int>(per_seed[0].size());
    b.experts = per_seed[0][0].gate_weights.empty()
                    ? 0
                    : static_cast<int>(per_seed[0][0].gate_weights[0].size());

    for (const auto& records : per_seed) {
        b.cummax_per_seed.push_back(cumulative_max_mean_fitness(records));
        std::vector<double> neff, vmag;
        for (const auto& r : records) {
            neff.push_back(r.best_n_eff);
            vmag.push_back(r.best_mass_bias);
        }
        b.neff_per_seed.push_back(std::move(neff));
        b.vmag_per_seed.push_back(std::move(vmag));
    }
    b.cummax_ci = bootstrap_mean_ci(b.cummax_per_seed, resamples, seed);
    b.neff_ci = bootstrap_mean_ci(b.neff_per_seed, resamples, seed + 1);
    b.vmag_ci = bootstrap_mean_ci(b.vmag_per_seed, resamples, seed + 2);

    // one PCA basis over the pooled history of every seed
    std::vector<std::vector<double>> pool;
    for (const auto& records : per_seed) {
        for (const auto& r : records) {
            pool.push_back(r.mean);
            for (const auto& z : r.population) pool.push_back(z);
        }
    }
    b.pca = pca_project(pool);
    for (const auto& records : per_seed) {
        std::vector<std::pair<double, double>> trace;
        std::vector<std::array<double, 3>> ellipses;
        for (const auto& r : records) {
            trace.push_back(b.pca.project(r.mean));
            // project diag(sigma^2) onto the 2 components: 2x2 covariance
            double a = 0.0, c = 0.0, cross = 0.0;
            for (size_t i = 0; i < r.sigma.size(); ++i) {
                const double s2 = r.sigma[i] * r.sigma[i];
                a += b.pca.pc1[i] * s2 * b.pca.pc1[i];
                c += b.pca.pc2[i] * s2 * b.pca.pc2[i];
                cross += b.pca.pc1[i] * s2 * b.pca.pc2[i];
            }
            const double tr = a + c;
            const double det = a * c - cross * cross;
            const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
            const double l1 = tr / 2.0 + disc, l2 = std::max(0.0, tr / 2.0 - disc);
            const double angle = 0.5 * std::atan2(2.0 * cross, a - c) * 180.0 / 3.14159265358979;
            ellipses.push_back({std::sqrt(l1), std::sqrt(l2), angle});
        }
        b.mean_traces.push_back(std::move(trace));
        b.sigma_ellipses.push_back(std::move(ellipses));
    }

    // usage averaged across seeds
    std::vector<std::vector<std::vector<double>>> pooled_weights(b.generations);
    for (const auto& records : per_seed) {
        for (int g = 0; g < b.generations; ++g) {
            for (const auto& w : records[g].gate_weights) pooled_weights[g].push_back(w);
        }
    }
    b.usage = expert_usage_stats(pooled_weights);
    return b;
}

void emit_report(const AnalyticsBundle& b, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<double> gens(b.generations);
    for (int g = 0; g < b.generations; ++g) gens[g] = g;

    {
        auto csv = open_file(dir + "/fitness.csv");
        csv << "gen";
        for (size_t s = 0; s < b.cummax_per_seed.size(); ++s) csv << ",seed" << s;
        csv << ",mean,ci_lo,ci_hi\n";
        for (int g = 0; g < b.generations; ++g) {
            csv << g;
            for (const auto& series : b.cummax_per_seed) csv << ',' << format_double(series[g]);
            csv << ',' << format_double(b.cummax_ci.point[g]) << ','
                << format_double(b.cummax_ci.lo[g]) << ',' << format_double(b.cummax_ci.hi[g])
                << '\n';
        }
    }
    {
        double ymin = 0.0, ymax = 0.0;
        for (const auto& s : b.cummax_per_seed)
            for (double v : s) {
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
            }
        SvgPlot plot(560, 360, "cumulative max of population-mean fitness");
        plot.set_range(0, b.generations - 1, ymin, ymax);
        plot.band(gens, b.cummax_ci.lo, b.cummax_ci.hi, "#1f77b4");
        for (size_t s = 0; s < b.cummax_per_seed.size(); ++s)
            plot.line_series(gens, b.cummax_per_seed[s], kSeedColors[s % 8], 1.0);
        plot.line_series(gens, b.cummax_ci.point, "#000000", 2.0);
        open_file(dir + "/fitness.svg") << plot.render("generation", "fitness");
    }

    {
        auto csv = open_file(dir + "/pca.csv");
        csv << "seed,gen,pc1,pc2,ellipse_rx,ellipse_ry,ellipse_angle\n";
        for (size_t s = 0; s < b.mean_traces.size(); ++s) {
            for (int g = 0; g < b.generations; ++g) {
                csv << s << ',' << g << ',' << format_double(b.mean_traces[s][g].first) << ','
                    << format_double(b.mean_traces[s][g].second) << ','
                    << format_double(b.sigma_ellipses[s][g][0]) << ','
                    << format_double(b.sigma_ellipses[s][g][1]) << ','
                    << format_double(b.sigma_ellipses[s][g][2]) << '\n';
            }
        }
    }
    {
        double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
        for (const auto& trace : b.mean_traces)
            for (const auto& [x, y] : trace) {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        SvgPlot plot(480, 480, "latent traces (PCA)");
        plot.set_range(xmin - 0.5, xmax + 0.5, ymin - 0.5, ymax + 0.5);
        for (size_t s = 0; s < b.mean_traces.size(); ++s) {
            std::vector<double> xs, ys;
            for (const auto& [x, y] : b.mean_traces[s]) {
                xs.push_back(x);
                ys.push_back(y);
            }
            const std::string color = kSeedColors[s % 8];
            for (int g = 0; g < b.generations; ++g)
                plot.ellipse(xs[g], ys[g], b.sigma_ellipses[s][g][0], b.sigma_ellipses[s][g][1],
                             b.sigma_ellipses[s][g][2], color, 0.06);
            plot.line_series(xs, ys, color, 1.5);
            plot.marker(xs.front(), ys.front(), "#2ca02c");
            plot.marker(xs.back(), ys.back(), "#000000");
        }
        open_file(dir + "/pca.svg") << plot.render("PC1", "PC2");
    }

    if (b.experts > 0) {
        auto csv = open_file(dir + "/usage.csv");
        csv << "gen,view,expert,weight,collapsed\n";
        for (int g = 0; g < b.generations; ++g) {
            for (int e = 0; e < b.experts; ++e) {
                csv << g << ",rank," << e << ',' << format_double(b.usage.rank_view[g][e]) << ','
                    << (b.usage.collapsed[g] ? 1 : 0) << '\n';
            }
            for (int e = 0; e < b.experts; ++e) {
                csv << g << ",index," << e << ',' << format_double(b.usage.index_view[g][e]) << ','
                    << (b.usage.collapsed[g] ? 1 : 0) << '\n';
            }
        }

        SvgPlot plot(560, 300, "expert usage by index (first/last generation)");
        plot.set_range(-0.5, b.experts - 0.5, 0.0, 1.0);
        for (int e = 0; e < b.experts; ++e) {
            plot.bar(e - 0.18, 0.3, b.usage.index_view.front()[e], "#9ecae1");
            plot.bar(e + 0.18, 0.3, b.usage.index_view.back()[e], "#1f77b4");
        }
        plot.legend({{"gen 0", "#9ecae1"}, {"final", "#1f77b4"}});
        open_file(dir + "/usage.svg") << plot.render("expert index", "mean routing weight");
    }

    {
        auto csv = open_file(dir + "/metrics.csv");
        csv << "gen,neff_mean,neff_lo,neff_hi,vmag_mean,vmag_lo,vmag_hi\n";
        for (int g = 0; g < b.generations; ++g) {
            csv << g << ',' << format_double(b.neff_ci.point[g]) << ','
                << format_double(b.neff_ci.lo[g]) << ',' << format_double(b.neff_ci.hi[g]) << ','
                << format_double(b.vmag_ci.point[g]) << ',' << format_double(b.vmag_ci.lo[g])
                << ',' << format_double(b.vmag_ci.hi[g]) << '\n';
        }

        double ymax = 1.0;
        for (double v : b.neff_ci.hi) ymax = std::max(ymax, v);
        for (double v : b.vmag_ci.hi) ymax = std::max(ymax, v);
        SvgPlot plot(560, 360, "morphological metrics of the best design");
        plot.set_range(0, b.generations - 1, 0.0, ymax);
        plot.band(gens, b.neff_ci.lo, b.neff_ci.hi, "#2ca02c");
        plot.line_series(gens, b.neff_ci.point, "#2ca02c", 2.0);
        plot.band(gens, b.vmag_ci.lo, b.vmag_ci.hi, "#d62728");
        plot.line_series(gens, b.vmag_ci.point, "#d62728", 2.0);
        plot.legend({{"N_eff", "#2ca02c"}, {"|v|", "#d62728"}});
        open_file(dir + "/metrics.svg") << plot.render("generation", "metric value");
    }
}

}  // namespace ecomoe
