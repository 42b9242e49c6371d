#include <doctest.h>

#include <cmath>

#include "ecomoe/genome.hpp"
#include "ecomoe/io.hpp"

using namespace ecomoe;

namespace {

double sphere(const LatentGenotype& z) {
    double acc = 0.0;
    for (double v : z.values) acc += v * v;
    return -acc;
}

std::vector<ScoredGenotype> score_all(const std::vector<LatentGenotype>& pop,
                                      double (*f)(const LatentGenotype&)) {
    std::vector<ScoredGenotype> scored(pop.size());
    for (size_t i = 0; i < pop.size(); ++i) {
        scored[i].genotype = pop[i];
        scored[i].score = f(pop[i]);
    }
    return scored;
}

// Naive (mu/2, mu)-ES with fixed multiplicative step decay. Independent
// convergence yardstick for the sphere runs.
double naive_es_best(int dim, int pop, int gens, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> mean(dim, 1.0);
    double sigma = 1.0;
    double best = -std::numeric_limits<double>::infinity();
    const int mu = pop / 2;
    for (int g = 0; g < gens; ++g) {
        std::vector<std::pair<double, std::vector<double>>> scored;
        for (int i = 0; i < pop; ++i) {
            std::vector<double> x(dim);
            for (int d = 0; d < dim; ++d) x[d] = mean[d] + sigma * rng.normal();
            LatentGenotype z{x};
            scored.emplace_back(sphere(z), std::move(x));
        }
        std::sort(scored.begin(), scored.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        best = std::max(best, scored[0].first);
        std::vector<double> next(dim, 0.0);
        for (int i = 0; i < mu; ++i)
            for (int d = 0; d < dim; ++d) next[d] += scored[i].second[d] / mu;
        mean = next;
        sigma *= 0.96;
    }
    return best;
}

}  // namespace

TEST_CASE("init_distribution without prior zeroes the mean") {
    auto d = init_distribution(4, std::nullopt, 1.0);
    CHECK(d.mean == std::vector<double>{0, 0, 0, 0});
    CHECK(d.sigma == std::vector<double>{1, 1, 1, 1});
    CHECK(d.es.generation == 0);
}

TEST_CASE("init_distribution copies a matching prior") {
    LatentPrior prior;
    prior.mean = {0.5, -0.5};
    prior.sigma = {0.1, 0.2};
    auto d = init_distribution(2, prior, 1.0);
    CHECK(d.mean == prior.mean);
    CHECK(d.sigma[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(d.sigma[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("init_distribution rejects prior dimension mismatch") {
    LatentPrior prior;
    prior.mean = {0.1, 0.2, 0.3};
    prior.sigma = {1, 1, 1};
    CHECK_THROWS_AS(init_distribution(2, prior, 1.0), ConfigError);
}

TEST_CASE("sampling is deterministic and respects degenerate sigma") {
    auto d = init_distribution(3, std::nullopt, 1.0);
    auto a = sample_population(d, 64, 77);
    auto b = sample_population(d, 64, 77);
    CHECK(a.size() == 64);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].values == b[i].values);

    d.sigma = {0.0, 0.0, 0.0};
    d.mean = {1.0, 2.0, 3.0};
    for (const auto& z : sample_population(d, 5, 9)) CHECK(z.values == d.mean);
}

TEST_CASE("cma_update is invariant to strictly monotone score transforms") {
    auto d = init_distribution(6, std::nullopt, 0.7);
    auto pop = sample_population(d, 12, 5);
    auto scored = score_all(pop, sphere);
    auto transformed = scored;
    for (auto& s : transformed) s.score = 2.0 * s.score + 7.0;

    auto u1 = cma_update(d, scored);
    auto u2 = cma_update(d, transformed);
    CHECK(u1.dist.mean == u2.dist.mean);
    CHECK(u1.dist.sigma == u2.dist.sigma);
    CHECK(u1.dist.es.path_sigma == u2.dist.es.path_sigma);
}

TEST_CASE("cma_update with every genotype at the mean leaves the mean fixed") {
    auto d = init_distribution(4, std::nullopt, 0.5);
    d.mean = {1.0, -2.0, 0.25, 3.0};
    std::vector<ScoredGenotype> scored(8);
    for (auto& s : scored) {
        s.genotype.values = d.mean;
        s.score = 1.0;
    }
    auto u = cma_update(d, scored);
    CHECK(u.dist.mean == d.mean);
}

TEST_CASE("cma_update with all scores invalid keeps the distribution") {
    auto d = init_distribution(3, std::nullopt, 1.0);
    auto pop = sample_population(d, 6, 3);
    std::vector<ScoredGenotype> scored(pop.size());
    for (size_t i = 0; i < pop.size(); ++i) {
        scored[i].genotype = pop[i];
        scored[i].valid = false;
    }
    auto u = cma_update(d, scored);
    CHECK(u.skipped);
    CHECK(u.dist.mean == d.mean);
    CHECK(u.dist.sigma == d.sigma);
}

TEST_CASE("cma sphere run reaches 1e-8 and the naive oracle reaches 1e-4") {
    LatentPrior prior;
    prior.mean.assign(8, 1.0);
    prior.sigma.assign(8, 1.0);
    auto d = init_distribution(8, prior, 1.0);
    double best = -std::numeric_limits<double>::infinity();
    double prev_best = best;
    for (int g = 0; g < 200; ++g) {
        auto pop = sample_population(d, 16, derive_seed(11, kSeedPopulation, g));
        auto scored = score_all(pop, sphere);
        for (const auto& s : scored) best = std::max(best, s.score);
        CHECK(best >= prev_best);  // cumulative max is monotone
        prev_best = best;
        d = cma_update(d, scored).dist;
        for (double s : d.sigma) CHECK(s > 0.0);
    }
    CHECK(best >= -1e-8);
    CHECK(naive_es_best(8, 16, 200, 11) >= -1e-4);
}

TEST_CASE("full covariance mode converges on a rotated quadratic") {
    LatentPrior prior;
    prior.mean.assign(4, 1.0);
    prior.sigma.assign(4, 1.0);
    auto d = init_distribution(4, prior, 1.0, /*full_cov=*/true);
    auto corr = [](const LatentGenotype& z) {
        double acc = 0.0;
        for (size_t i = 0; i < z.values.size(); ++i) {
            const double a = z.values[i];
            const double b = z.values[(i + 1) % z.values.size()];
            acc += a * a + 0.8 * a * b;
        }
        return -acc;
    };
    double best = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < 150; ++g) {
        auto pop = sample_population(d, 14, derive_seed(21, kSeedPopulation, g));
        std::vector<ScoredGenotype> scored(pop.size());
        for (size_t i = 0; i < pop.size(); ++i) {
            scored[i].genotype = pop[i];
            scored[i].score = corr(pop[i]);
        }
        for (const auto& s : scored) best = std::max(best, s.score);
        d = cma_update(d, scored).dist;
    }
    CHECK(best >= -1e-6);
}

TEST_CASE("preserve_elites carries the top genotypes verbatim") {
    std::vector<ScoredGenotype> prev(6);
    for (int i = 0; i < 6; ++i) {
        prev[i].genotype.values = {static_cast<double>(i)};
        prev[i].score = i == 3 ? 10.0 : static_cast<double>(i);
    }
    std::vector<LatentGenotype> next(6, LatentGenotype{{-1.0}});

    SUBCASE("k = 0 leaves the population untouched") {
        auto out = preserve_elites(prev, next, 0);
        for (const auto& z : out) CHECK(z.values[0] == -1.0);
    }
    SUBCASE("top-k by score, best first") {
        auto out = preserve_elites(prev, next, 2);
        CHECK(out[0].values[0] == 3.0);   // score 10
        CHECK(out[1].values[0] == 5.0);   // score 5
        CHECK(out[2].values[0] == -1.0);  // rest from next_pop
        CHECK(out.size() == next.size());
    }
    SUBCASE("ties break toward the lowest index") {
        for (auto& s : prev) s.score = 1.0;
        auto out = preserve_elites(prev, next, 3);
        CHECK(out[0].values[0] == 0.0);
        CHECK(out[1].values[0] == 1.0);
        CHECK(out[2].values[0] == 2.0);
    }
    SUBCASE("k beyond the population is a configuration error") {
        CHECK_THROWS_AS(preserve_elites(prev, next, 7), ConfigError);
    }
}

TEST_CASE("distribution checkpoints keep the stable field names and round-trip") {
    LatentPrior prior;
    prior.mean = {0.3, -0.6};
    prior.sigma = {0.5, 0.25};
    auto d = init_distribution(2, prior, 1.0);
    auto pop = sample_population(d, 8, 2);
    d = cma_update(d, score_all(pop, sphere)).dist;

    const Json j = distribution_to_json(d);
    CHECK(j.contains("dim"));
    CHECK(j.contains("mean"));
    CHECK(j.contains("sigma"));
    CHECK(j.contains("generation"));
    CHECK(j.contains("es_state"));
    CHECK(j["generation"].get<int>() == 1);

    const DesignDistribution back = distribution_from_json(j);
    CHECK(back.mean == d.mean);
    CHECK(back.sigma == d.sigma);
    CHECK(back.es.path_sigma == d.es.path_sigma);
    CHECK(back.es.sigma_g == d.es.sigma_g);
}
