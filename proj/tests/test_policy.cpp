#include <doctest.h>

#include <cmath>

#include "ecomoe/policy.hpp"

using namespace ecomoe;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

ObsLayout tiny_layout() {
    ObsLayout l;
    l.max_joints = 2;
    l.max_bones = 3;
    return l;
}

std::vector<double> random_vec(int n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

double gaussian_logdens(double a, double mu, double logstd) {
    const double t = (a - mu) * std::exp(-logstd);
    return -0.5 * t * t - logstd - 0.5 * kLog2Pi;
}

}  // namespace

TEST_CASE("gate_forward: uniform at zero parameters, closed form for biased logits") {
    GateParams gate;
    gate.W = Matrix(4, 3);
    gate.b = Matrix(1, 4);
    LatentGenotype z{{0.5, -1.0, 2.0}};
    auto w = gate_forward(gate, z);
    for (double x : w) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));

    GateParams g2;
    g2.W = Matrix(2, 1);
    g2.b = Matrix(1, 2);
    g2.b(0, 0) = std::log(2.0);
    auto w2 = gate_forward(g2, LatentGenotype{{0.0}});
    CHECK(w2[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("gate weights live on the simplex and ignore logit shifts") {
    Rng rng(2);
    GateParams gate;
    gate.W = Matrix(5, 4);
    gate.b = Matrix(1, 5);
    for (double& v : gate.W.data) v = rng.normal();
    for (double& v : gate.b.data) v = rng.normal();

    for (int i = 0; i < 200; ++i) {
        LatentGenotype z{random_vec(4, rng, 2.0)};
        const auto w = gate_forward(gate, z);
        double total = 0.0;
        for (double x : w) {
            CHECK(x > 0.0);
            CHECK(x < 1.0);
            total += x;
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);

        GateParams shifted = gate;
        for (int k = 0; k < 5; ++k) shifted.b(0, k) += 17.5;
        const auto w2 = gate_forward(shifted, z);
        for (int k = 0; k < 5; ++k) CHECK(std::abs(w[k] - w2[k]) <= 1e-12);
    }
}

TEST_CASE("mixture with one expert is exactly the Gaussian log-density") {
    const ObsLayout layout = tiny_layout();
    MixturePolicy p = make_policy(1, 3, layout, 6, 7);
    Rng rng(8);
    const std::vector<double> obs = random_vec(layout.obs_dim(), rng);
    const LatentGenotype z{random_vec(3, rng)};
    const std::vector<double> action{0.3, -0.7};
    const std::vector<double> mask{1.0, 1.0};

    // reproduce the expert head by hand through the same network
    Tape tape;
    PolicyParamRefs refs = register_policy_params(tape, p);
    Matrix obs_m(1, layout.obs_dim());
    for (int i = 0; i < layout.obs_dim(); ++i) obs_m(0, i) = obs[i];
    Ref out = build_expert_forward(tape, refs.experts[0], tape.constant(obs_m));
    const Matrix& head = tape.value(out);

    double expect = 0.0;
    for (int j = 0; j < 2; ++j) {
        const double logstd = std::clamp(head(0, 2 + j), kLogStdFloor, kLogStdCap);
        expect += gaussian_logdens(action[j], head(0, j), logstd);
    }
    CHECK(mixture_logprob(p, obs, z, action, mask) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mixture density integrates to one on a 1-joint grid") {
    ObsLayout layout;
    layout.max_joints = 1;
    layout.max_bones = 2;
    Rng rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        MixturePolicy p = make_policy(4, 2, layout, 5, 100 + trial);
        for (auto& e : p.experts) {
            for (double& v : e.w3.data) v = 0.3 * rng.normal();
            e.b3(0, 0) = rng.normal();          // distinct means
            e.b3(0, 1) = -0.3 + 0.2 * rng.normal();  // moderate stds
        }
        for (double& v : p.gate.b.data) v = rng.normal();

        const std::vector<double> obs = random_vec(layout.obs_dim(), rng, 0.5);
        const LatentGenotype z{random_vec(2, rng)};
        const std::vector<double> mask{1.0};

        const double lo = -40.0, hi = 40.0;
        const int n = 40001;
        const double h = (hi - lo) / (n - 1);
        double integral = 0.0;
        for (int i = 0; i < n; ++i) {
            const double a = lo + h * i;
            const double dens = std::exp(mixture_logprob(p, obs, z, {a}, mask));
            integral += (i == 0 || i == n - 1) ? 0.5 * dens : dens;
        }
        integral *= h;
        CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("a saturated gate reduces the mixture to the selected expert") {
    const ObsLayout layout = tiny_layout();
    MixturePolicy p = make_policy(3, 2, layout, 6, 9);
    p.gate.b(0, 1) = 200.0;  // effectively one-hot on expert 1
    Rng rng(10);
    const std::vector<double> obs = random_vec(layout.obs_dim(), rng);
    const LatentGenotype z{{0.0, 0.0}};
    const std::vector<double> action{0.1, 0.4};
    const std::vector<double> mask{1.0, 1.0};

    MixturePolicy solo = p;
    solo.experts = {p.experts[1]};
    solo.gate.W = Matrix(1, 2);
    solo.gate.b = Matrix(1, 1);
    CHECK(mixture_logprob(p, obs, z, action, mask) ==
          doctest::Approx(mixture_logprob(solo, obs, z, action, mask)).epsilon(1e-6));
}

TEST_CASE("masked joints are excluded from the density and emit zero actions") {
    const ObsLayout layout = tiny_layout();
    MixturePolicy p = make_policy(2, 2, layout, 6, 11);
    Rng rng(12);
    const std::vector<double> obs = random_vec(layout.obs_dim(), rng);
    const LatentGenotype z{{0.3, -0.3}};

    const double lp_masked = mixture_logprob(p, obs, z, {0.5, 99.0}, {1.0, 0.0});
    const double lp_masked2 = mixture_logprob(p, obs, z, {0.5, -99.0}, {1.0, 0.0});
    CHECK(lp_masked == lp_masked2);  // masked dimension cannot matter

    Rng sample_rng(13);
    const auto action = mixture_sample(p, obs, z, {1.0, 0.0}, {8.0, 8.0}, sample_rng);
    CHECK(action[1] == 0.0);
    CHECK(action[0] != 0.0);
}

TEST_CASE("sampling follows the gate distribution and the sigma->0 limit hits the mean") {
    ObsLayout layout;
    layout.max_joints = 1;
    layout.max_bones = 2;
    MixturePolicy p = make_policy(3, 1, layout, 4, 14);
    // deterministic experts with far-apart means identify the selected expert
    const double mus[3] = {-6.0, 0.0, 6.0};
    for (int e = 0; e < 3; ++e) {
        std::fill(p.experts[e].w3.data.begin(), p.experts[e].w3.data.end(), 0.0);
        p.experts[e].b3(0, 0) = mus[e];
        p.experts[e].b3(0, 1) = kLogStdFloor;
    }
    p.gate.b(0, 0) = std::log(0.2);
    p.gate.b(0, 1) = std::log(0.3);
    p.gate.b(0, 2) = std::log(0.5);

    const std::vector<double> obs(layout.obs_dim(), 0.0);
    const LatentGenotype z{{0.0}};
    const auto w = gate_forward(p.gate, z);

    const int n = 100000;
    int counts[3] = {0, 0, 0};
    Rng rng(15);
    for (int i = 0; i < n; ++i) {
        const auto a = mixture_sample(p, obs, z, {1.0}, {8.0}, rng);
        int which = 1;
        if (a[0] < -3.0) which = 0;
        else if (a[0] > 3.0) which = 2;
        ++counts[which];
        // sigma at the floor: the action is essentially the mean
        CHECK(std::abs(a[0] - mus[which]) < 1e-2);
    }
    for (int e = 0; e < 3; ++e) {
        const double freq = static_cast<double>(counts[e]) / n;
        const double sd = std::sqrt(w[e] * (1.0 - w[e]) / n);
        CHECK(std::abs(freq - w[e]) <= 3.0 * sd);
    }
}

TEST_CASE("routing diversity loss: degenerate cases and the closed form") {
    GateParams gate;
    gate.W = Matrix(2, 1);
    gate.b = Matrix(1, 2);

    SUBCASE("identical genotypes give zero") {
        gate.W(0, 0) = 3.0;
        std::vector<LatentGenotype> zs(4, LatentGenotype{{0.7}});
        CHECK(routing_diversity_loss(gate, zs) == 0.0);
    }
    SUBCASE("a constant gate gives zero whatever the genotypes") {
        std::vector<LatentGenotype> zs{{{0.0}}, {{1.0}}, {{-2.0}}};
        CHECK(routing_diversity_loss(gate, zs) == 0.0);
    }
    SUBCASE("single genotype warns and returns zero") {
        std::vector<LatentGenotype> zs{{{0.5}}};
        CHECK(routing_diversity_loss(gate, zs) == 0.0);
    }
    SUBCASE("hand-evaluated softmax pair") {
        gate.W(0, 0) = 10.0;
        gate.W(1, 0) = -10.0;
        std::vector<LatentGenotype> zs{{{0.0}}, {{1.0}}};
        // w(0) = (1/2, 1/2); w(1) = softmax(10, -10)
        const double e = std::exp(20.0);
        const double w1 = e / (e + 1.0);
        const double dx = w1 - 0.5;
        const double expect = -1.0 * std::sqrt(2.0 * dx * dx);
        CHECK(routing_diversity_loss(gate, zs) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(routing_diversity_loss(gate, zs) <= 0.0);
    }
    SUBCASE("always nonpositive on random gates") {
        Rng rng(44);
        for (int t = 0; t < 50; ++t) {
            GateParams g;
            g.W = Matrix(3, 2);
            g.b = Matrix(1, 3);
            for (double& v : g.W.data) v = rng.normal();
            std::vector<LatentGenotype> zs;
            for (int i = 0; i < 5; ++i) zs.push_back(LatentGenotype{random_vec(2, rng)});
            CHECK(routing_diversity_loss(g, zs) <= 0.0);
        }
    }
}

TEST_CASE("freeze_expert replaces parameters and validates shapes") {
    const ObsLayout layout = tiny_layout();
    MixturePolicy p = make_policy(4, 3, layout, 6, 31);
    MixturePolicy donor = make_policy(1, 3, layout, 6, 32);

    freeze_expert(p, 0, donor.experts[0]);
    CHECK(p.experts[0].frozen);
    CHECK(p.experts[0].w1.data == donor.experts[0].w1.data);
    CHECK_FALSE(p.experts[1].frozen);

    MixturePolicy wrong = make_policy(1, 3, layout, 9, 33);  // different hidden width
    CHECK_THROWS_AS(freeze_expert(p, 1, wrong.experts[0]), ConfigError);
    CHECK_THROWS_AS(freeze_expert(p, 7, donor.experts[0]), ConfigError);
}

TEST_CASE("parameter budget: the K=4 mixture never exceeds the K=1 baseline") {
    ObsLayout layout;  // full-size production layout
    const int d = 16;
    const MixturePolicy baseline = make_policy(1, d, layout, budget_matched_hidden(1, layout, d), 1);
    for (int k : {2, 4, 8}) {
        const int hidden = budget_matched_hidden(k, layout, d);
        CHECK(hidden >= 2);
        const MixturePolicy mix = make_policy(k, d, layout, hidden, 1);
        CHECK(total_param_count(mix) <= total_param_count(baseline));
        CHECK(trainable_param_count(mix) == total_param_count(mix));
    }
}

TEST_CASE("training graph log-probabilities match the inference path") {
    const ObsLayout layout = tiny_layout();
    MixturePolicy p = make_policy(3, 2, layout, 6, 77);
    Rng rng(78);
    for (double& v : p.gate.W.data) v = rng.normal();

    const int batch = 5;
    Matrix obs(batch, layout.obs_dim()), zs(batch, 2), act(batch, 2), mask(batch, 2, 1.0);
    for (double& v : obs.data) v = rng.normal();
    for (double& v : zs.data) v = rng.normal();
    for (double& v : act.data) v = 0.5 * rng.normal();
    for (int i = 0; i < batch; ++i) mask(i, 1) = (i % 2) ? 1.0 : 0.0;

    Tape tape;
    PolicyParamRefs refs = register_policy_params(tape, p);
    MixtureGraph g = build_mixture_logprob_graph(tape, p, refs, tape.constant(obs),
                                                 tape.constant(zs), act, mask);
    for (int i = 0; i < batch; ++i) {
        std::vector<double> obs_i(layout.obs_dim()), z_i(2), a_i(2), m_i(2);
        for (int c = 0; c < layout.obs_dim(); ++c) obs_i[c] = obs(i, c);
        for (int c = 0; c < 2; ++c) {
            z_i[c] = zs(i, c);
            a_i[c] = act(i, c);
            m_i[c] = mask(i, c);
        }
        const double reference = mixture_logprob(p, obs_i, LatentGenotype{z_i}, a_i, m_i);
        CHECK(tape.value(g.logp)(i, 0) == doctest::Approx(reference).epsilon(1e-12));
    }
}
