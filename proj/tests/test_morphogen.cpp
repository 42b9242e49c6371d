#include <doctest.h>

#include <cmath>

#include "ecomoe/decoder.hpp"
#include "ecomoe/io.hpp"

using namespace ecomoe;

namespace {

Morphology chain3(const std::vector<double>& masses, const std::vector<double>& xs) {
    Morphology m;
    for (size_t i = 0; i < masses.size(); ++i) {
        Bone b;
        b.mass = masses[i];
        b.length = 0.2;
        b.rest_position = {xs[i], 0.0};
        m.bones.push_back(b);
    }
    for (size_t i = 0; i + 1 < masses.size(); ++i) {
        Joint j;
        j.parent = static_cast<int>(i);
        j.child = static_cast<int>(i + 1);
        j.lo = -1;
        j.hi = 1;
        j.torque_limit = 5;
        j.anchor = {(xs[i] + xs[i + 1]) / 2, 0.0};
        m.joints.push_back(j);
    }
    m.root_index = 0;
    return m;
}

LatentGenotype random_z(int dim, Rng& rng) {
    LatentGenotype z;
    z.values.resize(dim);
    for (double& v : z.values) v = rng.normal();
    return z;
}

}  // namespace

TEST_CASE("decode of the zero vector yields the canonical mid-range body") {
    MorphologyDecoder decoder;
    LatentGenotype z;
    z.values.assign(16, 0.0);
    auto body = decoder.decode(z);
    REQUIRE(body.has_value());
    CHECK(morphology_valid(*body));

    // tanh(0) = 0 maps every range to its midpoint: 3 of 6 limbs, 2 of 3
    // segments each, lengths 0.3, masses 1.1
    std::vector<std::vector<int>> children(body->bones.size());
    for (const auto& j : body->joints) children[j.parent].push_back(j.child);
    CHECK(children[0].size() == 3);
    for (size_t i = 1; i < body->bones.size(); ++i) {
        CHECK(body->bones[i].length == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(body->bones[i].mass == doctest::Approx(1.1).epsilon(1e-12));
    }
}

TEST_CASE("decode is deterministic, bit-exact") {
    MorphologyDecoder decoder;
    Rng rng(4);
    auto z = random_z(16, rng);
    auto a = decoder.decode(z);
    auto b = decoder.decode(z);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    REQUIRE(a->bones.size() == b->bones.size());
    for (size_t i = 0; i < a->bones.size(); ++i) {
        CHECK(a->bones[i].mass == b->bones[i].mass);
        CHECK(a->bones[i].rest_position.x == b->bones[i].rest_position.x);
        CHECK(a->bones[i].rest_angle == b->bones[i].rest_angle);
    }
}

TEST_CASE("decode rejects non-finite genotypes") {
    MorphologyDecoder decoder;
    LatentGenotype z;
    z.values.assign(16, 0.0);
    z.values[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(decoder.decode(z).has_value());
}

TEST_CASE("decoded bodies always satisfy the structural invariants (fuzz)") {
    MorphologyDecoder decoder;
    Rng rng(123);
    int valid = 0, invalid = 0;
    for (int i = 0; i < 10000; ++i) {
        auto z = random_z(16, rng);
        auto body = decoder.decode(z);
        if (!body) {
            ++invalid;
            continue;
        }
        ++valid;
        REQUIRE(morphology_valid(*body));
        REQUIRE(static_cast<int>(body->joints.size()) <= decoder.config().max_joints());
    }
    CHECK(valid > 0);
    CHECK(invalid > 0);  // zero-limb rejections do occur under N(0, I)
}

TEST_CASE("root_segment follows the center of mass") {
    SUBCASE("single bone") {
        auto m = chain3({1.0}, {0.0});
        CHECK(root_segment(m) == 0);
    }
    SUBCASE("3-bone chain with a heavy end") {
        // masses (1,1,10) at x = (0,1,2): CoM at 1.75, nearest bone is 2
        auto m = chain3({1, 1, 10}, {0, 1, 2});
        CHECK(root_segment(m) == 2);
    }
    SUBCASE("symmetric body roots at the torso") {
        MorphologyDecoder decoder;
        LatentGenotype z;
        z.values.assign(16, 0.0);
        auto body = decoder.decode(z);
        REQUIRE(body.has_value());
        CHECK(root_segment(*body) == 0);
    }
}

TEST_CASE("effective limb count matches the closed form") {
    SUBCASE("two branches with masses 0.7 and 0.3") {
        Morphology m = chain3({0.1, 0.7, 0.3}, {0.0, -1.0, 1.0});
        // rebuild as a star: joints root->1, root->2
        m.joints[0] = {0, 1, 5.0, -1.0, 1.0, {-0.5, 0.0}};
        m.joints[1] = {0, 2, 5.0, -1.0, 1.0, {0.5, 0.0}};
        const auto r = effective_limb_count(m);
        // q = (0.7, 0.3), sum q^2 = 0.58
        CHECK(r.n_eff == doctest::Approx(1.0 / 0.58).epsilon(1e-4));
        CHECK(r.branch_fractions.size() == 2);
        CHECK(r.branch_fractions[0] + r.branch_fractions[1] == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("four equal branches give 4") {
        MorphologyDecoder decoder;
        Morphology m = morphology_from_json(
            load_json_file(std::string(ECOMOE_SOURCE_DIR) + "/data/demos/radial4_8dof.morph.json"));
        const auto r = effective_limb_count(m);
        CHECK(r.n_eff == doctest::Approx(4.0).epsilon(1e-4));
    }
    SUBCASE("single dominant branch approaches 1") {
        auto m = chain3({1.0, 5.0}, {0.0, 1.0});
        // root is bone 1 (heavy); single branch -> n_eff ~ 1
        const auto r = effective_limb_count(m);
        CHECK(r.n_eff == doctest::Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("single bone clamps to 1 with the degenerate flag") {
        auto m = chain3({1.0}, {0.0});
        const auto r = effective_limb_count(m);
        CHECK(r.n_eff == 1.0);
        CHECK(r.degenerate);
    }
}

TEST_CASE("n_eff is invariant to uniform mass scaling and bounded by branch count") {
    MorphologyDecoder decoder;
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        auto body = decoder.decode(random_z(16, rng));
        if (!body) continue;
        const auto base = effective_limb_count(*body);
        Morphology scaled = *body;
        for (auto& b : scaled.bones) b.mass *= 37.5;
        const auto after = effective_limb_count(scaled);
        CHECK(std::abs(after.n_eff - base.n_eff) <= 1e-6);

        const double branches = static_cast<double>(base.branch_fractions.size());
        CHECK(base.n_eff >= 1.0 - 1e-6);
        CHECK(base.n_eff <= branches + 1e-6);
    }
}

TEST_CASE("mass bias: hand oracle, symmetry, translation invariance") {
    SUBCASE("two equal bones a meter apart") {
        auto m = chain3({1.0, 1.0}, {0.0, 2.0});
        // root = bone 0 or 1? CoM at x=1, equidistant -> lowest index 0
        CHECK(root_segment(m) == 0);
        const auto [v, mag] = mass_bias(m);
        CHECK(v.x == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(v.y == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(mag == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("mirror-symmetric body has zero bias") {
        Morphology m = morphology_from_json(
            load_json_file(std::string(ECOMOE_SOURCE_DIR) + "/data/demos/radial4_8dof.morph.json"));
        const auto [v, mag] = mass_bias(m);
        CHECK(std::abs(v.x) < 1e-12);
        CHECK(std::abs(v.y) < 1e-12);
        CHECK(mag < 1e-12);
    }
    SUBCASE("translation leaves the bias unchanged") {
        MorphologyDecoder decoder;
        Rng rng(9);
        for (int i = 0; i < 100; ++i) {
            auto body = decoder.decode(random_z(16, rng));
            if (!body) continue;
            const auto [v0, m0] = mass_bias(*body);
            Morphology shifted = *body;
            for (auto& b : shifted.bones) b.rest_position += Vec2{13.25, -7.5};
            const auto [v1, m1] = mass_bias(shifted);
            CHECK(std::abs(v0.x - v1.x) <= 1e-12);
            CHECK(std::abs(v0.y - v1.y) <= 1e-12);
            CHECK(std::abs(m0 - m1) <= 1e-12);
        }
    }
}

TEST_CASE("morphology_distance is a pseudometric with fixed-weight sensitivity") {
    MorphologyDecoder decoder;
    Rng rng(31);
    std::vector<Morphology> bodies;
    while (bodies.size() < 12) {
        auto b = decoder.decode(random_z(16, rng));
        if (b) bodies.push_back(*b);
    }
    for (const auto& a : bodies) CHECK(morphology_distance(a, a) == 0.0);
    for (size_t i = 0; i < bodies.size(); ++i)
        for (size_t j = i + 1; j < bodies.size(); ++j)
            CHECK(morphology_distance(bodies[i], bodies[j]) ==
                  morphology_distance(bodies[j], bodies[i]));
    for (int t = 0; t < 60; ++t) {
        const auto& a = bodies[rng.below(bodies.size())];
        const auto& b = bodies[rng.below(bodies.size())];
        const auto& c = bodies[rng.below(bodies.size())];
        CHECK(morphology_distance(a, c) <=
              morphology_distance(a, b) + morphology_distance(b, c) + 1e-12);
    }

    // one perturbed limb mass: distance scales linearly in the perturbation
    Morphology base = bodies[0];
    auto perturb = [&](double delta) {
        Morphology p = base;
        p.bones[1].mass += delta;
        return morphology_distance(base, p);
    };
    const double d1 = perturb(1e-4);
    const double d2 = perturb(2e-4);
    CHECK(d1 > 0.0);
    CHECK(d2 / d1 == doctest::Approx(2.0).epsilon(1e-2));
}

TEST_CASE("encode_by_search inverts decoder-generated targets") {
    DecoderConfig cfg;
    cfg.latent_dim = 8;
    MorphologyDecoder decoder(cfg);
    Rng rng(55);
    int tried = 0, hits = 0;
    while (tried < 3) {
        auto z = random_z(8, rng);
        auto target = decoder.decode(z);
        if (!target) continue;
        ++tried;
        const EncodedPrior enc = encode_by_search(decoder, *target, 8, 1000 + tried);
        LatentGenotype mean_z{enc.prior.mean};
        auto body = decoder.decode(mean_z);
        REQUIRE(body.has_value());
        if (morphology_distance(*body, *target) <= 1e-3) ++hits;
        CHECK(enc.prior.sigma.size() == 8);
        for (double s : enc.prior.sigma) CHECK(s >= 1e-4);
    }
    CHECK(hits >= 2);
}

TEST_CASE("encode_by_search rejects degenerate inputs") {
    MorphologyDecoder decoder;
    LatentGenotype z;
    z.values.assign(16, 0.0);
    auto target = decoder.decode(z);
    REQUIRE(target.has_value());
    CHECK_THROWS_AS(encode_by_search(decoder, *target, 1, 1), ConfigError);

    Morphology broken = *target;
    broken.bones[0].mass = -1.0;
    CHECK_THROWS_AS(encode_by_search(decoder, broken, 8, 1), ConfigError);
}

TEST_CASE("morphology JSON round-trips and infers missing geometry") {
    MorphologyDecoder decoder;
    LatentGenotype z;
    z.values.assign(16, 0.25);
    auto body = decoder.decode(z);
    REQUIRE(body.has_value());

    const Json j = morphology_to_json(*body);
    const Morphology back = morphology_from_json(j);
    CHECK(morphology_valid(back));
    CHECK(morphology_distance(*body, back) == 0.0);

    // strip the optional fields; loader infers angles and anchors
    Json stripped = j;
    for (auto& jb : stripped["bones"]) jb.erase("angle");
    for (auto& jj : stripped["joints"]) {
        jj.erase("ax");
        jj.erase("ay");
    }
    const Morphology inferred = morphology_from_json(stripped);
    CHECK(morphology_valid(inferred));
}
