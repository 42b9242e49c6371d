#include "ecomoe/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace ecomoe {

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (int i = 0; i < m.rows; ++i) {
        Json row = Json::array();
        for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array()) throw ConfigError("matrix_from_json: expected array");
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(j[i].size()) != cols)
            throw ConfigError("matrix_from_json: ragged rows");
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

Json morphology_to_json(const Morphology& m) {
    Json bones = Json::array();
    for (const auto& b : m.bones) {
        bones.push_back({{"mass", b.mass},
                         {"length", b.length},
                         {"x", b.rest_position.x},
                         {"y", b.rest_position.y},
                         {"angle", b.rest_angle}});
    }
    Json joints = Json::array();
    for (const auto& j : m.joints) {
        joints.push_back({{"parent", j.parent},
                          {"child", j.child},
                          {"lo", j.lo},
                          {"hi", j.hi},
                          {"torque_limit", j.torque_limit},
                          {"ax", j.anchor.x},
                          {"ay", j.anchor.y}});
    }
    return Json{{"bones", bones}, {"joints", joints}, {"root", m.root_index}};
}

Morphology morphology_from_json(const Json& j) {
    Morphology m;
    m.root_index = j.at("root").get<int>();
    for (const auto& jb : j.at("bones")) {
        Bone b;
        b.mass = jb.at("mass").get<double>();
        b.length = jb.at("length").get<double>();
        b.rest_position = {jb.at("x").get<double>(), jb.at("y").get<double>()};
        b.rest_angle = jb.contains("angle") ? jb.at("angle").get<double>()
                                            : std::numeric_limits<double>::quiet_NaN();
        m.bones.push_back(b);
    }
    std::vector<int> parent_of(m.bones.size(), -1);
    for (const auto& jj : j.at("joints")) {
        Joint jt;
        jt.parent = jj.at("parent").get<int>();
        jt.child = jj.at("child").get<int>();
        jt.lo = jj.at("lo").get<double>();
        jt.hi = jj.at("hi").get<double>();
        jt.torque_limit = jj.at("torque_limit").get<double>();
        if (jj.contains("ax") && jj.contains("ay")) {
            jt.anchor = {jj.at("ax").get<double>(), jj.at("ay").get<double>()};
        } else {
            jt.anchor = {std::numeric_limits<double>::quiet_NaN(), 0.0};
        }
        if (jt.child >= 0 && jt.child < static_cast<int>(parent_of.size()))
            parent_of[jt.child] = jt.parent;
        m.joints.push_back(jt);
    }

    // Fill in missing geometry: bone axis from the parent chain, anchors
    // from nearest rod endpoints.
    for (size_t i = 0; i < m.bones.size(); ++i) {
        if (!std::isnan(m.bones[i].rest_angle)) continue;
        if (static_cast<int>(i) == m.root_index || parent_of[i] < 0) {
            m.bones[i].rest_angle = 0.0;
        } else {
            const Vec2 d = m.bones[i].rest_position - m.bones[parent_of[i]].rest_position;
            m.bones[i].rest_angle = std::atan2(d.y, d.x);
        }
    }
    for (auto& jt : m.joints) {
        if (!std::isnan(jt.anchor.x)) continue;
        const Bone& a = m.bones[jt.parent];
        const Bone& b = m.bones[jt.child];
        double best = std::numeric_limits<double>::infinity();
        for (double sa : {-0.5, 0.5}) {
            const Vec2 ea = a.rest_position + rotate({a.length * sa, 0.0}, a.rest_angle);
            for (double sb : {-0.5, 0.5}) {
                const Vec2 eb = b.rest_position + rotate({b.length * sb, 0.0}, b.rest_angle);
                const double d = (ea - eb).norm();
                if (d < best) {
                    best = d;
                    jt.anchor = (ea + eb) * 0.5;
                }
            }
        }
    }
    return m;
}

Json distribution_to_json(const DesignDistribution& d) {
    Json es{{"sigma_g", d.es.sigma_g},
            {"diag_c", d.es.diag_c},
            {"path_sigma", d.es.path_sigma},
            {"path_c", d.es.path_c},
            {"full_cov", d.full_cov}};
    if (d.full_cov) es["cov"] = matrix_to_json(d.es.cov);
    return Json{{"dim", d.dim},
                {"mean", d.mean},
                {"sigma", d.sigma},
                {"generation", d.es.generation},
                {"es_state", es}};
}

DesignDistribution distribution_from_json(const Json& j) {
    DesignDistribution d;
    d.dim = j.at("dim").get<int>();
    d.mean = j.at("mean").get<std::vector<double>>();
    d.sigma = j.at("sigma").get<std::vector<double>>();
    const Json& es = j.at("es_state");
    d.es.sigma_g = es.at("sigma_g").get<double>();
    d.es.diag_c = es.at("diag_c").get<std::vector<double>>();
    d.es.path_sigma = es.at("path_sigma").get<std::vector<double>>();
    d.es.path_c = es.at("path_c").get<std::vector<double>>();
    d.full_cov = es.at("full_cov").get<bool>();
    d.es.generation = j.at("generation").get<int>();
    if (d.full_cov) {
        d.es.cov = matrix_from_json(es.at("cov"));
        SymEig eig = jacobi_eigen_sym(d.es.cov);
        for (double& v : eig.values) v = std::max(v, 1e-20);
        d.es.cov_eigvec = eig.vectors;
        d.es.cov_eigval = eig.values;
    }
    return d;
}

Json expert_to_json(const ExpertParams& e) {
    return Json{{"w1", matrix_to_json(e.w1)}, {"b1", matrix_to_json(e.b1)},
                {"w2", matrix_to_json(e.w2)}, {"b2", matrix_to_json(e.b2)},
                {"w3", matrix_to_json(e.w3)}, {"b3", matrix_to_json(e.b3)},
                {"frozen", e.frozen}};
}

ExpertParams expert_from_json(const Json& j) {
    ExpertParams e;
    e.w1 = matrix_from_json(j.at("w1"));
    e.b1 = matrix_from_json(j.at("b1"));
    e.w2 = matrix_from_json(j.at("w2"));
    e.b2 = matrix_from_json(j.at("b2"));
    e.w3 = matrix_from_json(j.at("w3"));
    e.b3 = matrix_from_json(j.at("b3"));
    e.frozen = j.at("frozen").get<bool>();
    return e;
}

Json policy_to_json(const MixturePolicy& p) {
    Json experts = Json::array();
    for (const auto& e : p.experts) experts.push_back(expert_to_json(e));
    return Json{{"K", p.expert_count()},
                {"D", p.latent_dim},
                {"layout", {{"max_joints", p.layout.max_joints}, {"max_bones", p.layout.max_bones}}},
                {"gate", {{"W", matrix_to_json(p.gate.W)}, {"b", matrix_to_json(p.gate.b)}}},
                {"experts", experts}};
}

MixturePolicy policy_from_json(const Json& j) {
    MixturePolicy p;
    p.latent_dim = j.at("D").get<int>();
    p.layout.max_joints = j.at("layout").at("max_joints").get<int>();
    p.layout.max_bones = j.at("layout").at("max_bones").get<int>();
    p.gate.W = matrix_from_json(j.at("gate").at("W"));
    p.gate.b = matrix_from_json(j.at("gate").at("b"));
    for (const auto& je : j.at("experts")) p.experts.push_back(expert_from_json(je));
    if (j.at("K").get<int>() != p.expert_count())
        throw ConfigError("policy_from_json: K does not match expert list");
    return p;
}

Json critic_to_json(const Critic& c) {
    return Json{{"w1", matrix_to_json(c.w1)}, {"b1", matrix_to_json(c.b1)},
                {"w2", matrix_to_json(c.w2)}, {"b2", matrix_to_json(c.b2)},
                {"w3", matrix_to_json(c.w3)}, {"b3", matrix_to_json(c.b3)}};
}

Critic critic_from_json(const Json& j) {
    Critic c;
    c.w1 = matrix_from_json(j.at("w1"));
    c.b1 = matrix_from_json(j.at("b1"));
    c.w2 = matrix_from_json(j.at("w2"));
    c.b2 = matrix_from_json(j.at("b2"));
    c.w3 = matrix_from_json(j.at("w3"));
    c.b3 = matrix_from_json(j.at("b3"));
    return c;
}

Json adam_to_json(const AdamState& a) {
    return Json{{"m", a.m}, {"v", a.v}, {"t", a.t}};
}

AdamState adam_from_json(const Json& j) {
    AdamState a;
    a.m = j.at("m").get<std::vector<std::vector<double>>>();
    a.v = j.at("v").get<std::vector<std::vector<double>>>();
    a.t = j.at("t").get<long>();
    return a;
}

Json prior_to_json(const LatentPrior& p) {
    return Json{{"mean", p.mean}, {"sigma", p.sigma}, {"source_demo", p.source_demo}};
}

LatentPrior prior_from_json(const Json& j) {
    LatentPrior p;
    p.mean = j.at("mean").get<std::vector<double>>();
    p.sigma = j.at("sigma").get<std::vector<double>>();
    p.source_demo = j.value("source_demo", std::string{});
    return p;
}

Json record_to_json(const GenerationRecord& r) {
    double smin = 0.0, smax = 0.0, smean = 0.0;
    if (!r.sigma.empty()) {
        smin = *std::min_element(r.sigma.begin(), r.sigma.end());
        smax = *std::max_element(r.sigma.begin(), r.sigma.end());
        for (double s : r.sigma) smean += s;
        smean /= static_cast<double>(r.sigma.size());
    }
    std::vector<int> valid_int(r.design_valid.begin(), r.design_valid.end());
    return Json{{"gen", r.gen},
                {"mean", r.mean},
                {"sigma_summary", {{"mean", smean}, {"min", smin}, {"max", smax}}},
                {"sigma", r.sigma},
                {"scores", r.scores},
                {"fitness_raw", r.fitness_raw},
                {"c_hat", r.c_hat},
                {"gate_weights_per_design", r.gate_weights},
                {"population", r.population},
                {"valid", valid_int},
                {"loss_report",
                 {{"actor_loss", r.loss.actor_loss},
                  {"critic_loss", r.loss.critic_loss},
                  {"entropy", r.loss.entropy},
                  {"l_div", r.loss.l_div},
                  {"mean_ratio", r.loss.mean_ratio},
                  {"steps", r.loss.steps},
                  {"skipped", r.loss.skipped}}},
                {"best_n_eff", r.best_n_eff},
                {"best_mass_bias", r.best_mass_bias},
                {"events", r.events},
                {"ppo_epochs", r.ppo_epochs},
                {"first_ratio", r.first_ratio},
                {"failed", r.failed},
                {"wallclock", r.wallclock}};
}

GenerationRecord record_from_json(const Json& j) {
    GenerationRecord r;
    r.gen = j.at("gen").get<int>();
    r.mean = j.at("mean").get<std::vector<double>>();
    r.sigma = j.at("sigma").get<std::vector<double>>();
    r.scores = j.at("scores").get<std::vector<double>>();
    r.fitness_raw = j.at("fitness_raw").get<std::vector<double>>();
    r.c_hat = j.at("c_hat").get<std::vector<double>>();
    r.gate_weights = j.at("gate_weights_per_design").get<std::vector<std::vector<double>>>();
    r.population = j.at("population").get<std::vector<std::vector<double>>>();
    const auto valid_int = j.at("valid").get<std::vector<int>>();
    r.design_valid.assign(valid_int.begin(), valid_int.end());
    const Json& lr = j.at("loss_report");
    r.loss.actor_loss = lr.at("actor_loss").get<double>();
    r.loss.critic_loss = lr.at("critic_loss").get<double>();
    r.loss.entropy = lr.at("entropy").get<double>();
    r.loss.l_div = lr.at("l_div").get<double>();
    r.loss.mean_ratio = lr.at("mean_ratio").get<double>();
    r.loss.steps = lr.at("steps").get<int>();
    r.loss.skipped = lr.at("skipped").get<int>();
    r.best_n_eff = j.at("best_n_eff").get<double>();
    r.best_mass_bias = j.at("best_mass_bias").get<double>();
    r.events = j.at("events").get<std::vector<std::string>>();
    r.ppo_epochs = j.at("ppo_epochs").get<int>();
    r.first_ratio = j.at("first_ratio").get<double>();
    r.failed = j.at("failed").get<bool>();
    r.wallclock = j.at("wallclock").get<double>();
    return r;
}

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFault("cannot open " + path);
    Json j;
    in >> j;
    return j;
}

void save_json_file(const std::string& path, const Json& j, int indent) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw RuntimeFault("cannot write " + tmp);
        out << j.dump(indent);
        if (!out) throw RuntimeFault("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace ecomoe
