#include "ecomoe/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace ecomoe {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

SectionMap parse_sections(const std::string& text, const std::string& origin) {
    SectionMap sections;
    std::string current = "experiment";
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section");
            current = lower(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = lower(trim(line.substr(0, eq)));
        const std::string value = trim(line.substr(eq + 1));
        sections[current][key] = value;
    }
    return sections;
}

class SectionReader {
public:
    SectionReader(const SectionMap& map, std::string section)
        : map_(map), section_(std::move(section)) {}

    bool has(const std::string& key) const {
        auto s = map_.find(section_);
        return s != map_.end() && s->second.count(key) > 0;
    }
    std::string str(const std::string& key, const std::string& dflt) const {
        auto s = map_.find(section_);
        if (s == map_.end()) return dflt;
        auto it = s->second.find(key);
        return it == s->second.end() ? dflt : it->second;
    }
    double num(const std::string& key, double dflt) const {
        if (!has(key)) return dflt;
        const std::string v = str(key, "");
        try {
            return std::stod(v);
        } catch (...) {
            throw ConfigError("config: bad number for " + section_ + "." + key + ": " + v);
        }
    }
    int integer(const std::string& key, int dflt) const {
        return static_cast<int>(num(key, dflt));
    }
    bool boolean(const std::string& key, bool dflt) const {
        if (!has(key)) return dflt;
        const std::string v = lower(str(key, ""));
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("config: bad boolean for " + section_ + "." + key + ": " + v);
    }

private:
    const SectionMap& map_;
    std::string section_;
};

TaskKind task_from_name(const std::string& name) {
    const std::string v = lower(name);
    if (v == "flat" || v == "flatground" || v == "flat_ground") return TaskKind::FlatGround;
    if (v == "upright" || v == "uprightlocomotion") return TaskKind::Upright;
    if (v == "potholes") return TaskKind::Potholes;
    throw ConfigError("unknown task: " + name);
}

const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::FlatGround: return "flat";
        case TaskKind::Upright: return "upright";
        case TaskKind::Potholes: return "potholes";
    }
    return "?";
}

}  // namespace

const char* method_name(Method m) {
    switch (m) {
        case Method::Baseline: return "baseline";
        case Method::ECoMoE: return "ecomoe";
        case Method::EvoByDemo: return "evobydemo";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    const std::string v = lower(name);
    if (v == "baseline") return Method::Baseline;
    if (v == "ecomoe" || v == "eco-moe") return Method::ECoMoE;
    if (v == "evobydemo" || v == "evo-by-demo") return Method::EvoByDemo;
    throw ConfigError("unknown method: " + name);
}

void ExperimentConfig::validate() const {
    if (experts < 1) throw ConfigError("config: experts must be >= 1");
    if (generations < 1) throw ConfigError("config: generations must be >= 1");
    if (pop_size < 2) throw ConfigError("config: pop_size must be >= 2");
    if (elites < 0 || elites > pop_size) throw ConfigError("config: elites out of range");
    if (latent_dim < 1) throw ConfigError("config: latent_dim must be >= 1");
    if (seeds.empty()) throw ConfigError("config: seeds must be nonempty");
    if (horizon < 1) throw ConfigError("config: horizon must be >= 1");
    if (method == Method::Baseline && experts != 1)
        throw ConfigError("config: baseline runs use a single expert");
    if (method == Method::EvoByDemo && demo_path.empty())
        throw ConfigError("config: evobydemo needs a demo path");
    if (method == Method::EvoByDemo && experts < 2)
        throw ConfigError("config: evobydemo needs at least 2 experts");
    if (output_dir.empty()) throw ConfigError("config: output_dir must be set");
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    const SectionMap map = parse_sections(text, origin);
    for (const auto& [name, _] : map) {
        if (name != "experiment" && name != "ppo" && name != "physics" && name != "decoder" &&
            name != "evobydemo")
            throw ConfigError("config: unknown section [" + name + "]");
    }

    ExperimentConfig cfg;
    SectionReader exp(map, "experiment");
    cfg.task = task_from_name(exp.str("task", "flat"));
    cfg.method = method_from_name(exp.str("method", "ecomoe"));
    cfg.experts = exp.integer("experts", cfg.method == Method::Baseline ? 1 : 4);
    cfg.generations = exp.integer("generations", cfg.generations);
    cfg.pop_size = exp.integer("pop_size", cfg.pop_size);
    cfg.elites = exp.integer("elites", cfg.elites);
    cfg.latent_dim = exp.integer("latent_dim", cfg.latent_dim);
    cfg.horizon = exp.integer("horizon", cfg.horizon);
    cfg.threads = exp.integer("threads", cfg.threads);
    cfg.base_sigma = exp.num("base_sigma", cfg.base_sigma);
    cfg.full_covariance = exp.boolean("full_covariance", cfg.full_covariance);
    cfg.baseline_hidden = exp.integer("baseline_hidden", cfg.baseline_hidden);
    cfg.critic_hidden = exp.integer("critic_hidden", cfg.critic_hidden);
    cfg.dump_traj = exp.boolean("dump_traj", cfg.dump_traj);
    cfg.output_dir = exp.str("output_dir", cfg.output_dir);
    if (exp.has("seeds")) {
        cfg.seeds.clear();
        std::istringstream ss(exp.str("seeds", ""));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) cfg.seeds.push_back(std::stoull(tok));
        }
    }

    SectionReader ppo(map, "ppo");
    cfg.ppo.actor_lr = ppo.num("actor_lr", cfg.ppo.actor_lr);
    cfg.ppo.critic_lr = ppo.num("critic_lr", cfg.ppo.critic_lr);
    cfg.ppo.gamma = ppo.num("gamma", cfg.ppo.gamma);
    if (ppo.has("gae_lambda")) {
        const std::string v = lower(ppo.str("gae_lambda", "off"));
        if (v == "off" || v == "none" || v == "not used") cfg.ppo.gae_lambda.reset();
        else cfg.ppo.gae_lambda = std::stod(v);
    }
    cfg.ppo.clip_eps = ppo.num("clip_eps", cfg.ppo.clip_eps);
    cfg.ppo.entropy_weight = ppo.num("entropy_weight", cfg.ppo.entropy_weight);
    cfg.ppo.lambda_div = ppo.num("lambda_div", cfg.ppo.lambda_div);
    cfg.ppo.epochs_per_gen = ppo.integer("epochs", cfg.ppo.epochs_per_gen);
    cfg.ppo.batch_size = ppo.integer("batch_size", cfg.ppo.batch_size);
    cfg.ppo.steps_per_epoch = ppo.integer("steps_per_epoch", cfg.ppo.steps_per_epoch);
    cfg.ppo.normalize_advantages =
        ppo.boolean("normalize_advantages", cfg.ppo.normalize_advantages);

    SectionReader phy(map, "physics");
    cfg.physics.dt = phy.num("dt", cfg.physics.dt);
    cfg.physics.gravity = phy.num("gravity", cfg.physics.gravity);
    cfg.physics.contact_stiffness = phy.num("contact_stiffness", cfg.physics.contact_stiffness);
    cfg.physics.contact_damping = phy.num("contact_damping", cfg.physics.contact_damping);
    cfg.physics.friction = phy.num("friction", cfg.physics.friction);
    cfg.physics.joint_iterations = phy.integer("joint_iterations", cfg.physics.joint_iterations);

    SectionReader dec(map, "decoder");
    cfg.decoder.max_limbs = dec.integer("max_limbs", cfg.decoder.max_limbs);
    cfg.decoder.max_segments = dec.integer("max_segments", cfg.decoder.max_segments);
    cfg.decoder.len_lo = dec.num("len_lo", cfg.decoder.len_lo);
    cfg.decoder.len_hi = dec.num("len_hi", cfg.decoder.len_hi);
    cfg.decoder.mass_lo = dec.num("mass_lo", cfg.decoder.mass_lo);
    cfg.decoder.mass_hi = dec.num("mass_hi", cfg.decoder.mass_hi);
    cfg.decoder.torque_limit = dec.num("torque_limit", cfg.decoder.torque_limit);
    cfg.decoder.latent_dim = cfg.latent_dim;

    SectionReader ebd(map, "evobydemo");
    if (ebd.has("variant")) cfg.demo_variant = variant_from_name(ebd.str("variant", ""));
    cfg.demo_path = ebd.str("demo", cfg.demo_path);
    cfg.encode_restarts = ebd.integer("restarts", cfg.encode_restarts);
    cfg.pretrain_epochs = ebd.integer("pretrain_epochs", cfg.pretrain_epochs);
    cfg.augment = ebd.boolean("augment", cfg.augment);
    cfg.encode.iterations = ebd.integer("encode_iterations", cfg.encode.iterations);
    cfg.encode.population = ebd.integer("encode_population", cfg.encode.population);

    cfg.task_spec = make_task(cfg.task);
    cfg.task_spec.terrain.pothole_width = phy.num("pothole_width", cfg.task_spec.terrain.pothole_width);
    cfg.task_spec.terrain.pothole_depth = phy.num("pothole_depth", cfg.task_spec.terrain.pothole_depth);
    cfg.task_spec.terrain.pothole_spacing =
        phy.num("pothole_spacing", cfg.task_spec.terrain.pothole_spacing);
    cfg.task_spec.upright_height = phy.num("upright_height", cfg.task_spec.upright_height);
    cfg.task_spec.upright_weight = phy.num("upright_weight", cfg.task_spec.upright_weight);

    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string render_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "[experiment]\n";
    out << "task = " << task_name(cfg.task) << "\n";
    out << "method = " << method_name(cfg.method) << "\n";
    out << "experts = " << cfg.experts << "\n";
    out << "generations = " << cfg.generations << "\n";
    out << "pop_size = " << cfg.pop_size << "\n";
    out << "elites = " << cfg.elites << "\n";
    out << "latent_dim = " << cfg.latent_dim << "\n";
    out << "horizon = " << cfg.horizon << "\n";
    out << "threads = " << cfg.threads << "\n";
    out << "base_sigma = " << cfg.base_sigma << "\n";
    out << "full_covariance = " << (cfg.full_covariance ? "true" : "false") << "\n";
    out << "baseline_hidden = " << cfg.baseline_hidden << "\n";
    out << "critic_hidden = " << cfg.critic_hidden << "\n";
    out << "dump_traj = " << (cfg.dump_traj ? "true" : "false") << "\n";
    out << "output_dir = " << cfg.output_dir << "\n";
    out << "seeds = ";
    for (size_t i = 0; i < cfg.seeds.size(); ++i) {
        if (i) out << ",";
        out << cfg.seeds[i];
    }
    out << "\n\n[ppo]\n";
    out << "actor_lr = " << cfg.ppo.actor_lr << "\n";
    out << "critic_lr = " << cfg.ppo.critic_lr << "\n";
    out << "gamma = " << cfg.ppo.gamma << "\n";
    out << "gae_lambda = ";
    if (cfg.ppo.gae_lambda) out << *cfg.ppo.gae_lambda;
    else out << "off";
    out << "\n";
    out << "clip_eps = " << cfg.ppo.clip_eps << "\n";
    out << "entropy_weight = " << cfg.ppo.entropy_weight << "\n";
    out << "lambda_div = " << cfg.ppo.lambda_div << "\n";
    out << "epochs = " << cfg.ppo.epochs_per_gen << "\n";
    out << "batch_size = " << cfg.ppo.batch_size << "\n";
    out << "steps_per_epoch = " << cfg.ppo.steps_per_epoch << "\n";
    out << "normalize_advantages = " << (cfg.ppo.normalize_advantages ? "true" : "false") << "\n";
    out << "\n[physics]\n";
    out << "dt = " << cfg.physics.dt << "\n";
    out << "gravity = " << cfg.physics.gravity << "\n";
    out << "contact_stiffness = " << cfg.physics.contact_stiffness << "\n";
    out << "contact_damping = " << cfg.physics.contact_damping << "\n";
    out << "friction = " << cfg.physics.friction << "\n";
    out << "joint_iterations = " << cfg.physics.joint_iterations << "\n";
    out << "pothole_width = " << cfg.task_spec.terrain.pothole_width << "\n";
    out << "pothole_depth = " << cfg.task_spec.terrain.pothole_depth << "\n";
    out << "pothole_spacing = " << cfg.task_spec.terrain.pothole_spacing << "\n";
    out << "upright_height = " << cfg.task_spec.upright_height << "\n";
    out << "upright_weight = " << cfg.task_spec.upright_weight << "\n";
    out << "\n[decoder]\n";
    out << "max_limbs = " << cfg.decoder.max_limbs << "\n";
    out << "max_segments = " << cfg.decoder.max_segments << "\n";
    out << "len_lo = " << cfg.decoder.len_lo << "\n";
    out << "len_hi = " << cfg.decoder.len_hi << "\n";
    out << "mass_lo = " << cfg.decoder.mass_lo << "\n";
    out << "mass_hi = " << cfg.decoder.mass_hi << "\n";
    out << "torque_limit = " << cfg.decoder.torque_limit << "\n";
    if (cfg.method == Method::EvoByDemo) {
        out << "\n[evobydemo]\n";
        out << "variant = " << variant_name(cfg.demo_variant) << "\n";
        out << "demo = " << cfg.demo_path << "\n";
        out << "restarts = " << cfg.encode_restarts << "\n";
        out << "pretrain_epochs = " << cfg.pretrain_epochs << "\n";
        out << "augment = " << (cfg.augment ? "true" : "false") << "\n";
        out << "encode_iterations = " << cfg.encode.iterations << "\n";
        out << "encode_population = " << cfg.encode.population << "\n";
    }
    return out.str();
}

int resolve_threads(int configured) {
    if (configured > 0) return configured;
    if (const char* env = std::getenv("ECOMOE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace ecomoe
