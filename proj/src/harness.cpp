#include "ecomoe/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ecomoe/io.hpp"
#include "ecomoe/svg.hpp"

namespace fs = std::filesystem;

namespace ecomoe {

namespace {

ObsLayout layout_for(const DecoderConfig& dec) {
    ObsLayout layout;
    layout.max_joints = dec.max_joints();
    layout.max_bones = 1 + dec.max_joints();
    return layout;
}

std::string seed_dir(const ExperimentConfig& cfg, uint64_t seed) {
    return cfg.output_dir + "/seed_" + std::to_string(seed);
}

Json checkpoint_to_json(const EngineState& state) {
    Json prev = Json::array();
    for (const auto& s : state.prev_scored) {
        prev.push_back({{"z", s.genotype.values}, {"score", s.score}, {"valid", s.valid}});
    }
    return Json{{"generation", state.generation},
                {"distribution", distribution_to_json(state.dist)},
                {"policy", policy_to_json(state.policy)},
                {"critic", critic_to_json(state.critic)},
                {"actor_adam", adam_to_json(state.actor_adam)},
                {"critic_adam", adam_to_json(state.critic_adam)},
                {"prev_scored", prev},
                {"fault_count", state.fault_count}};
}

EngineState checkpoint_from_json(const Json& j) {
    EngineState state;
    state.generation = j.at("generation").get<int>();
    state.dist = distribution_from_json(j.at("distribution"));
    state.policy = policy_from_json(j.at("policy"));
    state.critic = critic_from_json(j.at("critic"));
    state.actor_adam = adam_from_json(j.at("actor_adam"));
    state.critic_adam = adam_from_json(j.at("critic_adam"));
    state.fault_count = j.at("fault_count").get<long>();
    for (const auto& js : j.at("prev_scored")) {
        ScoredGenotype s;
        s.genotype.values = js.at("z").get<std::vector<double>>();
        s.score = js.at("score").get<double>();
        s.valid = js.at("valid").get<bool>();
        state.prev_scored.push_back(std::move(s));
    }
    return state;
}

/// Keep only the first n lines of a JSONL file (drops records past the
/// last durable checkpoint).
void truncate_jsonl(const std::string& path, int n) {
    std::ifstream in(path);
    if (!in) return;
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line) && static_cast<int>(lines.size()) < n) lines.push_back(line);
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
}

ModeArtifacts prepare_mode(const ExperimentConfig& cfg, const MorphologyDecoder& decoder) {
    ModeArtifacts art;
    const std::string mode_dir = cfg.output_dir + "/mode";
    art.prior_path = mode_dir + "/prior.json";
    art.expert_path = mode_dir + "/expert.json";
    fs::create_directories(mode_dir);

    const bool need_prior = cfg.demo_variant != DemoVariant::PretrainOnly;
    const bool need_expert = cfg.demo_variant != DemoVariant::PredesignOnly;
    const bool have_prior = fs::exists(art.prior_path);
    const bool have_expert = fs::exists(art.expert_path);

    if ((!need_prior || have_prior) && (!need_expert || have_expert)) {
        art.mode.variant = cfg.demo_variant;
        art.mode.augment = cfg.augment;
        if (need_prior) art.mode.prior = prior_from_json(load_json_file(art.prior_path));
        if (need_expert) art.mode.pretrained = expert_from_json(load_json_file(art.expert_path));
        validate_mode(art.mode);
        return art;
    }

    DemoSpec demo = load_demo(cfg.demo_path);
    BuildModeOptions opts;
    opts.pretrain.layout = layout_for(cfg.decoder);
    opts.pretrain.latent_dim = cfg.latent_dim;
    opts.pretrain.hidden = budget_matched_hidden(
        cfg.method == Method::Baseline ? 1 : cfg.experts, opts.pretrain.layout, cfg.latent_dim,
        cfg.baseline_hidden);
    opts.pretrain.physics = cfg.physics;
    opts.encode = cfg.encode;
    opts.pretrain_epochs = cfg.pretrain_epochs;

    const uint64_t mode_seed = derive_seed(cfg.seeds.front(), 0xEB0Dull);
    art.mode = build_mode(cfg.demo_variant, demo, decoder, cfg.encode_restarts, mode_seed, opts);
    art.mode.augment = cfg.augment;

    if (art.mode.prior) save_json_file(art.prior_path, prior_to_json(*art.mode.prior), 1);
    if (art.mode.pretrained)
        save_json_file(art.expert_path, expert_to_json(*art.mode.pretrained), 1);
    return art;
}

}  // namespace

std::vector<GenerationRecord> load_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeFault("cannot open " + path);
    std::vector<GenerationRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(record_from_json(Json::parse(line)));
    }
    return records;
}

void run_seed(const ExperimentConfig& cfg, uint64_t seed, const std::string& dir,
              int stop_after) {
    fs::create_directories(dir);

    DecoderConfig dec = cfg.decoder;
    dec.latent_dim = cfg.latent_dim;
    MorphologyDecoder decoder(dec);
    const ObsLayout layout = layout_for(dec);
    const int k = cfg.method == Method::Baseline ? 1 : cfg.experts;

    EngineConfig ecfg;
    ecfg.ppo = cfg.ppo;
    ecfg.task = cfg.task_spec;
    ecfg.pop_size = cfg.pop_size;
    ecfg.elites = cfg.elites;
    ecfg.horizon = cfg.horizon;
    ecfg.physics = cfg.physics;
    ecfg.rollout_threads = resolve_threads(cfg.threads);

    const std::string ckpt_path = dir + "/checkpoint.json";
    const std::string records_path = dir + "/records.jsonl";

    EngineState state;
    if (fs::exists(ckpt_path)) {
        state = checkpoint_from_json(load_json_file(ckpt_path));
        if (state.dist.dim != cfg.latent_dim)
            throw ConfigError("checkpoint latent_dim does not match the config");
        if (cfg.method == Method::EvoByDemo) {
            ModeArtifacts art = prepare_mode(cfg, decoder);  // loads, never retrains
            if (art.mode.pretrained) {
                ecfg.augment_fitness = art.mode.augment;
                ecfg.alpha = art.mode.alpha;
            }
        }
        truncate_jsonl(records_path, state.generation);
    } else {
        const int hidden = budget_matched_hidden(k, layout, cfg.latent_dim, cfg.baseline_hidden);
        state.policy = make_policy(k, cfg.latent_dim, layout, hidden, seed);
        state.critic = make_critic(layout.obs_dim(), cfg.latent_dim, cfg.critic_hidden, seed);

        std::optional<LatentPrior> prior;
        if (cfg.method == Method::EvoByDemo) {
            ModeArtifacts art = prepare_mode(cfg, decoder);
            apply_mode(art.mode, state, ecfg);
            if (art.mode.prior) prior = art.mode.prior;
        }
        state.dist =
            init_distribution(cfg.latent_dim, prior, cfg.base_sigma, cfg.full_covariance);
        std::ofstream(records_path, std::ios::trunc);  // start a fresh log
    }

    const int last = stop_after >= 0 ? std::min(stop_after, cfg.generations) : cfg.generations;
    for (int g = state.generation; g < last; ++g) {
        GenerationRecord rec = run_generation(state, ecfg, decoder, seed);
        {
            std::ofstream out(records_path, std::ios::app);
            if (!out) throw RuntimeFault("cannot append to " + records_path);
            out << record_to_json(rec).dump() << '\n';
        }
        save_json_file(ckpt_path, checkpoint_to_json(state));
    }

    save_json_file(dir + "/policy.json", policy_to_json(state.policy), 1);
    save_json_file(dir + "/distribution.json", distribution_to_json(state.dist), 1);

    if (cfg.dump_traj && !state.prev_scored.empty()) {
        const auto order = rank_indices(state.prev_scored);
        const LatentGenotype& best = state.prev_scored[order.front()].genotype;
        if (auto body = decoder.decode(best)) {
            RolloutOptions ro;
            ro.physics = cfg.physics;
            const Trajectory traj = rollout(*body, state.policy, best, cfg.task_spec, cfg.horizon,
                                            derive_seed(seed, kSeedRollout, 0xBE57), ro);
            std::ofstream out(dir + "/best_traj.jsonl");
            for (size_t t = 0; t < traj.states.size(); ++t) {
                const SimState& s = traj.states[t];
                Json bones = Json::array();
                for (size_t i = 0; i < s.position.size(); ++i) {
                    bones.push_back({{"x", s.position[i].x},
                                     {"y", s.position[i].y},
                                     {"angle", s.angle[i]},
                                     {"vx", s.velocity[i].x},
                                     {"vy", s.velocity[i].y},
                                     {"w", s.angular_velocity[i]},
                                     {"contact", static_cast<bool>(s.contact_flags[i])}});
                }
                out << Json{{"t", s.time}, {"bones", bones}}.dump() << '\n';
            }
        }
    }
}

void run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    {
        std::ofstream out(cfg.output_dir + "/config.ini");
        if (!out) throw RuntimeFault("cannot write config echo");
        out << render_config(cfg);
    }

    if (cfg.method == Method::EvoByDemo) {
        DecoderConfig dec = cfg.decoder;
        dec.latent_dim = cfg.latent_dim;
        MorphologyDecoder decoder(dec);
        prepare_mode(cfg, decoder);  // shared artifacts before any seed runs
    }

    for (uint64_t seed : cfg.seeds) run_seed(cfg, seed, seed_dir(cfg, seed));
    report_experiment(cfg.output_dir);
}

void resume_experiment(const std::string& run_dir) {
    ExperimentConfig cfg = parse_config_file(run_dir + "/config.ini");
    cfg.output_dir = run_dir;  // the directory may have been moved
    for (uint64_t seed : cfg.seeds) run_seed(cfg, seed, seed_dir(cfg, seed));
    report_experiment(run_dir);
}

void report_experiment(const std::string& run_dir) {
    ExperimentConfig cfg = parse_config_file(run_dir + "/config.ini");
    cfg.output_dir = run_dir;
    std::vector<std::vector<GenerationRecord>> per_seed;
    for (uint64_t seed : cfg.seeds)
        per_seed.push_back(load_records(seed_dir(cfg, seed) + "/records.jsonl"));
    const AnalyticsBundle bundle = build_analytics(per_seed);
    emit_report(bundle, run_dir + "/report");
}

CompareResult compare_runs(const std::string& dir_a, const std::string& dir_b,
                           const std::string& out_dir) {
    fs::create_directories(out_dir);
    ExperimentConfig cfg_a = parse_config_file(dir_a + "/config.ini");
    ExperimentConfig cfg_b = parse_config_file(dir_b + "/config.ini");
    cfg_a.output_dir = dir_a;
    cfg_b.output_dir = dir_b;

    auto load_all = [](const ExperimentConfig& cfg) {
        std::vector<std::vector<GenerationRecord>> per_seed;
        for (uint64_t seed : cfg.seeds)
            per_seed.push_back(
                load_records(cfg.output_dir + "/seed_" + std::to_string(seed) + "/records.jsonl"));
        return per_seed;
    };
    const auto records_a = load_all(cfg_a);
    const auto records_b = load_all(cfg_b);
    const AnalyticsBundle ba = build_analytics(records_a);
    const AnalyticsBundle bb = build_analytics(records_b);

    CompareResult result;
    result.final_a = ba.cummax_ci.point.back();
    result.final_b = bb.cummax_ci.point.back();

    // parameter parity from the first seed's checkpoints
    auto param_counts = [](const ExperimentConfig& cfg) {
        const std::string path =
            cfg.output_dir + "/seed_" + std::to_string(cfg.seeds.front()) + "/checkpoint.json";
        const Json j = load_json_file(path);
        const MixturePolicy p = policy_from_json(j.at("policy"));
        const Critic c = critic_from_json(j.at("critic"));
        return std::make_pair(total_param_count(p), c.param_count());
    };
    auto [pa, ca] = param_counts(cfg_a);
    auto [pb, cb] = param_counts(cfg_b);
    result.policy_params_a = pa;
    result.policy_params_b = pb;
    result.critic_params_a = ca;
    result.critic_params_b = cb;
    if (ca != cb)
        throw ConfigError("compare: critic parameter counts differ (" + std::to_string(ca) +
                          " vs " + std::to_string(cb) + ")");

    const int gens = std::min(ba.generations, bb.generations);
    std::vector<double> gens_x(gens);
    for (int g = 0; g < gens; ++g) gens_x[g] = g;

    {
        std::ofstream csv(out_dir + "/compare.csv");
        if (!csv) throw RuntimeFault("cannot write compare.csv");
        csv << "gen,a_mean,a_lo,a_hi,b_mean,b_lo,b_hi\n";
        for (int g = 0; g < gens; ++g) {
            csv << g << ',' << format_double(ba.cummax_ci.point[g]) << ','
                << format_double(ba.cummax_ci.lo[g]) << ',' << format_double(ba.cummax_ci.hi[g])
                << ',' << format_double(bb.cummax_ci.point[g]) << ','
                << format_double(bb.cummax_ci.lo[g]) << ',' << format_double(bb.cummax_ci.hi[g])
                << '\n';
        }
    }
    {
        std::ofstream csv(out_dir + "/stats.csv");
        if (!csv) throw RuntimeFault("cannot write stats.csv");
        csv << "quantity,a,b\n";
        csv << "label," << method_name(cfg_a.method) << ',' << method_name(cfg_b.method) << '\n';
        csv << "final_cummax_mean," << format_double(result.final_a) << ','
            << format_double(result.final_b) << '\n';
        for (size_t s = 0; s < ba.cummax_per_seed.size() && s < bb.cummax_per_seed.size(); ++s) {
            csv << "final_cummax_seed" << s << ',' << format_double(ba.cummax_per_seed[s].back())
                << ',' << format_double(bb.cummax_per_seed[s].back()) << '\n';
        }
        csv << "policy_params," << pa << ',' << pb << '\n';
        csv << "critic_params," << ca << ',' << cb << '\n';
        csv << "direction,," << (result.final_b > result.final_a ? "b_higher" : "a_higher")
            << '\n';
    }
    {
        double ymin = 0, ymax = 0;
        for (const AnalyticsBundle* bp : {&ba, &bb}) {
            for (int g = 0; g < gens; ++g) {
                ymin = std::min({ymin, bp->cummax_ci.lo[g]});
                ymax = std::max({ymax, bp->cummax_ci.hi[g]});
            }
        }
        SvgPlot plot(560, 360, "paired fitness comparison");
        plot.set_range(0, gens - 1, ymin, ymax);
        auto head = [&](const CiSeries& s) {
            return std::vector<double>(s.point.begin(), s.point.begin() + gens);
        };
        auto head2 = [&](const std::vector<double>& s) {
            return std::vector<double>(s.begin(), s.begin() + gens);
        };
        plot.band(gens_x, head2(ba.cummax_ci.lo), head2(ba.cummax_ci.hi), "#1f77b4");
        plot.band(gens_x, head2(bb.cummax_ci.lo), head2(bb.cummax_ci.hi), "#d62728");
        plot.line_series(gens_x, head(ba.cummax_ci), "#1f77b4", 2.0);
        plot.line_series(gens_x, head(bb.cummax_ci), "#d62728", 2.0);
        plot.legend({{"A: " + std::string(method_name(cfg_a.method)), "#1f77b4"},
                     {"B: " + std::string(method_name(cfg_b.method)), "#d62728"}});
        std::ofstream svg(out_dir + "/compare.svg");
        svg << plot.render("generation", "cumulative max mean fitness");
    }
    {
        // pooled PCA basis over both runs
        std::vector<std::vector<double>> pool;
        for (const auto* recs : {&records_a, &records_b}) {
            for (const auto& seed_records : *recs) {
                for (const auto& r : seed_records) {
                    pool.push_back(r.mean);
                    for (const auto& z : r.population) pool.push_back(z);
                }
            }
        }
        const PcaProjection pca = pca_project(pool);
        double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
        std::vector<std::vector<std::pair<double, double>>> traces_a, traces_b;
        auto project_all = [&](const std::vector<std::vector<GenerationRecord>>& recs,
                               std::vector<std::vector<std::pair<double, double>>>& out) {
            for (const auto& seed_records : recs) {
                std::vector<std::pair<double, double>> trace;
                for (const auto& r : seed_records) {
                    auto pr = pca.project(r.mean);
                    xmin = std::min(xmin, pr.first);
                    xmax = std::max(xmax, pr.first);
                    ymin = std::min(ymin, pr.second);
                    ymax = std::max(ymax, pr.second);
                    trace.push_back(pr);
                }
                out.push_back(std::move(trace));
            }
        };
        project_all(records_a, traces_a);
        project_all(records_b, traces_b);

        SvgPlot plot(480, 480, "paired latent traces (pooled PCA basis)");
        plot.set_range(xmin - 0.5, xmax + 0.5, ymin - 0.5, ymax + 0.5);
        auto draw = [&](const std::vector<std::vector<std::pair<double, double>>>& traces,
                        const std::string& color) {
            for (const auto& t : traces) {
                std::vector<double> xs, ys;
                for (const auto& [x, y] : t) {
                    xs.push_back(x);
                    ys.push_back(y);
                }
                plot.line_series(xs, ys, color, 1.2);
                plot.marker(xs.front(), ys.front(), "#2ca02c");
                plot.marker(xs.back(), ys.back(), "#000000");
            }
        };
        draw(traces_a, "#1f77b4");
        draw(traces_b, "#d62728");
        std::ofstream svg(out_dir + "/compare_pca.svg");
        svg << plot.render("PC1", "PC2");
    }

    std::cout << "compare: A(" << method_name(cfg_a.method) << ") final=" << result.final_a
              << "  B(" << method_name(cfg_b.method) << ") final=" << result.final_b << "  -> "
              << (result.final_b > result.final_a ? "B higher" : "A higher")
              << " (directional, not gated)\n";
    return result;
}

}  // namespace ecomoe
