#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "ecomoe/harness.hpp"
#include "ecomoe/io.hpp"

using namespace ecomoe;

namespace {

int run_cmd(const std::string& config_path, int64_t seed_override, const std::string& out_override,
            int stop_after, bool dump_traj) {
    ExperimentConfig cfg = parse_config_file(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (seed_override >= 0) cfg.seeds = {static_cast<uint64_t>(seed_override)};
    if (dump_traj) cfg.dump_traj = true;
    if (stop_after >= 0) {
        cfg.validate();
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream(cfg.output_dir + "/config.ini") << render_config(cfg);
        for (uint64_t seed : cfg.seeds)
            run_seed(cfg, seed, cfg.output_dir + "/seed_" + std::to_string(seed), stop_after);
        return 0;
    }
    run_experiment(cfg);
    return 0;
}

int pretrain_cmd(const std::string& demo_path, const std::string& out_dir, int epochs,
                 uint64_t seed, int latent_dim) {
    DemoSpec demo = load_demo(demo_path);
    if (epochs > 0) demo.pretrain_epochs = epochs;

    PretrainOptions opts;
    DecoderConfig dec;
    dec.latent_dim = latent_dim;
    opts.layout.max_joints = dec.max_joints();
    opts.layout.max_bones = 1 + dec.max_joints();
    opts.latent_dim = latent_dim;

    std::filesystem::create_directories(out_dir);
    PretrainResult result = pretrain_expert(demo, demo.sweep, demo.pretrain_epochs, seed, opts);
    save_json_file(out_dir + "/expert.json", expert_to_json(result.expert), 1);
    write_sweep_csv(result.report, out_dir + "/sweep.csv");
    std::cout << "pretrain: selected cell " << result.report.selected_index << " of "
              << result.report.cells.size() << ", expert fitness " << result.expert_fitness
              << " (zero-policy " << result.zero_fitness << ")\n";
    return 0;
}

int encode_demo_cmd(const std::string& demo_path, const std::string& out_file, int restarts,
                    uint64_t seed, int latent_dim, int iterations) {
    DemoSpec demo = load_demo(demo_path);
    DecoderConfig dec;
    dec.latent_dim = latent_dim;
    MorphologyDecoder decoder(dec);
    EncodeOptions opts;
    if (iterations > 0) opts.iterations = iterations;
    EncodedPrior enc = encode_by_search(decoder, demo.morphology, restarts, seed, opts);
    enc.prior.source_demo = demo.name;
    Json j = prior_to_json(enc.prior);
    j["reconstruction_distance"] = enc.reconstruction_distance;
    j["reconstruction_warning"] = enc.reconstruction_warning;
    save_json_file(out_file, j, 1);
    std::cout << "encode-demo: reconstruction distance " << enc.reconstruction_distance
              << (enc.reconstruction_warning ? " (warning: above tolerance)" : "") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ecomoe - co-evolves robot body plans and a shared mixture-of-experts controller"};
    app.require_subcommand(1);

    std::string config_path, out_dir, dir_a, dir_b, demo_path, out_file;
    int64_t seed_override = -1;
    uint64_t seed = 1;
    int stop_after = -1, epochs = -1, restarts = 128, latent_dim = 16, iterations = -1;

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--seed", seed_override, "run a single seed instead of the configured list");
    run->add_option("--out", out_dir, "override the output directory");
    run->add_option("--stop-after", stop_after,
                    "stop after N generations (the run can be resumed later)");
    bool dump_traj = false;
    run->add_flag("--dump-traj", dump_traj, "dump the final best design's trajectory per seed");

    auto* resume = app.add_subcommand("resume", "continue an interrupted experiment");
    resume->add_option("--dir", out_dir, "run directory")->required();

    auto* report = app.add_subcommand("report", "rebuild the analytics report of a run");
    report->add_option("--dir", out_dir, "run directory")->required();

    auto* pretrain = app.add_subcommand("pretrain", "sweep-train an expert on a demo body");
    pretrain->add_option("--demo", demo_path, "demo base path (without .morph.json)")->required();
    pretrain->add_option("--out", out_dir, "output directory")->required();
    pretrain->add_option("--epochs", epochs, "training epochs per sweep cell");
    pretrain->add_option("--seed", seed, "seed");
    pretrain->add_option("--latent-dim", latent_dim, "latent dimension");

    auto* encode = app.add_subcommand("encode-demo", "encode a demo body into a latent prior");
    encode->add_option("--demo", demo_path, "demo base path")->required();
    encode->add_option("--out", out_file, "output prior JSON")->required();
    encode->add_option("--restarts", restarts, "independent searches");
    encode->add_option("--seed", seed, "seed");
    encode->add_option("--latent-dim", latent_dim, "latent dimension");
    encode->add_option("--iterations", iterations, "search iterations per restart");

    auto* compare = app.add_subcommand("compare", "paired comparison of two run directories");
    compare->add_option("--a", dir_a, "first run directory")->required();
    compare->add_option("--b", dir_b, "second run directory")->required();
    compare->add_option("--out", out_file, "output directory (default: <a>/compare)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return run_cmd(config_path, seed_override, out_dir, stop_after, dump_traj);
        if (resume->parsed()) {
            resume_experiment(out_dir);
            return 0;
        }
        if (report->parsed()) {
            report_experiment(out_dir);
            return 0;
        }
        if (pretrain->parsed())
            return pretrain_cmd(demo_path, out_dir, epochs, seed, latent_dim);
        if (encode->parsed())
            return encode_demo_cmd(demo_path, out_file, restarts, seed, latent_dim, iterations);
        if (compare->parsed()) {
            compare_runs(dir_a, dir_b, out_file.empty() ? dir_a + "/compare" : out_file);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
