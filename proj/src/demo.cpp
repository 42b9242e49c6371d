#include "ecomoe/demo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "ecomoe/io.hpp"

namespace ecomoe {

namespace {

std::vector<int> shuffled_indices(int n, uint64_t seed) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

struct CellOutcome {
    MixturePolicy policy;
    double mean_return = 0.0;
    bool stable = false;
};

CellOutcome train_cell(const DemoSpec& demo, const RewardWeights& weights, const PPOConfig& ppo,
                       int budget_epochs, uint64_t seed, const PretrainOptions& opts) {
    CellOutcome out;
    out.policy = make_policy(1, opts.latent_dim, opts.layout, opts.hidden,
                             derive_seed(seed, kSeedPretrain, 1));
    Critic critic = make_critic(opts.layout.obs_dim(), opts.latent_dim, 64,
                                derive_seed(seed, kSeedPretrain, 2));
    AdamState actor_adam, critic_adam;

    LatentGenotype z;
    z.values.assign(opts.latent_dim, 0.0);
    TaskSpec task = make_task(TaskKind::FlatGround);

    RolloutOptions ro;
    ro.physics = opts.physics;
    ro.reward = RolloutReward::Pretrain;
    ro.pretrain_weights = weights;

    std::vector<double> epoch_returns;
    epoch_returns.reserve(budget_epochs);
    bool faulted = false;

    for (int epoch = 0; epoch < budget_epochs && !faulted; ++epoch) {
        std::vector<Trajectory> trajs;
        std::vector<const Morphology*> bodies;
        std::vector<LatentGenotype> zs;
        double ret_sum = 0.0;
        for (int e = 0; e < demo.episodes_per_epoch; ++e) {
            Trajectory t = rollout(demo.morphology, out.policy, z, task, demo.pretrain_horizon,
                                   derive_seed(seed, kSeedPretrain,
                                               1000 + static_cast<uint64_t>(epoch) * 100 + e),
                                   ro);
            if (!t.valid) {
                faulted = true;
                break;
            }
            ret_sum += t.dense_return;
            trajs.push_back(std::move(t));
            bodies.push_back(&demo.morphology);
            zs.push_back(z);
        }
        if (faulted) break;
        epoch_returns.push_back(ret_sum / demo.episodes_per_epoch);

        CollectedData data = collect_transitions(trajs, bodies, zs, out.policy, critic, ppo);
        Matrix no_div(0, opts.latent_dim);
        const auto order =
            shuffled_indices(data.size, derive_seed(seed, kSeedPretrain, 5000 + epoch));
        int cursor = 0;
        for (int step = 0; step < ppo.steps_per_epoch; ++step) {
            std::vector<int> idx;
            idx.reserve(ppo.batch_size);
            for (int i = 0; i < ppo.batch_size; ++i) {
                idx.push_back(order[cursor % data.size]);
                ++cursor;
            }
            const LossReport r = ppo_update(out.policy, critic, actor_adam, critic_adam,
                                            slice_batch(data, idx, no_div), ppo);
            if (r.skipped > 0) faulted = true;
        }
    }

    if (epoch_returns.empty() || faulted) {
        out.stable = false;
        out.mean_return = epoch_returns.empty()
                              ? -std::numeric_limits<double>::infinity()
                              : epoch_returns.back();
        return out;
    }

    const int window = std::max(1, static_cast<int>(epoch_returns.size()) / 4);
    double final_window = 0.0;
    for (int i = static_cast<int>(epoch_returns.size()) - window;
         i < static_cast<int>(epoch_returns.size()); ++i)
        final_window += epoch_returns[i];
    final_window /= window;

    double peak = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + window <= epoch_returns.size(); ++i) {
        double acc = 0.0;
        for (int k = 0; k < window; ++k) acc += epoch_returns[i + k];
        peak = std::max(peak, acc / window);
    }

    out.mean_return = final_window;
    // stable: finished without faults and did not collapse off its peak
    out.stable = std::isfinite(final_window) &&
                 (peak <= 0.0 || final_window >= 0.25 * peak);
    return out;
}

}  // namespace

const char* variant_name(DemoVariant v) {
    switch (v) {
        case DemoVariant::PretrainOnly: return "PretrainOnly";
        case DemoVariant::PredesignOnly: return "PredesignOnly";
        case DemoVariant::CoSteering: return "CoSteering";
    }
    return "?";
}

DemoVariant variant_from_name(const std::string& name) {
    std::string low;
    for (char c : name) low.push_back(static_cast<char>(std::tolower(c)));
    if (low == "pretrainonly") return DemoVariant::PretrainOnly;
    if (low == "predesignonly") return DemoVariant::PredesignOnly;
    if (low == "costeering") return DemoVariant::CoSteering;
    throw ConfigError("unknown evo-by-demo variant: " + name);
}

void validate_mode(const EvoByDemoMode& mode) {
    const bool has_expert = mode.pretrained.has_value();
    const bool has_prior = mode.prior.has_value();
    switch (mode.variant) {
        case DemoVariant::PretrainOnly:
            if (!has_expert || has_prior)
                throw ConfigError("PretrainOnly requires a pretrained expert and no prior");
            break;
        case DemoVariant::PredesignOnly:
            if (has_expert || !has_prior)
                throw ConfigError("PredesignOnly requires a prior and no pretrained expert");
            break;
        case DemoVariant::CoSteering:
            if (!has_expert || !has_prior)
                throw ConfigError("CoSteering requires both a pretrained expert and a prior");
            break;
    }
}

DemoSpec load_demo(const std::string& base_path) {
    DemoSpec demo;
    demo.name = base_path.substr(base_path.find_last_of("/\\") + 1);
    demo.morphology = morphology_from_json(load_json_file(base_path + ".morph.json"));
    if (!morphology_valid(demo.morphology))
        throw ConfigError("demo morphology invalid: " + base_path);
    demo.pretrain_config = pretrain_ppo_preset();

    std::ifstream probe(base_path + ".config.json");
    if (probe) {
        const Json cfg = load_json_file(base_path + ".config.json");
        if (cfg.contains("reward_weights")) {
            const Json& w = cfg["reward_weights"];
            demo.reward_weights.w_move = w.value("w_move", demo.reward_weights.w_move);
            demo.reward_weights.w_stand = w.value("w_stand", demo.reward_weights.w_stand);
            demo.reward_weights.w_height = w.value("w_height", demo.reward_weights.w_height);
            demo.reward_weights.w_act = w.value("w_act", demo.reward_weights.w_act);
            demo.reward_weights.eta_cos = w.value("eta_cos", demo.reward_weights.eta_cos);
            demo.reward_weights.h_min = w.value("h_min", demo.reward_weights.h_min);
        }
        if (cfg.contains("sweep")) {
            const Json& s = cfg["sweep"];
            if (s.contains("w_stand")) demo.sweep.w_stand = s["w_stand"].get<std::vector<double>>();
            if (s.contains("w_height"))
                demo.sweep.w_height = s["w_height"].get<std::vector<double>>();
            if (s.contains("w_act")) demo.sweep.w_act = s["w_act"].get<std::vector<double>>();
            if (s.contains("actor_lr"))
                demo.sweep.actor_lr = s["actor_lr"].get<std::vector<double>>();
            if (s.contains("critic_lr"))
                demo.sweep.critic_lr = s["critic_lr"].get<std::vector<double>>();
            if (s.contains("gae_lambda")) {
                demo.sweep.gae_lambda.clear();
                for (const auto& v : s["gae_lambda"]) {
                    if (v.is_null()) demo.sweep.gae_lambda.push_back(std::nullopt);
                    else demo.sweep.gae_lambda.push_back(v.get<double>());
                }
            }
        }
        demo.pretrain_epochs = cfg.value("pretrain_epochs", demo.pretrain_epochs);
        demo.pretrain_horizon = cfg.value("pretrain_horizon", demo.pretrain_horizon);
        demo.episodes_per_epoch = cfg.value("episodes_per_epoch", demo.episodes_per_epoch);
    }
    return demo;
}

PretrainResult pretrain_expert(const DemoSpec& demo, const SweepGrid& sweep, int budget_epochs,
                               uint64_t seed, const PretrainOptions& opts) {
    if (!morphology_valid(demo.morphology)) throw ConfigError("pretrain_expert: demo invalid");
    if (static_cast<int>(demo.morphology.joints.size()) > opts.layout.max_joints)
        throw ConfigError("pretrain_expert: demo exceeds the policy pad limits");

    PretrainResult result;
    int cell_index = 0;
    int best_index = -1;
    double best_return = -std::numeric_limits<double>::infinity();
    MixturePolicy best_policy;

    // w_move stays fixed at 1.0 in every cell
    for (double ws : sweep.w_stand)
        for (double wh : sweep.w_height)
            for (double wa : sweep.w_act)
                for (double alr : sweep.actor_lr)
                    for (double clr : sweep.critic_lr)
                        for (const auto& lam : sweep.gae_lambda) {
                            SweepCell cell;
                            cell.weights = demo.reward_weights;
                            cell.weights.w_move = 1.0;
                            cell.weights.w_stand = ws;
                            cell.weights.w_height = wh;
                            cell.weights.w_act = wa;
                            cell.actor_lr = alr;
                            cell.critic_lr = clr;
                            cell.gae_lambda = lam;

                            PPOConfig ppo = demo.pretrain_config;
                            ppo.actor_lr = alr;
                            ppo.critic_lr = clr;
                            ppo.gae_lambda = lam;

                            CellOutcome outcome =
                                train_cell(demo, cell.weights, ppo, budget_epochs,
                                           derive_seed(seed, kSeedPretrain,
                                                       static_cast<uint64_t>(cell_index)),
                                           opts);
                            cell.mean_return = outcome.mean_return;
                            cell.stable = outcome.stable;
                            result.report.cells.push_back(cell);

                            if (outcome.stable && outcome.mean_return > best_return) {
                                best_return = outcome.mean_return;
                                best_index = cell_index;
                                best_policy = std::move(outcome.policy);
                            }
                            ++cell_index;
                        }

    if (best_index < 0) throw RuntimeFault("pretrain_expert: every sweep cell diverged");
    result.report.selected_index = best_index;
    result.report.cells[best_index].selected = true;
    result.expert = best_policy.experts[0];

    // regression gate inputs: task fitness of the expert vs zero policy
    LatentGenotype z;
    z.values.assign(opts.latent_dim, 0.0);
    TaskSpec task = make_task(TaskKind::FlatGround);
    RolloutOptions ro;
    ro.physics = opts.physics;
    result.expert_fitness =
        rollout(demo.morphology, best_policy, z, task, demo.pretrain_horizon,
                derive_seed(seed, kSeedPretrain, 999983), ro)
            .fitness;
    {
        // zero policy: a fresh mixture with the action head zeroed out
        MixturePolicy zero = make_policy(1, opts.latent_dim, opts.layout, 4,
                                         derive_seed(seed, kSeedPretrain, 999984));
        for (auto& e : zero.experts) {
            std::fill(e.w3.data.begin(), e.w3.data.end(), 0.0);
            std::fill(e.b3.data.begin(), e.b3.data.end(), 0.0);
            for (int jcol = zero.layout.max_joints; jcol < 2 * zero.layout.max_joints; ++jcol)
                e.b3(0, jcol) = kLogStdFloor;  // sigma at the floor: near-zero torques
        }
        result.zero_fitness =
            rollout(demo.morphology, zero, z, task, demo.pretrain_horizon,
                    derive_seed(seed, kSeedPretrain, 999985), ro)
                .fitness;
    }
    return result;
}

void write_sweep_csv(const SweepReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFault("cannot write " + path);
    out << "w_stand,w_height,w_act,actor_lr,critic_lr,gae_lambda,mean_return,stable,selected\n";
    for (const auto& c : report.cells) {
        out << c.weights.w_stand << ',' << c.weights.w_height << ',' << c.weights.w_act << ','
            << c.actor_lr << ',' << c.critic_lr << ',';
        if (c.gae_lambda) out << *c.gae_lambda;
        else out << "off";
        out << ',' << c.mean_return << ',' << (c.stable ? 1 : 0) << ',' << (c.selected ? 1 : 0)
            << '\n';
    }
}

EvoByDemoMode build_mode(DemoVariant variant, const DemoSpec& demo,
                         const MorphologyDecoder& decoder, int restarts, uint64_t seed,
                         const BuildModeOptions& opts) {
    EvoByDemoMode mode;
    mode.variant = variant;

    if (variant == DemoVariant::PredesignOnly || variant == DemoVariant::CoSteering) {
        EncodedPrior enc = encode_by_search(decoder, demo.morphology, restarts,
                                            derive_seed(seed, kSeedEncode), opts.encode);
        enc.prior.source_demo = demo.name;
        mode.prior = enc.prior;
    }
    if (variant == DemoVariant::PretrainOnly || variant == DemoVariant::CoSteering) {
        const int budget = opts.pretrain_epochs > 0 ? opts.pretrain_epochs : demo.pretrain_epochs;
        PretrainResult pr = pretrain_expert(demo, demo.sweep, budget, seed, opts.pretrain);
        if (!(pr.expert_fitness >= 2.0 * pr.zero_fitness)) {
            throw RuntimeFault("pretrained expert failed the performance gate (fitness " +
                               std::to_string(pr.expert_fitness) + " vs zero-policy " +
                               std::to_string(pr.zero_fitness) + ")");
        }
        mode.pretrained = pr.expert;
        mode.alpha = 2.0;
    }
    validate_mode(mode);
    return mode;
}

void apply_mode(const EvoByDemoMode& mode, EngineState& state, EngineConfig& cfg) {
    validate_mode(mode);
    if (mode.pretrained) {
        freeze_expert(state.policy, 0, *mode.pretrained);
        cfg.augment_fitness = mode.augment;
        cfg.alpha = mode.alpha;
    } else {
        cfg.augment_fitness = false;
    }
}

}  // namespace ecomoe
