#include "ecomoe/learn.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

namespace ecomoe {

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

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

}  // namespace

Critic make_critic(int obs_dim, int latent_dim, int hidden, uint64_t seed) {
    Critic c;
    Rng rng(derive_seed(seed, kSeedCriticInit));
    c.w1 = glorot(obs_dim + latent_dim, hidden, rng);
    c.b1 = Matrix(1, hidden);
    c.w2 = glorot(hidden, hidden, rng);
    c.b2 = Matrix(1, hidden);
    c.w3 = glorot(hidden, 1, rng);
    c.b3 = Matrix(1, 1);
    return c;
}

double critic_value(const Critic& c, const std::vector<double>& obs,
                    const std::vector<double>& z) {
    const int h = c.w1.cols;
    std::vector<double> in;
    in.reserve(obs.size() + z.size());
    in.insert(in.end(), obs.begin(), obs.end());
    in.insert(in.end(), z.begin(), z.end());
    if (static_cast<int>(in.size()) != c.w1.rows)
        throw ConfigError("critic_value: input dimension mismatch");

    std::vector<double> h1(h), h2(h);
    for (int j = 0; j < h; ++j) {
        double acc = c.b1(0, j);
        for (size_t i = 0; i < in.size(); ++i) acc += in[i] * c.w1(static_cast<int>(i), j);
        h1[j] = std::tanh(acc);
    }
    for (int j = 0; j < h; ++j) {
        double acc = c.b2(0, j);
        for (int i = 0; i < h; ++i) acc += h1[i] * c.w2(i, j);
        h2[j] = std::tanh(acc);
    }
    double out = c.b3(0, 0);
    for (int i = 0; i < h; ++i) out += h2[i] * c.w3(i, 0);
    return out;
}

PPOConfig pretrain_ppo_preset() {
    PPOConfig cfg;
    cfg.gamma = 0.99;
    cfg.entropy_weight = 0.01;  // explicit bonus
    cfg.lambda_div = 0.0;       // single expert, nothing to diversify
    return cfg;
}

std::vector<Matrix*> collect_actor_params(MixturePolicy& policy) {
    std::vector<Matrix*> out{&policy.gate.W, &policy.gate.b};
    for (auto& e : policy.experts) {
        if (e.frozen) continue;
        out.push_back(&e.w1);
        out.push_back(&e.b1);
        out.push_back(&e.w2);
        out.push_back(&e.b2);
        out.push_back(&e.w3);
        out.push_back(&e.b3);
    }
    return out;
}

std::vector<Matrix*> collect_critic_params(Critic& critic) {
    return {&critic.w1, &critic.b1, &critic.w2, &critic.b2, &critic.w3, &critic.b3};
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->size(), 0.0);
            state.v[i].assign(params[i]->size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ConfigError("adam_step: state/parameter mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        if (state.m[i].size() != p.size()) throw ConfigError("adam_step: buffer size mismatch");
        for (size_t j = 0; j < p.size(); ++j) {
            state.m[i][j] = beta1 * state.m[i][j] + (1.0 - beta1) * g.data[j];
            state.v[i][j] = beta2 * state.v[i][j] + (1.0 - beta2) * g.data[j] * g.data[j];
            const double mh = state.m[i][j] / bc1;
            const double vh = state.v[i][j] / bc2;
            p.data[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

StepTargets returns_and_advantages(const Trajectory& traj, const std::vector<double>& values,
                                   const PPOConfig& cfg) {
    const int h = static_cast<int>(traj.rewards.size());
    if (static_cast<int>(values.size()) != h)
        throw ConfigError("returns_and_advantages: value series length mismatch");

    StepTargets out;
    out.advantage.resize(h);
    out.return_target.resize(h);

    if (!cfg.gae_lambda) {
        double acc = 0.0;
        for (int t = h - 1; t >= 0; --t) {
            acc = traj.rewards[t] + cfg.gamma * acc;
            out.return_target[t] = acc;
            out.advantage[t] = acc - values[t];
        }
    } else {
        const double lam = *cfg.gae_lambda;
        double gae = 0.0;
        for (int t = h - 1; t >= 0; --t) {
            const double v_next = (t + 1 < h) ? values[t + 1] : 0.0;
            const double delta = traj.rewards[t] + cfg.gamma * v_next - values[t];
            gae = delta + cfg.gamma * lam * gae;
            out.advantage[t] = gae;
            out.return_target[t] = gae + values[t];
        }
    }
    return out;
}

CollectedData collect_transitions(const std::vector<Trajectory>& trajs,
                                  const std::vector<const Morphology*>& bodies,
                                  const std::vector<LatentGenotype>& zs,
                                  const MixturePolicy& policy, const Critic& critic,
                                  const PPOConfig& cfg) {
    const ObsLayout& layout = policy.layout;
    const int a_dim = policy.action_dim();

    int total = 0;
    for (size_t i = 0; i < trajs.size(); ++i)
        if (trajs[i].valid && bodies[i] != nullptr)
            total += static_cast<int>(trajs[i].rewards.size());

    CollectedData data;
    data.size = total;
    data.obs = Matrix(total, layout.obs_dim());
    data.z = Matrix(total, policy.latent_dim);
    data.actions = Matrix(total, a_dim);
    data.mask = Matrix(total, a_dim);
    data.logp_old.resize(total);
    data.advantage.resize(total);
    data.return_target.resize(total);

    int row = 0;
    for (size_t i = 0; i < trajs.size(); ++i) {
        const Trajectory& traj = trajs[i];
        if (!traj.valid || bodies[i] == nullptr) continue;
        const Morphology& body = *bodies[i];
        const LatentGenotype& z = zs[i];
        const std::vector<double> mask = joint_mask(body, layout);
        const int h = static_cast<int>(traj.rewards.size());

        std::vector<double> values(h);
        std::vector<std::vector<double>> obs_cache(h);
        for (int t = 0; t < h; ++t) {
            obs_cache[t] = build_observation(body, traj.states[t], layout);
            values[t] = critic_value(critic, obs_cache[t], z.values);
        }
        const StepTargets targets = returns_and_advantages(traj, values, cfg);

        for (int t = 0; t < h; ++t) {
            for (int c = 0; c < layout.obs_dim(); ++c) data.obs(row, c) = obs_cache[t][c];
            for (int c = 0; c < policy.latent_dim; ++c) data.z(row, c) = z.values[c];
            for (int c = 0; c < a_dim; ++c) {
                data.actions(row, c) = traj.actions[t][c];
                data.mask(row, c) = mask[c];
            }
            data.logp_old[row] = mixture_logprob(policy, obs_cache[t], z, traj.actions[t], mask);
            data.advantage[row] = targets.advantage[t];
            data.return_target[row] = targets.return_target[t];
            ++row;
        }
    }
    return data;
}

TransitionBatch slice_batch(const CollectedData& data, const std::vector<int>& idx,
                            const Matrix& div_zs) {
    const int b = static_cast<int>(idx.size());
    TransitionBatch batch;
    batch.obs = Matrix(b, data.obs.cols);
    batch.z = Matrix(b, data.z.cols);
    batch.actions = Matrix(b, data.actions.cols);
    batch.mask = Matrix(b, data.mask.cols);
    batch.logp_old.resize(b);
    batch.advantage.resize(b);
    batch.return_target.resize(b);
    batch.div_zs = div_zs;
    for (int r = 0; r < b; ++r) {
        const int s = idx[r];
        for (int c = 0; c < data.obs.cols; ++c) batch.obs(r, c) = data.obs(s, c);
        for (int c = 0; c < data.z.cols; ++c) batch.z(r, c) = data.z(s, c);
        for (int c = 0; c < data.actions.cols; ++c) {
            batch.actions(r, c) = data.actions(s, c);
            batch.mask(r, c) = data.mask(s, c);
        }
        batch.logp_old[r] = data.logp_old[s];
        batch.advantage[r] = data.advantage[s];
        batch.return_target[r] = data.return_target[s];
    }
    return batch;
}

LossReport ppo_update(MixturePolicy& policy, Critic& critic, AdamState& actor_adam,
                      AdamState& critic_adam, const TransitionBatch& batch,
                      const PPOConfig& cfg) {
    const int b = batch.obs.rows;
    if (b == 0) throw ConfigError("ppo_update: empty batch");

    std::vector<double> adv = batch.advantage;
    if (cfg.normalize_advantages && b > 1) {
        double mean = 0.0;
        for (double a : adv) mean += a;
        mean /= b;
        double var = 0.0;
        for (double a : adv) var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / b) + 1e-8;
        for (double& a : adv) a = (a - mean) / sd;
    }

    Tape tape;
    PolicyParamRefs refs = register_policy_params(tape, policy);
    Ref obs = tape.constant(batch.obs);
    Ref zmat = tape.constant(batch.z);
    MixtureGraph mg = build_mixture_logprob_graph(tape, policy, refs, obs, zmat, batch.actions,
                                                  batch.mask);

    Matrix logp_old_m(b, 1), adv_m(b, 1);
    for (int i = 0; i < b; ++i) {
        logp_old_m(i, 0) = batch.logp_old[i];
        adv_m(i, 0) = adv[i];
    }
    Ref ratio = tape.exp_op(tape.sub(mg.logp, tape.constant(logp_old_m)));
    Ref adv_ref = tape.constant(adv_m);
    Ref surr_un = tape.mul(ratio, adv_ref);
    Ref surr_cl = tape.mul(tape.clamp_op(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_ref);
    Ref surrogate = tape.mean(tape.min_op(surr_un, surr_cl));

    // minimize -(clipped surrogate) - beta * H + lambda_div * L_div
    Ref loss_core =
        tape.sub(tape.scale(surrogate, -1.0), tape.scale(mg.entropy, cfg.entropy_weight));
    double l_div_value = 0.0;
    if (cfg.lambda_div != 0.0 && batch.div_zs.rows >= 2) {
        Ref l_div = build_routing_diversity_graph(tape, refs, batch.div_zs);
        l_div_value = tape.value(l_div)(0, 0);
        loss_core = tape.add(loss_core, tape.scale(l_div, cfg.lambda_div));
    }

    LossReport report;
    report.steps = 1;
    report.l_div = l_div_value;
    report.entropy = tape.value(mg.entropy)(0, 0);
    report.actor_loss = tape.value(loss_core)(0, 0);
    {
        double mr = 0.0;
        const Matrix& rv = tape.value(ratio);
        for (int i = 0; i < b; ++i) mr += rv(i, 0);
        report.mean_ratio = mr / b;
    }

    // critic branch on the same tape
    Matrix obs_z(b, batch.obs.cols + batch.z.cols);
    for (int i = 0; i < b; ++i) {
        for (int c = 0; c < batch.obs.cols; ++c) obs_z(i, c) = batch.obs(i, c);
        for (int c = 0; c < batch.z.cols; ++c) obs_z(i, batch.obs.cols + c) = batch.z(i, c);
    }
    Ref oz = tape.constant(obs_z);
    Ref cw1 = tape.param(critic.w1), cb1 = tape.param(critic.b1);
    Ref cw2 = tape.param(critic.w2), cb2 = tape.param(critic.b2);
    Ref cw3 = tape.param(critic.w3), cb3 = tape.param(critic.b3);
    Ref ch1 = tape.tanh_op(tape.add_rowvec(tape.matmul(oz, cw1), cb1));
    Ref ch2 = tape.tanh_op(tape.add_rowvec(tape.matmul(ch1, cw2), cb2));
    Ref value = tape.add_rowvec(tape.matmul(ch2, cw3), cb3);
    Matrix target_m(b, 1);
    for (int i = 0; i < b; ++i) target_m(i, 0) = batch.return_target[i];
    Ref critic_loss = tape.mean(tape.square(tape.sub(value, tape.constant(target_m))));
    report.critic_loss = tape.value(critic_loss)(0, 0);

    if (!std::isfinite(report.actor_loss) || !std::isfinite(report.critic_loss)) {
        report.skipped = 1;
        return report;
    }

    // actor step
    tape.backward(loss_core);
    std::vector<Matrix*> actor_params = collect_actor_params(policy);
    std::vector<Ref> actor_refs{refs.gate_w, refs.gate_b};
    for (size_t e = 0; e < policy.experts.size(); ++e) {
        if (policy.experts[e].frozen) continue;
        const ExpertParamRefs& er = refs.experts[e];
        actor_refs.insert(actor_refs.end(), {er.w1, er.b1, er.w2, er.b2, er.w3, er.b3});
    }
    std::vector<Matrix> actor_grads;
    actor_grads.reserve(actor_refs.size());
    bool finite = true;
    for (Ref r : actor_refs) {
        actor_grads.push_back(tape.grad(r));
        if (!all_finite(actor_grads.back().data)) finite = false;
    }

    // critic step (fresh sweep; backward() zeroes old adjoints)
    tape.backward(critic_loss);
    std::vector<Ref> critic_refs{cw1, cb1, cw2, cb2, cw3, cb3};
    std::vector<Matrix> critic_grads;
    for (Ref r : critic_refs) {
        critic_grads.push_back(tape.grad(r));
        if (!all_finite(critic_grads.back().data)) finite = false;
    }

    if (!finite) {
        report.skipped = 1;
        return report;
    }

    std::vector<const Matrix*> ag;
    for (const auto& g : actor_grads) ag.push_back(&g);
    adam_step(actor_params, ag, actor_adam, cfg.actor_lr);

    std::vector<Matrix*> critic_params = collect_critic_params(critic);
    std::vector<const Matrix*> cg;
    for (const auto& g : critic_grads) cg.push_back(&g);
    adam_step(critic_params, cg, critic_adam, cfg.critic_lr);

    return report;
}

CompatibilityScore compatibility(const MixturePolicy& policy, const LatentGenotype& z,
                                 int generation) {
    int frozen = -1;
    for (int e = 0; e < policy.expert_count(); ++e) {
        if (policy.experts[e].frozen) {
            frozen = e;
            break;
        }
    }
    if (frozen < 0) throw ConfigError("compatibility: no frozen expert configured");
    CompatibilityScore score;
    score.value = gate_forward(policy.gate, z)[frozen];
    score.genotype = z;
    score.generation = generation;
    return score;
}

double augmented_fitness(double f, double c_hat, double alpha) {
    if (c_hat < 0.0 || c_hat > 1.0) {
        std::cerr << "[learn] warning: compatibility " << c_hat << " outside [0,1], clamping\n";
        c_hat = std::clamp(c_hat, 0.0, 1.0);
    }
    return f * std::pow(c_hat, alpha);
}

GenerationRecord run_generation(EngineState& state, const EngineConfig& cfg,
                                const MorphologyDecoder& decoder, uint64_t run_seed) {
    const auto t_start = std::chrono::steady_clock::now();
    GenerationRecord rec;
    rec.gen = state.generation;
    rec.events.push_back("sample");

    const uint64_t gen_u = static_cast<uint64_t>(state.generation);
    auto pop = sample_population(state.dist, cfg.pop_size,
                                 derive_seed(run_seed, kSeedPopulation, gen_u));
    if (state.generation > 0 && cfg.elites > 0 && !state.prev_scored.empty()) {
        const int k = std::min({cfg.elites, static_cast<int>(state.prev_scored.size()),
                                static_cast<int>(pop.size())});
        pop = preserve_elites(state.prev_scored, pop, k);
    }

    rec.population.reserve(pop.size());
    for (const auto& z : pop) rec.population.push_back(z.values);

    // decode + roll out (independent; optionally threaded)
    rec.events.push_back("rollout");
    const int n = static_cast<int>(pop.size());
    std::vector<std::optional<Morphology>> bodies(n);
    std::vector<Trajectory> trajs(n);
    std::vector<bool> valid(n, false);

    RolloutOptions ro;
    ro.physics = cfg.physics;
    auto eval_one = [&](int i) {
        bodies[i] = decoder.decode(pop[i]);
        if (!bodies[i]) {
            trajs[i].valid = false;
            return;
        }
        trajs[i] = rollout(*bodies[i], state.policy, pop[i], cfg.task, cfg.horizon,
                           derive_seed(run_seed, kSeedRollout, gen_u * 4096 + i), ro);
        valid[i] = trajs[i].valid;
    };
    const int threads = std::max(1, std::min(cfg.rollout_threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) eval_one(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) eval_one(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    rec.design_valid.assign(valid.begin(), valid.end());
    rec.fitness_raw.resize(n, 0.0);
    for (int i = 0; i < n; ++i)
        if (valid[i]) rec.fitness_raw[i] = trajs[i].fitness;

    const bool any_valid = std::any_of(valid.begin(), valid.end(), [](bool v) { return v; });
    if (!any_valid) {
        rec.failed = true;
        rec.events.push_back("failed");
        state.generation += 1;
        rec.mean = state.dist.mean;
        rec.sigma = state.dist.sigma;
        rec.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                            .count();
        state.fault_count += 1;
        return rec;
    }

    // inner loop: exactly epochs_per_gen PPO epochs over the fresh data
    std::vector<const Morphology*> body_ptrs(n, nullptr);
    for (int i = 0; i < n; ++i)
        if (bodies[i]) body_ptrs[i] = &*bodies[i];
    CollectedData data = collect_transitions(trajs, body_ptrs, pop, state.policy, state.critic,
                                             cfg.ppo);

    Matrix div_zs(0, state.dist.dim);
    {
        std::vector<int> valid_idx;
        for (int i = 0; i < n; ++i)
            if (valid[i]) valid_idx.push_back(i);
        div_zs = Matrix(static_cast<int>(valid_idx.size()), state.dist.dim);
        for (size_t r = 0; r < valid_idx.size(); ++r)
            for (int c = 0; c < state.dist.dim; ++c)
                div_zs(static_cast<int>(r), c) = pop[valid_idx[r]].values[c];
    }

    bool first_pass = true;
    LossReport agg;
    for (int epoch = 0; epoch < cfg.ppo.epochs_per_gen; ++epoch) {
        rec.events.push_back("ppo_epoch");
        const auto order = shuffled_indices(
            data.size, derive_seed(run_seed, kSeedShuffle, gen_u * 64 + epoch));
        int cursor = 0;
        for (int step = 0; step < cfg.ppo.steps_per_epoch; ++step) {
            std::vector<int> idx;
            idx.reserve(cfg.ppo.batch_size);
            for (int i = 0; i < cfg.ppo.batch_size; ++i) {
                idx.push_back(order[cursor % data.size]);
                ++cursor;
            }
            TransitionBatch batch = slice_batch(data, idx, div_zs);
            LossReport r = ppo_update(state.policy, state.critic, state.actor_adam,
                                      state.critic_adam, batch, cfg.ppo);
            if (first_pass) {
                rec.first_ratio = r.mean_ratio;
                first_pass = false;
            }
            agg.actor_loss += r.actor_loss;
            agg.critic_loss += r.critic_loss;
            agg.entropy += r.entropy;
            agg.l_div += r.l_div;
            agg.steps += 1;
            agg.skipped += r.skipped;
            state.fault_count += r.skipped;
        }
        rec.ppo_epochs += 1;
    }
    if (agg.steps > 0) {
        agg.actor_loss /= agg.steps;
        agg.critic_loss /= agg.steps;
        agg.entropy /= agg.steps;
        agg.l_div /= agg.steps;
        agg.mean_ratio = rec.first_ratio;
    }
    rec.loss = agg;

    // post-inner-loop gate statistics, compatibility, scoring
    rec.events.push_back("score");
    std::vector<ScoredGenotype> scored(n);
    rec.scores.resize(n, 0.0);
    rec.gate_weights.reserve(n);
    const bool augment = cfg.augment_fitness;
    if (augment) rec.c_hat.resize(n, 0.0);
    const bool emit_gate_stats = state.policy.expert_count() > 1;
    for (int i = 0; i < n; ++i) {
        scored[i].genotype = pop[i];
        scored[i].valid = valid[i];
        if (emit_gate_stats) rec.gate_weights.push_back(gate_forward(state.policy.gate, pop[i]));
        double s = rec.fitness_raw[i];
        if (augment) {
            const double c_hat = compatibility(state.policy, pop[i], state.generation).value;
            rec.c_hat[i] = c_hat;
            s = augmented_fitness(s, c_hat, cfg.alpha);
        }
        scored[i].score = s;
        rec.scores[i] = valid[i] ? s : 0.0;
    }

    // metrics of the generation's best valid design
    int best = -1;
    for (int i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        if (best < 0 || scored[i].score > scored[best].score) best = i;
    }
    if (best >= 0 && bodies[best]) {
        const MorphMetrics mm = morph_metrics(*bodies[best]);
        rec.best_n_eff = mm.n_eff;
        rec.best_mass_bias = mm.mass_bias_magnitude;
    }

    rec.events.push_back("es_update");
    auto updated = cma_update(state.dist, scored);
    if (!updated.skipped) state.dist = std::move(updated.dist);

    state.prev_scored = std::move(scored);
    state.generation += 1;
    rec.mean = state.dist.mean;
    rec.sigma = state.dist.sigma;
    rec.wallclock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rec;
}

}  // namespace ecomoe
