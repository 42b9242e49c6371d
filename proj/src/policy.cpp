#include "ecomoe/policy.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace ecomoe {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double clamped_logstd(double raw) { return std::clamp(raw, kLogStdFloor, kLogStdCap); }

Matrix glorot(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

size_t expert_size(int obs, int h, int out) {
    return static_cast<size_t>(obs) * h + h + static_cast<size_t>(h) * h + h +
           static_cast<size_t>(h) * out + out;
}

}  // namespace

std::vector<double> build_observation(const Morphology& m, const SimState& state,
                                      const ObsLayout& layout) {
    const int nj = static_cast<int>(m.joints.size());
    const int nb = static_cast<int>(m.bones.size());
    if (nj > layout.max_joints || nb > layout.max_bones)
        throw ConfigError("build_observation: body exceeds the policy pad limits");

    std::vector<double> obs(layout.obs_dim(), 0.0);
    const int j0 = 0;
    const int v0 = layout.max_joints;
    const int r0 = 2 * layout.max_joints;
    const int c0 = r0 + 6;
    const int m0 = c0 + layout.max_bones;

    for (int j = 0; j < nj; ++j) {
        const Joint& jt = m.joints[j];
        const double rest_rel = m.bones[jt.child].rest_angle - m.bones[jt.parent].rest_angle;
        obs[j0 + j] = (state.angle[jt.child] - state.angle[jt.parent]) - rest_rel;
        obs[v0 + j] = state.angular_velocity[jt.child] - state.angular_velocity[jt.parent];
        obs[m0 + j] = 1.0;
    }
    const int root = m.root_index;
    const double tilt = state.angle[root] - m.bones[root].rest_angle;
    obs[r0 + 0] = state.position[root].y;
    obs[r0 + 1] = std::sin(tilt);
    obs[r0 + 2] = std::cos(tilt);
    obs[r0 + 3] = state.velocity[root].x;
    obs[r0 + 4] = state.velocity[root].y;
    obs[r0 + 5] = state.angular_velocity[root];
    for (int b = 0; b < nb; ++b) obs[c0 + b] = state.contact_flags[b] ? 1.0 : 0.0;
    return obs;
}

std::vector<double> joint_mask(const Morphology& m, const ObsLayout& layout) {
    std::vector<double> mask(layout.max_joints, 0.0);
    for (size_t j = 0; j < m.joints.size(); ++j) mask[j] = 1.0;
    return mask;
}

std::vector<double> torque_bounds(const Morphology& m, const ObsLayout& layout) {
    std::vector<double> bounds(layout.max_joints, 0.0);
    for (size_t j = 0; j < m.joints.size(); ++j) bounds[j] = m.joints[j].torque_limit;
    return bounds;
}

int budget_matched_hidden(int k, const ObsLayout& layout, int latent_dim, int baseline_hidden) {
    if (k < 1) throw ConfigError("budget_matched_hidden: k must be >= 1");
    if (k == 1) return baseline_hidden;
    const int obs = layout.obs_dim();
    const int out = 2 * layout.max_joints;
    const size_t budget = expert_size(obs, baseline_hidden, out) +
                          static_cast<size_t>(latent_dim) + 1;  // baseline gate (K=1)
    for (int h = baseline_hidden; h >= 2; --h) {
        const size_t total = static_cast<size_t>(k) * expert_size(obs, h, out) +
                             static_cast<size_t>(k) * latent_dim + k;
        if (total <= budget) return h;
    }
    return 2;
}

MixturePolicy make_policy(int k, int latent_dim, const ObsLayout& layout, int hidden,
                          uint64_t seed) {
    if (k < 1) throw ConfigError("make_policy: need at least 1 expert");
    MixturePolicy p;
    p.latent_dim = latent_dim;
    p.layout = layout;
    p.gate.W = Matrix(k, latent_dim);  // zero: uniform routing at start
    p.gate.b = Matrix(1, k);

    const int obs = layout.obs_dim();
    const int out = 2 * layout.max_joints;
    Rng rng(derive_seed(seed, kSeedPolicyInit));
    for (int e = 0; e < k; ++e) {
        ExpertParams ex;
        ex.w1 = glorot(obs, hidden, rng);
        ex.b1 = Matrix(1, hidden);
        ex.w2 = glorot(hidden, hidden, rng);
        ex.b2 = Matrix(1, hidden);
        ex.w3 = glorot(hidden, out, rng);
        ex.b3 = Matrix(1, out);
        // start with modest exploration noise
        for (int j = layout.max_joints; j < out; ++j) ex.b3(0, j) = -0.7;
        p.experts.push_back(std::move(ex));
    }
    return p;
}

size_t total_param_count(const MixturePolicy& policy) {
    size_t n = policy.gate.W.size() + policy.gate.b.size();
    for (const auto& e : policy.experts) n += e.param_count();
    return n;
}

size_t trainable_param_count(const MixturePolicy& policy) {
    size_t n = policy.gate.W.size() + policy.gate.b.size();
    for (const auto& e : policy.experts)
        if (!e.frozen) n += e.param_count();
    return n;
}

std::vector<double> gate_forward(const GateParams& gate, const LatentGenotype& z) {
    const int k = gate.W.rows;
    if (z.dim() != gate.W.cols) throw ConfigError("gate_forward: genotype dimension mismatch");
    std::vector<double> logits(k);
    for (int i = 0; i < k; ++i) {
        double acc = gate.b(0, i);
        for (int d = 0; d < gate.W.cols; ++d) acc += gate.W(i, d) * z.values[d];
        logits[i] = acc;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double zsum = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        zsum += l;
    }
    for (double& l : logits) l /= zsum;
    return logits;
}

namespace {

struct ExpertHead {
    std::vector<double> mu;
    std::vector<double> logstd;
};

ExpertHead expert_forward(const ExpertParams& e, const std::vector<double>& obs, int action_dim) {
    const int h = e.w1.cols;
    std::vector<double> h1(h), h2(h);
    for (int j = 0; j < h; ++j) {
        double acc = e.b1(0, j);
        for (size_t i = 0; i < obs.size(); ++i) acc += obs[i] * e.w1(static_cast<int>(i), j);
        h1[j] = std::tanh(acc);
    }
    for (int j = 0; j < h; ++j) {
        double acc = e.b2(0, j);
        for (int i = 0; i < h; ++i) acc += h1[i] * e.w2(i, j);
        h2[j] = std::tanh(acc);
    }
    ExpertHead head;
    head.mu.resize(action_dim);
    head.logstd.resize(action_dim);
    for (int j = 0; j < 2 * action_dim; ++j) {
        double acc = e.b3(0, j);
        for (int i = 0; i < h; ++i) acc += h2[i] * e.w3(i, j);
        if (j < action_dim) head.mu[j] = acc;
        else head.logstd[j - action_dim] = clamped_logstd(acc);
    }
    return head;
}

}  // namespace

double mixture_logprob(const MixturePolicy& policy, const std::vector<double>& obs,
                       const LatentGenotype& z, const std::vector<double>& action,
                       const std::vector<double>& mask) {
    const int k = policy.expert_count();
    const int a_dim = policy.action_dim();
    const auto w = gate_forward(policy.gate, z);

    std::vector<double> terms(k);
    for (int e = 0; e < k; ++e) {
        const ExpertHead head = expert_forward(policy.experts[e], obs, a_dim);
        double logdens = 0.0;
        for (int j = 0; j < a_dim; ++j) {
            if (mask[j] == 0.0) continue;
            const double inv_sigma = std::exp(-head.logstd[j]);
            const double t = (action[j] - head.mu[j]) * inv_sigma;
            logdens += -0.5 * t * t - head.logstd[j] - 0.5 * kLog2Pi;
        }
        terms[e] = std::log(w[e]) + logdens;
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc);
}

std::vector<double> mixture_sample(const MixturePolicy& policy, const std::vector<double>& obs,
                                   const LatentGenotype& z, const std::vector<double>& mask,
                                   const std::vector<double>& bounds, Rng& rng) {
    const auto w = gate_forward(policy.gate, z);
    const double u = rng.uniform();
    int pick = policy.expert_count() - 1;
    double cum = 0.0;
    for (int e = 0; e < policy.expert_count(); ++e) {
        cum += w[e];
        if (u < cum) {
            pick = e;
            break;
        }
    }
    const ExpertHead head = expert_forward(policy.experts[pick], obs, policy.action_dim());
    std::vector<double> action(policy.action_dim(), 0.0);
    for (int j = 0; j < policy.action_dim(); ++j) {
        const double n = rng.normal();  // fixed stream position even for masked joints
        if (mask[j] == 0.0) continue;
        const double a = head.mu[j] + std::exp(head.logstd[j]) * n;
        action[j] = std::clamp(a, -bounds[j], bounds[j]);
    }
    return action;
}

std::vector<double> mixture_sample(const MixturePolicy& policy, const std::vector<double>& obs,
                                   const LatentGenotype& z, const Morphology& m, Rng& rng) {
    return mixture_sample(policy, obs, z, joint_mask(m, policy.layout),
                          torque_bounds(m, policy.layout), rng);
}

std::vector<double> mixture_sample(const MixturePolicy& policy, const std::vector<double>& obs,
                                   const LatentGenotype& z, const Morphology& m, uint64_t seed) {
    Rng rng(seed);
    return mixture_sample(policy, obs, z, m, rng);
}

double routing_diversity_loss(const GateParams& gate, const std::vector<LatentGenotype>& zs) {
    if (zs.size() < 2) {
        std::cerr << "[policy] warning: routing_diversity_loss needs >= 2 genotypes, returning 0\n";
        return 0.0;
    }
    std::vector<std::vector<double>> ws;
    ws.reserve(zs.size());
    for (const auto& z : zs) ws.push_back(gate_forward(gate, z));

    double acc = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < zs.size(); ++i) {
        for (size_t j = i + 1; j < zs.size(); ++j) {
            double dz = 0.0;
            for (int d = 0; d < zs[i].dim(); ++d) {
                const double diff = zs[i].values[d] - zs[j].values[d];
                dz += diff * diff;
            }
            double dw = 0.0;
            for (size_t e = 0; e < ws[i].size(); ++e) {
                const double diff = ws[i][e] - ws[j][e];
                dw += diff * diff;
            }
            acc += std::sqrt(dz) * std::sqrt(dw);
            ++pairs;
        }
    }
    return -acc / static_cast<double>(pairs);
}

void freeze_expert(MixturePolicy& policy, int k, const ExpertParams& params) {
    if (k < 0 || k >= policy.expert_count()) throw ConfigError("freeze_expert: index out of range");
    ExpertParams& dst = policy.experts[k];
    if (!dst.w1.same_shape(params.w1) || !dst.w2.same_shape(params.w2) ||
        !dst.w3.same_shape(params.w3) || !dst.b1.same_shape(params.b1) ||
        !dst.b2.same_shape(params.b2) || !dst.b3.same_shape(params.b3)) {
        throw ConfigError("freeze_expert: parameter shapes incompatible with the mixture");
    }
    dst = params;
    dst.frozen = true;
}

PolicyParamRefs register_policy_params(Tape& tape, const MixturePolicy& policy) {
    PolicyParamRefs refs;
    refs.gate_w = tape.param(policy.gate.W);
    refs.gate_b = tape.param(policy.gate.b);
    for (const auto& e : policy.experts) {
        ExpertParamRefs er;
        er.w1 = tape.param(e.w1, e.frozen);
        er.b1 = tape.param(e.b1, e.frozen);
        er.w2 = tape.param(e.w2, e.frozen);
        er.b2 = tape.param(e.b2, e.frozen);
        er.w3 = tape.param(e.w3, e.frozen);
        er.b3 = tape.param(e.b3, e.frozen);
        refs.experts.push_back(er);
    }
    return refs;
}

Ref build_gate_logits(Tape& tape, const PolicyParamRefs& refs, Ref zmat) {
    return tape.add_rowvec(tape.matmul(zmat, refs.gate_w, /*transpose_b=*/true), refs.gate_b);
}

Ref build_expert_forward(Tape& tape, const ExpertParamRefs& refs, Ref obs) {
    Ref h1 = tape.tanh_op(tape.add_rowvec(tape.matmul(obs, refs.w1), refs.b1));
    Ref h2 = tape.tanh_op(tape.add_rowvec(tape.matmul(h1, refs.w2), refs.b2));
    return tape.add_rowvec(tape.matmul(h2, refs.w3), refs.b3);
}

MixtureGraph build_mixture_logprob_graph(Tape& tape, const MixturePolicy& policy,
                                         const PolicyParamRefs& refs, Ref obs, Ref zmat,
                                         const Matrix& actions, const Matrix& mask) {
    const int a_dim = policy.action_dim();
    const int k = policy.expert_count();

    Ref logits = build_gate_logits(tape, refs, zmat);
    Ref logw = tape.log_softmax_rows(logits);
    Ref w = tape.exp_op(logw);

    Ref act = tape.constant(actions);
    std::vector<Ref> logdens_cols;
    std::vector<Ref> gauss_entropy_cols;
    logdens_cols.reserve(k);
    for (int e = 0; e < k; ++e) {
        Ref out = build_expert_forward(tape, refs.experts[e], obs);
        Ref mu = tape.slice_cols(out, 0, a_dim);
        Ref logstd = tape.clamp_op(tape.slice_cols(out, a_dim, 2 * a_dim), kLogStdFloor,
                                   kLogStdCap);
        Ref inv_sigma = tape.exp_op(tape.scale(logstd, -1.0));
        Ref t = tape.mul(tape.sub(act, mu), inv_sigma);
        Ref per_dim = tape.add_const(
            tape.sub(tape.scale(tape.square(t), -0.5), logstd), -0.5 * kLog2Pi);
        logdens_cols.push_back(tape.row_sum(tape.mul_mask(per_dim, mask)));

        // H(N(mu, sigma)) summed over unmasked dims
        Ref h_dim = tape.add_const(logstd, 0.5 * (kLog2Pi + 1.0));
        gauss_entropy_cols.push_back(tape.row_sum(tape.mul_mask(h_dim, mask)));
    }

    Ref logdens = tape.concat_cols(logdens_cols);
    Ref mix = tape.add(logdens, logw);
    MixtureGraph g;
    g.logp = tape.row_logsumexp(mix);

    // Tractable joint-entropy bound: H(Categorical(w)) + sum_k w_k H(N_k).
    Ref h_cat = tape.scale(tape.row_sum(tape.mul(w, logw)), -1.0);
    Ref h_gauss = tape.row_sum(tape.mul(w, tape.concat_cols(gauss_entropy_cols)));
    g.entropy = tape.mean(tape.add(h_cat, h_gauss));
    return g;
}

Ref build_routing_diversity_graph(Tape& tape, const PolicyParamRefs& refs, const Matrix& zmat) {
    const int n = zmat.rows;
    Matrix coeff(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < zmat.cols; ++c) {
                const double d = zmat(i, c) - zmat(j, c);
                d2 += d * d;
            }
            coeff(i, j) = std::sqrt(d2);
        }
    }
    Ref z = tape.constant(zmat);
    Ref w = tape.softmax_rows(build_gate_logits(tape, refs, z));
    return tape.scale(tape.pairdist_mean(w, std::move(coeff)), -1.0);
}

}  // namespace ecomoe
