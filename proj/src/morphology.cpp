#include "ecomoe/morphology.hpp"

#include <algorithm>
#include <cmath>

namespace ecomoe {

namespace {
constexpr double kEps = 1e-8;  // stabilizer in the branch-fraction formulas

std::vector<std::vector<int>> adjacency(const Morphology& m) {
    std::vector<std::vector<int>> adj(m.bones.size());
    for (const auto& j : m.joints) {
        adj[j.parent].push_back(j.child);
        adj[j.child].push_back(j.parent);
    }
    return adj;
}

double subtree_mass(const Morphology& m, const std::vector<std::vector<int>>& adj, int start,
                    int blocked) {
    double mass = 0.0;
    std::vector<int> stack{start};
    std::vector<char> seen(m.bones.size(), 0);
    seen[blocked] = 1;
    seen[start] = 1;
    while (!stack.empty()) {
        const int b = stack.back();
        stack.pop_back();
        mass += m.bones[b].mass;
        for (int nb : adj[b]) {
            if (!seen[nb]) {
                seen[nb] = 1;
                stack.push_back(nb);
            }
        }
    }
    return mass;
}

}  // namespace

bool morphology_valid(const Morphology& m) {
    const int n = static_cast<int>(m.bones.size());
    if (n < 1) return false;
    if (m.root_index < 0 || m.root_index >= n) return false;
    for (const auto& b : m.bones) {
        if (!(b.mass > 0.0) || !(b.length > 0.0)) return false;
        if (!std::isfinite(b.rest_position.x) || !std::isfinite(b.rest_position.y) ||
            !std::isfinite(b.rest_angle))
            return false;
    }
    if (static_cast<int>(m.joints.size()) != n - 1) return false;
    for (const auto& j : m.joints) {
        if (j.parent < 0 || j.parent >= n || j.child < 0 || j.child >= n) return false;
        if (j.parent == j.child) return false;
        if (!(j.lo < j.hi)) return false;
        if (!(j.torque_limit > 0.0)) return false;
    }
    // connected + |edges| == n-1 implies a tree
    auto adj = adjacency(m);
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 0;
    while (!stack.empty()) {
        const int b = stack.back();
        stack.pop_back();
        ++count;
        for (int nb : adj[b]) {
            if (!seen[nb]) {
                seen[nb] = 1;
                stack.push_back(nb);
            }
        }
    }
    return count == n;
}

double total_mass(const Morphology& m) {
    double mass = 0.0;
    for (const auto& b : m.bones) mass += b.mass;
    return mass;
}

int root_segment(const Morphology& m) {
    const double mass = total_mass(m);
    Vec2 com{0.0, 0.0};
    for (const auto& b : m.bones) com += b.rest_position * b.mass;
    com = com * (1.0 / mass);

    int best = 0;
    double best_dist = (m.bones[0].rest_position - com).norm();
    for (int i = 1; i < static_cast<int>(m.bones.size()); ++i) {
        const double d = (m.bones[i].rest_position - com).norm();
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return best;
}

LimbCountResult effective_limb_count(const Morphology& m) {
    LimbCountResult out;
    const int root = root_segment(m);
    auto adj = adjacency(m);

    if (adj[root].empty()) {
        out.n_eff = 1.0;
        out.degenerate = true;
        return out;
    }

    std::vector<double> branch_masses;
    branch_masses.reserve(adj[root].size());
    double non_root_mass = 0.0;
    for (int nb : adj[root]) {
        const double bm = subtree_mass(m, adj, nb, root);
        branch_masses.push_back(bm);
        non_root_mass += bm;
    }

    double sum_sq = 0.0;
    out.branch_fractions.reserve(branch_masses.size());
    for (double bm : branch_masses) {
        const double q = bm / (non_root_mass + kEps);
        out.branch_fractions.push_back(q);
        sum_sq += q * q;
    }
    out.n_eff = 1.0 / (sum_sq + kEps);
    return out;
}

std::pair<Vec2, double> mass_bias(const Morphology& m) {
    const int root = root_segment(m);
    const Vec2 x_root = m.bones[root].rest_position;
    const double mass = total_mass(m);
    Vec2 v{0.0, 0.0};
    for (const auto& b : m.bones) v += (b.rest_position - x_root) * b.mass;
    v = v * (1.0 / mass);
    return {v, v.norm()};
}

MorphMetrics morph_metrics(const Morphology& m) {
    MorphMetrics out;
    const auto limb = effective_limb_count(m);
    out.n_eff = limb.n_eff;
    out.branch_fractions = limb.branch_fractions;
    out.degenerate = limb.degenerate;
    const auto [v, mag] = mass_bias(m);
    out.mass_bias = v;
    out.mass_bias_magnitude = mag;
    return out;
}

}  // namespace ecomoe
