#include "ecomoe/sim.hpp"

#include <algorithm>
#include <cmath>

#include "ecomoe/policy.hpp"

namespace ecomoe {

namespace {

struct JointFrame {
    Vec2 local_a;  // anchor offset in parent frame
    Vec2 local_b;  // anchor offset in child frame
    double rest_relative;
};

JointFrame joint_frame(const Morphology& m, const Joint& j) {
    JointFrame f;
    const Bone& a = m.bones[j.parent];
    const Bone& b = m.bones[j.child];
    f.local_a = rotate(j.anchor - a.rest_position, -a.rest_angle);
    f.local_b = rotate(j.anchor - b.rest_position, -b.rest_angle);
    f.rest_relative = b.rest_angle - a.rest_angle;
    return f;
}

double rod_inertia(const Bone& b) { return b.mass * b.length * b.length / 12.0; }

Vec2 endpoint(const SimState& s, const Morphology& m, int bone, double sign) {
    const Vec2 axis = rotate({m.bones[bone].length * 0.5 * sign, 0.0}, s.angle[bone]);
    return s.position[bone] + axis;
}

}  // namespace

double terrain_height(const Terrain& t, double x) {
    if (t.kind == TerrainKind::FlatGround) return 0.0;
    double u = std::fmod(x, t.pothole_spacing);
    if (u < 0.0) u += t.pothole_spacing;
    // Hole centered in each period so the start region is solid.
    const double lo = 0.5 * (t.pothole_spacing - t.pothole_width);
    const double hi = lo + t.pothole_width;
    return (u >= lo && u < hi) ? -t.pothole_depth : 0.0;
}

TaskSpec make_task(TaskKind kind) {
    TaskSpec t;
    t.kind = kind;
    if (kind == TaskKind::Potholes) t.terrain.kind = TerrainKind::Potholes;
    return t;
}

bool SimState::finite() const {
    for (const auto& p : position)
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
    for (const auto& v : velocity)
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) return false;
    for (double a : angle)
        if (!std::isfinite(a)) return false;
    for (double w : angular_velocity)
        if (!std::isfinite(w)) return false;
    return std::isfinite(time);
}

SimState init_state(const Morphology& m, const Terrain& terrain, const PhysicsConfig& cfg) {
    const int n = static_cast<int>(m.bones.size());
    SimState s;
    s.position.resize(n);
    s.angle.resize(n);
    s.velocity.assign(n, Vec2{0.0, 0.0});
    s.angular_velocity.assign(n, 0.0);
    s.contact_flags.assign(n, 0);
    for (int i = 0; i < n; ++i) {
        s.position[i] = m.bones[i].rest_position;
        s.angle[i] = m.bones[i].rest_angle;
    }
    double min_clearance = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        for (double sign : {-1.0, 1.0}) {
            const Vec2 e = endpoint(s, m, i, sign);
            min_clearance = std::min(min_clearance, e.y - terrain_height(terrain, e.x));
        }
    }
    const double lift = cfg.drop_clearance - min_clearance;
    for (auto& p : s.position) p.y += lift;
    return s;
}

Vec2 center_of_mass(const Morphology& m, const SimState& state) {
    Vec2 com{0.0, 0.0};
    double mass = 0.0;
    for (size_t i = 0; i < m.bones.size(); ++i) {
        com += state.position[i] * m.bones[i].mass;
        mass += m.bones[i].mass;
    }
    return com * (1.0 / mass);
}

SimState step(const SimState& state, const Morphology& m, const std::vector<double>& torques,
              const Terrain& terrain, double dt, const PhysicsConfig& cfg) {
    const int n = static_cast<int>(m.bones.size());
    const int nj = static_cast<int>(m.joints.size());
    if (static_cast<int>(torques.size()) < nj)
        throw ConfigError("step: torque vector shorter than joint count");

    SimState s = state;
    if (!s.finite()) {
        s.fault = true;
        return s;
    }
    std::fill(s.contact_flags.begin(), s.contact_flags.end(), 0);

    std::vector<Vec2> force(n, Vec2{0.0, 0.0});
    std::vector<double> torque(n, 0.0);
    std::vector<double> inv_mass(n), inv_inertia(n);
    for (int i = 0; i < n; ++i) {
        inv_mass[i] = 1.0 / m.bones[i].mass;
        inv_inertia[i] = 1.0 / rod_inertia(m.bones[i]);
        force[i].y -= m.bones[i].mass * cfg.gravity;
    }

    // motor torques, clamped to limits; joint-limit penalty springs
    for (int j = 0; j < nj; ++j) {
        const Joint& jt = m.joints[j];
        const JointFrame f = joint_frame(m, jt);
        const double u = std::clamp(torques[j], -jt.torque_limit, jt.torque_limit);
        torque[jt.child] += u;
        torque[jt.parent] -= u;

        const double rel = (s.angle[jt.child] - s.angle[jt.parent]) - f.rest_relative;
        const double rel_vel = s.angular_velocity[jt.child] - s.angular_velocity[jt.parent];
        double excess = 0.0;
        if (rel > jt.hi) excess = rel - jt.hi;
        else if (rel < jt.lo) excess = rel - jt.lo;
        if (excess != 0.0) {
            const double corr = -cfg.limit_stiffness * excess - cfg.limit_damping * rel_vel;
            torque[jt.child] += corr;
            torque[jt.parent] -= corr;
        }
    }

    for (int i = 0; i < n; ++i) {
        s.velocity[i] += force[i] * (dt * inv_mass[i]);
        s.angular_velocity[i] += dt * torque[i] * inv_inertia[i];
    }

    // Ground contact at rod endpoints. Spring-damper normal with the
    // damper folded in implicitly (keeps c*dt/m > 2 cases stable),
    // Coulomb-capped regularized friction, all applied as impulses.
    for (int i = 0; i < n; ++i) {
        for (double sign : {-1.0, 1.0}) {
            const Vec2 r = rotate({m.bones[i].length * 0.5 * sign, 0.0}, s.angle[i]);
            const Vec2 point = s.position[i] + r;
            const double pen = terrain_height(terrain, point.x) - point.y;
            if (pen <= 0.0) continue;
            s.contact_flags[i] = 1;

            const Vec2 pvel{s.velocity[i].x - s.angular_velocity[i] * r.y,
                            s.velocity[i].y + s.angular_velocity[i] * r.x};
            const double inv_meff_n = inv_mass[i] + r.x * r.x * inv_inertia[i];
            double jn = dt * (cfg.contact_stiffness * pen - cfg.contact_damping * pvel.y) /
                        (1.0 + dt * cfg.contact_damping * inv_meff_n);
            jn = std::max(jn, 0.0);

            const double sat = std::clamp(pvel.x / cfg.slip_velocity, -1.0, 1.0);
            const double jt_f = -cfg.friction * jn * sat;

            const Vec2 impulse{jt_f, jn};
            s.velocity[i] += impulse * inv_mass[i];
            s.angular_velocity[i] += r.cross(impulse) * inv_inertia[i];
        }
    }

    // Sequential velocity impulses pin the joints together; Baumgarte
    // bias removes positional drift. Fixed order and count keeps the
    // step bit-reproducible.
    std::vector<JointFrame> frames(nj);
    for (int j = 0; j < nj; ++j) frames[j] = joint_frame(m, m.joints[j]);
    for (int iter = 0; iter < cfg.joint_iterations; ++iter) {
        for (int j = 0; j < nj; ++j) {
            const Joint& jt = m.joints[j];
            const int a = jt.parent, b = jt.child;
            const Vec2 ra = rotate(frames[j].local_a, s.angle[a]);
            const Vec2 rb = rotate(frames[j].local_b, s.angle[b]);

            const Vec2 va{s.velocity[a].x - s.angular_velocity[a] * ra.y,
                          s.velocity[a].y + s.angular_velocity[a] * ra.x};
            const Vec2 vb{s.velocity[b].x - s.angular_velocity[b] * rb.y,
                          s.velocity[b].y + s.angular_velocity[b] * rb.x};
            const Vec2 err = (s.position[b] + rb) - (s.position[a] + ra);
            const Vec2 c{vb.x - va.x + cfg.joint_bias / dt * err.x,
                         vb.y - va.y + cfg.joint_bias / dt * err.y};

            const double im = inv_mass[a] + inv_mass[b];
            const double k11 = im + ra.y * ra.y * inv_inertia[a] + rb.y * rb.y * inv_inertia[b];
            const double k22 = im + ra.x * ra.x * inv_inertia[a] + rb.x * rb.x * inv_inertia[b];
            const double k12 = -ra.x * ra.y * inv_inertia[a] - rb.x * rb.y * inv_inertia[b];
            const double det = k11 * k22 - k12 * k12;
            if (std::abs(det) < 1e-12) continue;
            const Vec2 p{(-c.x * k22 + c.y * k12) / det, (c.x * k12 - c.y * k11) / det};

            s.velocity[a] -= p * inv_mass[a];
            s.angular_velocity[a] -= ra.cross(p) * inv_inertia[a];
            s.velocity[b] += p * inv_mass[b];
            s.angular_velocity[b] += rb.cross(p) * inv_inertia[b];
        }
    }

    for (int i = 0; i < n; ++i) {
        s.position[i] += s.velocity[i] * dt;
        s.angle[i] += s.angular_velocity[i] * dt;
    }
    s.time += dt;
    if (!s.finite()) s.fault = true;
    return s;
}

double task_reward(const SimState& prev, const SimState& next, const std::vector<double>& action,
                   const std::vector<double>& prev_action, const TaskSpec& task,
                   const std::vector<double>& bone_masses) {
    (void)action;
    (void)prev_action;
    double mass = 0.0;
    Vec2 com_prev{0.0, 0.0}, com_next{0.0, 0.0};
    for (size_t i = 0; i < bone_masses.size(); ++i) {
        com_prev += prev.position[i] * bone_masses[i];
        com_next += next.position[i] * bone_masses[i];
        mass += bone_masses[i];
    }
    const double dx = (com_next.x - com_prev.x) / mass;

    if (task.kind != TaskKind::Upright) return dx;

    int above = 0;
    for (size_t i = 0; i < bone_masses.size(); ++i) {
        if (prev.position[i].y >= task.upright_height) ++above;
    }
    const double fraction = static_cast<double>(above) / static_cast<double>(bone_masses.size());
    return dx + task.upright_weight * fraction;
}

double fitness(const Trajectory& traj, const TaskSpec& task) {
    if (!traj.valid || traj.states.size() < 2) return 0.0;
    double mass = 0.0;
    Vec2 com_first{0.0, 0.0}, com_last{0.0, 0.0};
    for (size_t i = 0; i < traj.bone_masses.size(); ++i) {
        com_first += traj.states.front().position[i] * traj.bone_masses[i];
        com_last += traj.states.back().position[i] * traj.bone_masses[i];
        mass += traj.bone_masses[i];
    }
    const double displacement = (com_last.x - com_first.x) / mass;
    if (task.kind != TaskKind::Upright) return displacement;

    double mean_fraction = 0.0;
    for (size_t t = 1; t < traj.states.size(); ++t) {
        int above = 0;
        for (size_t i = 0; i < traj.bone_masses.size(); ++i) {
            if (traj.states[t].position[i].y >= task.upright_height) ++above;
        }
        mean_fraction += static_cast<double>(above) / static_cast<double>(traj.bone_masses.size());
    }
    mean_fraction /= static_cast<double>(traj.states.size() - 1);
    return displacement * mean_fraction;
}

double pretrain_reward(const SimState& prev, const SimState& next, const std::vector<double>& action,
                       const std::vector<double>& prev_action, const RewardWeights& weights,
                       double dt, int root_bone, bool first_step) {
    const double c_move = (next.position[root_bone].x - prev.position[root_bone].x) / dt;

    // body-up vs world-up cosine, measured against the rest orientation
    const double tilt = prev.angle[root_bone];
    const double c_stand = (std::cos(tilt) >= weights.eta_cos) ? 1.0 : 0.0;
    const double c_height = (prev.position[root_bone].y >= weights.h_min) ? 1.0 : 0.0;

    double c_act = 0.0;
    if (!first_step) {
        for (size_t i = 0; i < action.size(); ++i) {
            const double d = action[i] - prev_action[i];
            c_act -= d * d;
        }
    }
    return weights.w_move * c_move + weights.w_stand * c_stand + weights.w_height * c_height +
           weights.w_act * c_act;
}

Trajectory rollout(const Morphology& m, const MixturePolicy& policy, const LatentGenotype& z,
                   const TaskSpec& task, int horizon, uint64_t seed, const RolloutOptions& opts) {
    if (horizon < 1) throw ConfigError("rollout: horizon must be >= 1");

    Trajectory traj;
    traj.bone_masses.reserve(m.bones.size());
    for (const auto& b : m.bones) traj.bone_masses.push_back(b.mass);

    SimState s = init_state(m, task.terrain, opts.physics);
    traj.states.push_back(s);

    Rng rng(derive_seed(seed, kSeedRollout));
    const int nj = static_cast<int>(m.joints.size());
    std::vector<double> prev_action(policy.layout.max_joints, 0.0);

    for (int t = 0; t < horizon; ++t) {
        const std::vector<double> obs = build_observation(m, s, policy.layout);
        const std::vector<double> action = mixture_sample(policy, obs, z, m, rng);

        std::vector<double> torques(action.begin(), action.begin() + nj);
        SimState next = step(s, m, torques, task.terrain, opts.physics.dt, opts.physics);
        if (next.fault) {
            traj.valid = false;
            break;
        }

        double r;
        if (opts.reward == RolloutReward::Task) {
            r = task_reward(s, next, action, prev_action, task, traj.bone_masses);
        } else {
            r = pretrain_reward(s, next, action, prev_action, opts.pretrain_weights,
                                opts.physics.dt, m.root_index, t == 0);
        }

        traj.actions.push_back(action);
        traj.rewards.push_back(r);

        int above = 0;
        for (size_t i = 0; i < m.bones.size(); ++i) {
            if (next.position[i].y >= task.upright_height) ++above;
        }
        traj.upright_fraction_series.push_back(static_cast<double>(above) /
                                               static_cast<double>(m.bones.size()));

        prev_action = action;
        s = std::move(next);
        traj.states.push_back(s);
    }

    for (double r : traj.rewards) traj.dense_return += r;
    traj.fitness = traj.valid ? fitness(traj, task) : 0.0;
    return traj;
}

}  // namespace ecomoe
