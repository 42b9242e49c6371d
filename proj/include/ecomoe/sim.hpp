#pragma once

#include <cstdint>
#include <vector>

#include "ecomoe/genome.hpp"
#include "ecomoe/morphology.hpp"

namespace ecomoe {

struct MixturePolicy;  // policy.hpp; rollout drives it closed-loop

enum class TerrainKind { FlatGround, Potholes };

struct Terrain {
    TerrainKind kind = TerrainKind::FlatGround;
    double pothole_width = 0.2;   // m
    double pothole_depth = 0.15;  // m
    double pothole_spacing = 1.0; // m
};

/// Ground height under x. Pothole terrain is exactly periodic in the
/// configured spacing (fmod is exact for doubles).
double terrain_height(const Terrain& t, double x);

enum class TaskKind { FlatGround, Upright, Potholes };

struct TaskSpec {
    TaskKind kind = TaskKind::FlatGround;
    Terrain terrain;
    double upright_height = 0.1;  // m, bone-CoM clearance threshold
    double upright_weight = 0.01; // per-step weight of the clearance term
};

TaskSpec make_task(TaskKind kind);

/// Integrator and contact constants. Contact is a penalty spring-damper
/// with a Coulomb-style friction cap; joints are held by a few fixed
/// sequential velocity impulses per step.
struct PhysicsConfig {
    double dt = 0.01;              // s
    double gravity = 9.81;         // m/s^2
    double contact_stiffness = 1e4;   // N/m
    double contact_damping = 100.0;   // N*s/m
    double friction = 0.8;
    double slip_velocity = 0.05;   // m/s, friction regularization
    int joint_iterations = 12;
    double joint_bias = 0.2;       // Baumgarte factor
    double limit_stiffness = 30.0; // N*m/rad
    double limit_damping = 2.0;    // N*m*s/rad
    double drop_clearance = 0.02;  // m, initial lift above terrain
};

struct SimState {
    std::vector<Vec2> position;
    std::vector<double> angle;
    std::vector<Vec2> velocity;
    std::vector<double> angular_velocity;
    std::vector<uint8_t> contact_flags;
    double time = 0.0;
    bool fault = false;

    bool finite() const;
};

/// Rest pose lifted so the lowest bone endpoint clears the terrain.
SimState init_state(const Morphology& m, const Terrain& terrain, const PhysicsConfig& cfg = {});

/// One deterministic semi-implicit Euler step. Torques are per-joint and
/// clamped to each joint's limit.
SimState step(const SimState& state, const Morphology& m, const std::vector<double>& torques,
              const Terrain& terrain, double dt, const PhysicsConfig& cfg = {});

/// Whole-body CoM of a state.
Vec2 center_of_mass(const Morphology& m, const SimState& state);

struct Trajectory {
    std::vector<SimState> states;               // horizon + 1 entries
    std::vector<std::vector<double>> actions;   // horizon entries, padded action vectors
    std::vector<double> rewards;                // horizon entries
    std::vector<double> upright_fraction_series;
    std::vector<double> bone_masses;            // lets fitness be recomputed from the record
    double dense_return = 0.0;
    double fitness = 0.0;
    bool valid = true;
};

/// Per-step dense reward. Flat/potholes reward CoM forward displacement;
/// upright adds a clearance bonus proportional to the fraction of bone
/// CoMs above the height threshold (evaluated on the pre-step state).
double task_reward(const SimState& prev, const SimState& next, const std::vector<double>& action,
                   const std::vector<double>& prev_action, const TaskSpec& task,
                   const std::vector<double>& bone_masses);

/// Sparse end-of-episode fitness. Flat/potholes: net CoM x-displacement.
/// Upright: net displacement times the mean upright fraction.
double fitness(const Trajectory& traj, const TaskSpec& task);

struct RewardWeights {
    double w_move = 1.0;
    double w_stand = 0.005;
    double w_height = 0.005;
    double w_act = 1e-4;
    double eta_cos = 0.9;  // uprightness cosine threshold
    double h_min = 0.15;   // m
};

/// Shaped pretraining reward: movement + uprightness indicator + height
/// indicator + action-smoothness penalty (zero on the first step).
double pretrain_reward(const SimState& prev, const SimState& next, const std::vector<double>& action,
                       const std::vector<double>& prev_action, const RewardWeights& weights,
                       double dt, int root_bone, bool first_step);

enum class RolloutReward { Task, Pretrain };

struct RolloutOptions {
    PhysicsConfig physics;
    RolloutReward reward = RolloutReward::Task;
    RewardWeights pretrain_weights;  // used when reward == Pretrain
};

/// Runs the policy closed-loop for `horizon` steps. Deterministic given
/// the seed. A simulation fault marks the trajectory invalid (ranked
/// last by evolution).
Trajectory rollout(const Morphology& m, const MixturePolicy& policy, const LatentGenotype& z,
                   const TaskSpec& task, int horizon, uint64_t seed,
                   const RolloutOptions& opts = {});

}  // namespace ecomoe
