#pragma once

#include <string>
#include <vector>

#include "ecomoe/common.hpp"

namespace ecomoe {

/// A rigid rod. rest_position is the center of mass in the assembled
/// rest pose; rest_angle the rod's axis direction there.
struct Bone {
    double mass = 0.0;    // kg
    double length = 0.0;  // m
    Vec2 rest_position;   // m
    double rest_angle = 0.0;  // rad
};

/// Actuated revolute joint between two bones. Angle limits are relative
/// to the rest relative angle; anchor is the pivot point in rest pose.
struct Joint {
    int parent = -1;
    int child = -1;
    double torque_limit = 0.0;  // N*m
    double lo = 0.0;            // rad
    double hi = 0.0;            // rad
    Vec2 anchor;                // m, rest frame
};

/// Decoded phenotype: a rooted tree of bones connected by joints.
struct Morphology {
    std::vector<Bone> bones;
    std::vector<Joint> joints;
    int root_index = 0;
};

/// Checks every structural invariant: positive masses/lengths, valid
/// joint endpoints, ordered angle limits, and that the joint graph is a
/// connected tree.
bool morphology_valid(const Morphology& m);

struct MorphMetrics {
    double n_eff = 0.0;
    Vec2 mass_bias;
    double mass_bias_magnitude = 0.0;
    std::vector<double> branch_fractions;
    bool degenerate = false;  // single-bone body, n_eff clamped to 1
};

/// Bone whose CoM is closest to the whole-body CoM; ties go to the
/// lowest index.
int root_segment(const Morphology& m);

struct LimbCountResult {
    double n_eff = 0.0;
    std::vector<double> branch_fractions;
    bool degenerate = false;
};

/// Inverse sum of squared branch mass fractions over the subtrees
/// hanging off the root segment. Four equal branches give 4; a single
/// dominant branch drives it toward 1.
LimbCountResult effective_limb_count(const Morphology& m);

/// Offset from the root segment to the whole-body CoM, mass weighted,
/// and its Euclidean norm. Translation invariant.
std::pair<Vec2, double> mass_bias(const Morphology& m);

MorphMetrics morph_metrics(const Morphology& m);

/// Total mass of the body.
double total_mass(const Morphology& m);

}  // namespace ecomoe
