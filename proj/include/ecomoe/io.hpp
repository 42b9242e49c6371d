#pragma once

#include <string>

#include <json.hpp>

#include "ecomoe/genome.hpp"
#include "ecomoe/learn.hpp"
#include "ecomoe/morphology.hpp"
#include "ecomoe/policy.hpp"

namespace ecomoe {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

// {bones:[{mass,length,x,y,angle}], joints:[{parent,child,lo,hi,torque_limit,ax,ay}], root}
// angle and anchor are optional on load; missing values are inferred from
// the chain geometry.
Json morphology_to_json(const Morphology& m);
Morphology morphology_from_json(const Json& j);

// {dim, mean, sigma, generation, es_state{...}} — field names are part of
// the checkpoint surface.
Json distribution_to_json(const DesignDistribution& d);
DesignDistribution distribution_from_json(const Json& j);

Json policy_to_json(const MixturePolicy& p);
MixturePolicy policy_from_json(const Json& j);

Json expert_to_json(const ExpertParams& e);
ExpertParams expert_from_json(const Json& j);

Json critic_to_json(const Critic& c);
Critic critic_from_json(const Json& j);

Json adam_to_json(const AdamState& a);
AdamState adam_from_json(const Json& j);

Json prior_to_json(const LatentPrior& p);
LatentPrior prior_from_json(const Json& j);

Json record_to_json(const GenerationRecord& r);
GenerationRecord record_from_json(const Json& j);

Json load_json_file(const std::string& path);
/// Write-then-rename so a crash never leaves a truncated file behind.
void save_json_file(const std::string& path, const Json& j, int indent = -1);

}  // namespace ecomoe
