#pragma once

#include <nlohmann/json_fwd.hpp>

#include "num/params.hpp"

namespace bevfuse::num {

// Parameter snapshot: JSON object mapping parameter path to shape plus flat
// values. Doubles serialize via the shortest round-trip decimal form.
nlohmann::json params_to_json(const ParamRegistry& reg);

// Loads values by path into an already-finalized registry. Every registry
// entry must be present with a matching shape; unknown paths are an error.
void params_from_json(ParamRegistry& reg, const nlohmann::json& j);

}  // namespace bevfuse::num
