#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scene/scene.hpp"

namespace bevfuse::pnp {

// One trajectory hypothesis: confidence score plus T waypoints (x, y) in the
// ego frame at prediction time.
struct ModeTraj {
  double score = 0.0;
  std::vector<scene::Vec2> waypoints;
};

struct AgentForecast {
  int agent_id = 0;
  std::vector<ModeTraj> modes;  // scores sum to 1 per agent
};

struct Forecast {
  std::uint64_t scene_seed = 0;
  std::vector<AgentForecast> agents;
};

struct Plan {
  std::uint64_t scene_seed = 0;
  scene::Command command = scene::Command::Forward;
  std::vector<scene::Vec2> waypoints;  // T_plan, ego frame
};

// Schemas "forecast/1" and "plan/1".
nlohmann::json forecast_to_json(const Forecast& f);
Forecast forecast_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const Plan& p);
Plan plan_from_json(const nlohmann::json& j);

}  // namespace bevfuse::pnp
