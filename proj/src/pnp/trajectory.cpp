#include "pnp/trajectory.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

namespace bevfuse::pnp {

namespace {

nlohmann::json waypoints_to_json(const std::vector<scene::Vec2>& w) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : w) a.push_back(nlohmann::json::array({p.x, p.y}));
  return a;
}

std::vector<scene::Vec2> waypoints_from_json(const nlohmann::json& j) {
  std::vector<scene::Vec2> w;
  for (const auto& e : j) w.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
  return w;
}

}  // namespace

nlohmann::json forecast_to_json(const Forecast& f) {
  nlohmann::json j;
  j["schema"] = "forecast/1";
  j["scene_seed"] = f.scene_seed;
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : f.agents) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : a.modes)
      modes.push_back({{"score", m.score}, {"waypoints", waypoints_to_json(m.waypoints)}});
    agents.push_back({{"agent_id", a.agent_id}, {"modes", std::move(modes)}});
  }
  j["agents"] = std::move(agents);
  return j;
}

Forecast forecast_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "forecast/1")
    throw std::invalid_argument("forecast: unsupported schema");
  Forecast f;
  f.scene_seed = j.at("scene_seed").get<std::uint64_t>();
  for (const auto& a : j.at("agents")) {
    AgentForecast af;
    af.agent_id = a.at("agent_id").get<int>();
    for (const auto& m : a.at("modes")) {
      ModeTraj mt;
      mt.score = m.at("score").get<double>();
      mt.waypoints = waypoints_from_json(m.at("waypoints"));
      af.modes.push_back(std::move(mt));
    }
    f.agents.push_back(std::move(af));
  }
  return f;
}

nlohmann::json plan_to_json(const Plan& p) {
  nlohmann::json j;
  j["schema"] = "plan/1";
  j["scene_seed"] = p.scene_seed;
  j["command"] = scene::command_name(p.command);
  j["waypoints"] = waypoints_to_json(p.waypoints);
  return j;
}

Plan plan_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "plan/1")
    throw std::invalid_argument("plan: unsupported schema");
  Plan p;
  p.scene_seed = j.at("scene_seed").get<std::uint64_t>();
  p.command = scene::command_from_name(j.at("command").get<std::string>());
  p.waypoints = waypoints_from_json(j.at("waypoints"));
  return p;
}

}  // namespace bevfuse::pnp
