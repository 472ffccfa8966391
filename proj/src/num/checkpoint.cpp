#include "num/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

namespace bevfuse::num {

nlohmann::json params_to_json(const ParamRegistry& reg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& e : reg.entries()) {
    nlohmann::json item;
    item["shape"] = e.shape;
    item["data"] = std::vector<double>(
        reg.values().begin() + e.offset,
        reg.values().begin() + e.offset + e.size);
    j[e.path] = std::move(item);
  }
  return j;
}

void params_from_json(ParamRegistry& reg, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("checkpoint: params not an object");
  for (const auto& e : reg.entries()) {
    auto it = j.find(e.path);
    if (it == j.end())
      throw std::invalid_argument("checkpoint: missing parameter " + e.path);
    const auto shape = it->at("shape").get<std::vector<int>>();
    if (shape != e.shape)
      throw std::invalid_argument("checkpoint: shape mismatch for " + e.path);
    const auto data = it->at("data").get<std::vector<double>>();
    reg.set_values(e.path, data);
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!reg.has(it.key()))
      throw std::invalid_argument("checkpoint: unknown parameter " + it.key());
}

}  // namespace bevfuse::num
