#include "metrics/report.hpp"

#include <charconv>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace bevfuse::metrics {

std::optional<double> Report::get(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) return std::nullopt;
  return it->second;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

nlohmann::json report_to_json(const Report& r) {
  nlohmann::json j;
  j["schema"] = "report/1";
  j["config_digest"] = r.config_digest;
  j["metrics"] = r.metrics;
  j["counts"] = r.counts;
  return j;
}

Report report_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "report/1")
    throw std::invalid_argument("report: unsupported schema");
  Report r;
  r.config_digest = j.value("config_digest", "");
  for (auto it = j.at("metrics").begin(); it != j.at("metrics").end(); ++it)
    r.metrics[it.key()] = it.value().get<double>();
  if (j.contains("counts"))
    for (auto it = j.at("counts").begin(); it != j.at("counts").end(); ++it)
      r.counts[it.key()] = it.value().get<std::int64_t>();
  return r;
}

std::string report_to_csv(const Report& r) {
  std::string out = "metric,value\n";
  for (const auto& [k, v] : r.metrics) out += k + "," + format_double(v) + "\n";
  for (const auto& [k, v] : r.counts) out += k + "," + std::to_string(v) + "\n";
  return out;
}

}  // namespace bevfuse::metrics
