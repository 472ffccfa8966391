#pragma once

#include <map>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace bevfuse::metrics {

// Flat metric report, schema "report/1". Absent metrics (e.g. EPA with no
// ground truth) are simply omitted.
struct Report {
  std::string config_digest;
  std::map<std::string, double> metrics;
  std::map<std::string, std::int64_t> counts;

  void set(const std::string& name, double value) { metrics[name] = value; }
  std::optional<double> get(const std::string& name) const;
};

nlohmann::json report_to_json(const Report& r);
Report report_from_json(const nlohmann::json& j);

// Flat CSV: header "metric,value", one row per metric, shortest round-trip
// decimal representation.
std::string report_to_csv(const Report& r);

std::string format_double(double v);

}  // namespace bevfuse::metrics
