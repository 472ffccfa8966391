#include "metrics/forecast_metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bevfuse::metrics {

namespace {

void validate(const ForecastEvalItem& item) {
  if (item.gt.empty()) throw std::invalid_argument("forecast metrics: empty ground truth");
  if (item.modes.empty()) throw std::invalid_argument("forecast metrics: no modes");
  for (const auto& m : item.modes)
    if (m.waypoints.size() < item.gt.size())
      throw std::invalid_argument("forecast metrics: mode shorter than ground truth");
}

}  // namespace

double min_ade(const ForecastEvalItem& item) {
  validate(item);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : item.modes) {
    double sum = 0.0;
    for (std::size_t t = 0; t < item.gt.size(); ++t)
      sum += std::hypot(m.waypoints[t].x - item.gt[t].x,
                        m.waypoints[t].y - item.gt[t].y);
    best = std::min(best, sum / static_cast<double>(item.gt.size()));
  }
  return best;
}

double min_fde(const ForecastEvalItem& item) {
  validate(item);
  const std::size_t last = item.gt.size() - 1;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : item.modes)
    best = std::min(best, std::hypot(m.waypoints[last].x - item.gt[last].x,
                                     m.waypoints[last].y - item.gt[last].y));
  return best;
}

double miss_rate(std::span<const ForecastEvalItem> items, double threshold_m) {
  if (!(threshold_m > 0.0)) throw std::invalid_argument("miss_rate: threshold <= 0");
  int matched = 0, missed = 0;
  for (const auto& item : items) {
    if (!item.matched) continue;
    ++matched;
    if (min_fde(item) > threshold_m) ++missed;
  }
  if (matched == 0) return 0.0;
  return static_cast<double>(missed) / static_cast<double>(matched);
}

std::optional<double> epa(std::span<const ForecastEvalItem> items,
                          int unmatched_gt, double alpha, double threshold_m) {
  if (!(threshold_m > 0.0)) throw std::invalid_argument("epa: threshold <= 0");
  if (unmatched_gt < 0) throw std::invalid_argument("epa: negative unmatched_gt");
  int hits = 0, fps = 0, n_gt = unmatched_gt;
  for (const auto& item : items) {
    if (!item.matched) {
      ++fps;
      continue;
    }
    ++n_gt;
    if (min_fde(item) <= threshold_m) ++hits;
  }
  if (n_gt == 0) return std::nullopt;
  return (static_cast<double>(hits) - alpha * static_cast<double>(fps)) /
         static_cast<double>(n_gt);
}

}  // namespace bevfuse::metrics
