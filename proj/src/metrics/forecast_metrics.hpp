#pragma once

#include <optional>
#include <span>

#include "pnp/trajectory.hpp"

namespace bevfuse::metrics {

// One evaluated agent: a multi-modal forecast plus its matched ground-truth
// future. Unmatched predictions (matched == false) count as false positives
// for EPA; ground-truth agents without any prediction enter via the
// unmatched_gt count.
struct ForecastEvalItem {
  bool matched = true;
  std::vector<pnp::ModeTraj> modes;
  std::vector<scene::Vec2> gt;
};

// Minimum over modes of the mean per-step displacement. Throws on empty
// ground truth or empty mode set.
double min_ade(const ForecastEvalItem& item);
// Minimum over modes of the final-step displacement.
double min_fde(const ForecastEvalItem& item);

// Fraction of matched agents whose best-mode final displacement exceeds the
// threshold.
double miss_rate(std::span<const ForecastEvalItem> items, double threshold_m);

// (hits - alpha * false_positives) / n_gt with hits = matched agents whose
// best-mode FDE is within the threshold. Absent when there is no ground
// truth at all.
std::optional<double> epa(std::span<const ForecastEvalItem> items,
                          int unmatched_gt, double alpha, double threshold_m);

}  // namespace bevfuse::metrics
