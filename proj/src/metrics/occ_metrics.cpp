#include "metrics/occ_metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace bevfuse::metrics {

namespace {

struct Crop {
  int i0, i1, j0, j1;  // half-open cell ranges
};

Crop make_crop(const scene::OccupancyGridSpec& spec, double crop_m) {
  const int n = static_cast<int>(std::llround(crop_m / spec.cell_m));
  if (n <= 0 || n > spec.nx || n > spec.ny)
    throw std::invalid_argument("occ metrics: crop outside grid");
  const int i0 = (spec.nx - n) / 2;
  const int j0 = (spec.ny - n) / 2;
  return {i0, i0 + n, j0, j0 + n};
}

void check_geometry(const scene::OccupancySequence& a,
                    const scene::OccupancySequence& b) {
  if (!(a.spec == b.spec) || a.steps != b.steps)
    throw std::invalid_argument("occ metrics: grid geometry mismatch");
}

}  // namespace

double occupancy_iou(const scene::OccupancySequence& pred,
                     const scene::OccupancySequence& gt, double crop_m) {
  check_geometry(pred, gt);
  const Crop c = make_crop(pred.spec, crop_m);
  std::int64_t inter = 0, uni = 0;
  for (int t = 0; t < pred.steps; ++t) {
    for (int ix = c.i0; ix < c.i1; ++ix) {
      for (int iy = c.j0; iy < c.j1; ++iy) {
        const bool p = pred.at(t, ix, iy) != 0;
        const bool g = gt.at(t, ix, iy) != 0;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
      }
    }
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double occupancy_vpq(const scene::OccupancySequence& pred,
                     const scene::OccupancySequence& gt, double crop_m) {
  check_geometry(pred, gt);
  const Crop c = make_crop(pred.spec, crop_m);

  double iou_sum = 0.0;
  std::int64_t tp = 0, fp = 0, fn = 0;
  std::map<int, int> bound;  // predicted id -> ground-truth id, first match wins

  for (int t = 0; t < pred.steps; ++t) {
    std::map<int, std::int64_t> pred_area, gt_area;
    std::map<std::pair<int, int>, std::int64_t> inter;
    for (int ix = c.i0; ix < c.i1; ++ix) {
      for (int iy = c.j0; iy < c.j1; ++iy) {
        const int p = pred.at(t, ix, iy);
        const int g = gt.at(t, ix, iy);
        if (p != 0) ++pred_area[p];
        if (g != 0) ++gt_area[g];
        if (p != 0 && g != 0) ++inter[{p, g}];
      }
    }
    std::map<int, bool> pred_used, gt_used;
    for (const auto& [p, a] : pred_area) pred_used[p] = false;
    for (const auto& [g, a] : gt_area) gt_used[g] = false;
    // IoU > 0.5 makes matches unique; scan pairs in deterministic order.
    for (const auto& [pg, in] : inter) {
      const auto [p, g] = pg;
      const double u = static_cast<double>(pred_area[p] + gt_area[g] - in);
      const double iou = static_cast<double>(in) / u;
      if (iou <= 0.5) continue;
      auto it = bound.find(p);
      if (it == bound.end()) it = bound.emplace(p, g).first;
      if (it->second == g) {
        iou_sum += iou;
        ++tp;
        pred_used[p] = true;
        gt_used[g] = true;
      }
      // Identity switches leave both sides unmatched this step.
    }
    for (const auto& [p, used] : pred_used)
      if (!used) ++fp;
    for (const auto& [g, used] : gt_used)
      if (!used) ++fn;
  }

  const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp) +
                       0.5 * static_cast<double>(fn);
  if (denom == 0.0) return 1.0;  // nothing predicted, nothing to predict
  return iou_sum / denom;
}

}  // namespace bevfuse::metrics
