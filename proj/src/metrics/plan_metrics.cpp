#include "metrics/plan_metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace bevfuse::metrics {

using scene::Vec2;

bool obb_overlap(const ObbBox& a, const ObbBox& b) {
  const ObbBox* boxes[2] = {&a, &b};
  for (int i = 0; i < 2; ++i) {
    const ObbBox& box = *boxes[i];
    const double axes[2][2] = {
        {std::cos(box.pose.yaw), std::sin(box.pose.yaw)},
        {-std::sin(box.pose.yaw), std::cos(box.pose.yaw)}};
    for (int ax = 0; ax < 2; ++ax) {
      const double ux = axes[ax][0], uy = axes[ax][1];
      // Project both boxes onto the axis.
      double centers[2], radii[2];
      for (int k = 0; k < 2; ++k) {
        const ObbBox& o = *boxes[k];
        centers[k] = o.pose.x * ux + o.pose.y * uy;
        const double cl = std::cos(o.pose.yaw), sl = std::sin(o.pose.yaw);
        radii[k] = o.half_length * std::fabs(cl * ux + sl * uy) +
                   o.half_width * std::fabs(-sl * ux + cl * uy);
      }
      if (std::fabs(centers[0] - centers[1]) > radii[0] + radii[1]) return false;
    }
  }
  return true;
}

std::vector<ObbBox> ego_boxes_along(std::span<const Vec2> plan,
                                    double half_length, double half_width) {
  std::vector<ObbBox> boxes;
  double yaw = 0.0;
  Vec2 prev{0.0, 0.0};
  for (const Vec2& w : plan) {
    const double dx = w.x - prev.x, dy = w.y - prev.y;
    if (std::hypot(dx, dy) > 1e-9) yaw = std::atan2(dy, dx);
    boxes.push_back({{w.x, w.y, yaw}, half_length, half_width});
    prev = w;
  }
  return boxes;
}

namespace {

bool collides_at(const PlanSample& s, const std::vector<ObbBox>& ego, int step) {
  for (const auto& agent : s.agents[static_cast<std::size_t>(step)])
    if (obb_overlap(ego[static_cast<std::size_t>(step)], agent)) return true;
  return false;
}

}  // namespace

PlanMetrics plan_metrics(std::span<const PlanSample> samples, CrMode mode) {
  constexpr int kSteps = 6;
  const int horizon_step[3] = {1, 3, 5};  // 1 s, 2 s, 3 s at 2 Hz

  PlanMetrics m;
  if (samples.empty()) return m;
  double de_sum = 0.0;
  int cr_at[3] = {0, 0, 0};
  int cr_traj = 0;

  for (const auto& s : samples) {
    if (static_cast<int>(s.plan.size()) != kSteps ||
        static_cast<int>(s.gt.size()) != kSteps ||
        static_cast<int>(s.agents.size()) != kSteps)
      throw std::invalid_argument("plan metrics: horizon mismatch, need 6 steps");
    double de = 0.0;
    for (int k = 0; k < 3; ++k) {
      const int t = horizon_step[k];
      de += std::hypot(s.plan[static_cast<std::size_t>(t)].x - s.gt[static_cast<std::size_t>(t)].x,
                       s.plan[static_cast<std::size_t>(t)].y - s.gt[static_cast<std::size_t>(t)].y);
    }
    de_sum += de / 3.0;

    const auto ego = ego_boxes_along(s.plan, s.ego_half_length, s.ego_half_width);
    bool any = false;
    std::vector<bool> hit(kSteps, false);
    for (int t = 0; t < kSteps; ++t) {
      hit[static_cast<std::size_t>(t)] = collides_at(s, ego, t);
      any = any || hit[static_cast<std::size_t>(t)];
    }
    for (int k = 0; k < 3; ++k) {
      bool c = false;
      if (mode == CrMode::AtHorizon) {
        c = hit[static_cast<std::size_t>(horizon_step[k])];
      } else {
        for (int t = 0; t <= horizon_step[k]; ++t) c = c || hit[static_cast<std::size_t>(t)];
      }
      if (c) ++cr_at[k];
    }
    if (any) ++cr_traj;
  }

  const double n = static_cast<double>(samples.size());
  m.de_avg = de_sum / n;
  m.cr_1s = cr_at[0] / n;
  m.cr_2s = cr_at[1] / n;
  m.cr_3s = cr_at[2] / n;
  m.cr_avg = (m.cr_1s + m.cr_2s + m.cr_3s) / 3.0;
  m.cr_traj = cr_traj / n;
  return m;
}

}  // namespace bevfuse::metrics
