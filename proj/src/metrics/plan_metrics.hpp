#pragma once

#include <span>
#include <vector>

#include "scene/geometry.hpp"

namespace bevfuse::metrics {

struct ObbBox {
  scene::Pose2 pose;
  double half_length = 0.0;
  double half_width = 0.0;
};

// Separating-axis overlap test for oriented rectangles (touching counts).
bool obb_overlap(const ObbBox& a, const ObbBox& b);

// One evaluated plan: 3 s horizon at 2 Hz (6 waypoints), ground-truth ego
// future and ground-truth agent boxes per step, all in the current ego frame.
struct PlanSample {
  std::vector<scene::Vec2> plan;
  std::vector<scene::Vec2> gt;
  std::vector<std::vector<ObbBox>> agents;  // per step
  double ego_half_length = 2.0;
  double ego_half_width = 0.9;
};

enum class CrMode { AtHorizon, CumulativeUpTo };

struct PlanMetrics {
  double de_avg = 0.0;
  double cr_1s = 0.0, cr_2s = 0.0, cr_3s = 0.0;
  double cr_avg = 0.0;
  double cr_traj = 0.0;
};

// Ego heading along the plan follows the waypoint direction. Throws when a
// sample's horizon is not the 6-step 3 s layout.
PlanMetrics plan_metrics(std::span<const PlanSample> samples, CrMode mode);

// Ego boxes along a trajectory (shared by the metric and its tests).
std::vector<ObbBox> ego_boxes_along(std::span<const scene::Vec2> plan,
                                    double half_length, double half_width);

}  // namespace bevfuse::metrics
