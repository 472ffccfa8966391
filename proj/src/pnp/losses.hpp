#pragma once

#include <span>
#include <vector>

#include "scene/geometry.hpp"

namespace bevfuse::pnp {

// Printed form of the clamp floors every per-agent sum at 1; the cap reading
// keeps collision-free plans at zero loss and is the default.
enum class CollisionClamp { CapAtOne, VerbatimMax };
enum class CollisionNorm { NSquared, N };

struct CollisionOpts {
  CollisionClamp clamp = CollisionClamp::CapAtOne;
  CollisionNorm norm = CollisionNorm::NSquared;
  double ego_radius = 0.0;
};

// One forecasted agent as a disc track: bounding radius plus center per
// planning step.
struct AgentDisc {
  double radius = 0.0;
  std::vector<scene::Vec2> centers;
};

// Relaxed collision loss: per step, 1 - d/(r_i + r_ego) inside the combined
// radius, 0 outside; per-agent sums clamped, total normalized over agents.
// d_traj, when non-empty, accumulates the gradient w.r.t. the waypoints.
double collision_loss(std::span<const scene::Vec2> traj,
                      std::span<const AgentDisc> agents,
                      const CollisionOpts& opts,
                      std::span<scene::Vec2> d_traj = {});

// Mean over waypoints of the squared Euclidean distance to the labels.
double imitation_loss(std::span<const scene::Vec2> traj,
                      std::span<const scene::Vec2> labels,
                      std::span<scene::Vec2> d_traj = {}, double weight = 1.0);

struct LossWeights {
  double lambda_imi = 1.0;
  double lambda_col = 2.5;
};

struct TotalLoss {
  double total = 0.0;
  double imitation = 0.0;
  double collision = 0.0;
};

TotalLoss total_loss(std::span<const scene::Vec2> traj,
                     std::span<const scene::Vec2> labels,
                     std::span<const AgentDisc> agents, const LossWeights& w,
                     const CollisionOpts& opts,
                     std::span<scene::Vec2> d_traj = {});

}  // namespace bevfuse::pnp
