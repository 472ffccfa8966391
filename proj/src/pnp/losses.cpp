#include "pnp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bevfuse::pnp {

using scene::Vec2;

double collision_loss(std::span<const Vec2> traj, std::span<const AgentDisc> agents,
                      const CollisionOpts& opts, std::span<Vec2> d_traj) {
  if (agents.empty()) return 0.0;
  if (!d_traj.empty() && d_traj.size() != traj.size())
    throw std::invalid_argument("collision_loss: gradient size mismatch");
  if (!(opts.ego_radius > 0.0))
    throw std::invalid_argument("collision_loss: ego radius must be positive");
  const int steps = static_cast<int>(traj.size());

  const double n = static_cast<double>(agents.size());
  const double scale =
      opts.norm == CollisionNorm::NSquared ? 1.0 / (n * n) : 1.0 / n;

  double total = 0.0;
  std::vector<Vec2> d_agent(static_cast<std::size_t>(steps), Vec2{0.0, 0.0});
  for (const auto& agent : agents) {
    if (!(agent.radius > 0.0))
      throw std::invalid_argument("collision_loss: agent radius must be positive");
    if (static_cast<int>(agent.centers.size()) < steps)
      throw std::invalid_argument("collision_loss: agent future shorter than plan");
    const double r_sum = agent.radius + opts.ego_radius;
    double s = 0.0;
    std::fill(d_agent.begin(), d_agent.end(), Vec2{0.0, 0.0});
    for (int t = 0; t < steps; ++t) {
      const Vec2 c = agent.centers[static_cast<std::size_t>(t)];
      const double dx = traj[static_cast<std::size_t>(t)].x - c.x;
      const double dy = traj[static_cast<std::size_t>(t)].y - c.y;
      const double d = std::hypot(dx, dy);
      if (d > r_sum) continue;
      s += 1.0 - d / r_sum;
      if (!d_traj.empty() && d > 0.0) {
        const double g = -1.0 / (r_sum * d);
        d_agent[static_cast<std::size_t>(t)].x += g * dx;
        d_agent[static_cast<std::size_t>(t)].y += g * dy;
      }
    }
    double contrib = s;
    bool grads_flow = true;
    if (opts.clamp == CollisionClamp::CapAtOne) {
      if (s > 1.0) {
        contrib = 1.0;
        grads_flow = false;
      }
    } else {  // VerbatimMax
      if (s < 1.0) {
        contrib = 1.0;
        grads_flow = false;
      }
    }
    total += contrib;
    if (!d_traj.empty() && grads_flow)
      for (int t = 0; t < steps; ++t) {
        d_traj[static_cast<std::size_t>(t)].x += scale * d_agent[static_cast<std::size_t>(t)].x;
        d_traj[static_cast<std::size_t>(t)].y += scale * d_agent[static_cast<std::size_t>(t)].y;
      }
  }
  return scale * total;
}

double imitation_loss(std::span<const Vec2> traj, std::span<const Vec2> labels,
                      std::span<Vec2> d_traj, double weight) {
  if (traj.size() != labels.size())
    throw std::invalid_argument("imitation_loss: trajectory length mismatch");
  if (traj.empty()) throw std::invalid_argument("imitation_loss: empty trajectory");
  if (!d_traj.empty() && d_traj.size() != traj.size())
    throw std::invalid_argument("imitation_loss: gradient size mismatch");
  const double inv = 1.0 / static_cast<double>(traj.size());
  double loss = 0.0;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const double dx = traj[t].x - labels[t].x;
    const double dy = traj[t].y - labels[t].y;
    loss += dx * dx + dy * dy;
    if (!d_traj.empty()) {
      d_traj[t].x += weight * 2.0 * inv * dx;
      d_traj[t].y += weight * 2.0 * inv * dy;
    }
  }
  return loss * inv;
}

TotalLoss total_loss(std::span<const Vec2> traj, std::span<const Vec2> labels,
                     std::span<const AgentDisc> agents, const LossWeights& w,
                     const CollisionOpts& opts, std::span<Vec2> d_traj) {
  TotalLoss out;
  out.imitation = imitation_loss(traj, labels, d_traj, w.lambda_imi);

  if (!d_traj.empty() && w.lambda_col != 0.0) {
    std::vector<Vec2> d_col(traj.size(), Vec2{0.0, 0.0});
    out.collision = collision_loss(traj, agents, opts, d_col);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      d_traj[t].x += w.lambda_col * d_col[t].x;
      d_traj[t].y += w.lambda_col * d_col[t].y;
    }
  } else {
    out.collision = collision_loss(traj, agents, opts);
  }
  out.total = w.lambda_col * out.collision + w.lambda_imi * out.imitation;
  return out;
}

}  // namespace bevfuse::pnp
