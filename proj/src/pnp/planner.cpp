#include "pnp/planner.hpp"

#include <cmath>
#include <stdexcept>

namespace bevfuse::pnp {

using num::GridMut;
using scene::Vec2;

PlannerParams make_planner(num::ParamRegistry& reg, const PlannerConfig& cfg,
                           const std::string& prefix) {
  PlannerParams p;
  p.cfg = cfg;
  const int c = cfg.channels;
  p.ego_query = reg.add(prefix + ".ego_query", {c}, num::Init::UniformFanIn, c);
  p.command_embed = reg.add(prefix + ".command_embed", {3, c},
                            num::Init::UniformFanIn, c);
  p.query_mlp = num::make_mlp(reg, prefix + ".query_mlp", {2 * c, cfg.hidden, c});
  p.bev_attn = num::make_def_attn(reg, prefix + ".bev_attn", c, cfg.attn_heads,
                                  cfg.attn_points);
  p.ln1_gamma = reg.add(prefix + ".ln1.gamma", {c}, num::Init::One);
  p.ln1_beta = reg.add(prefix + ".ln1.beta", {c}, num::Init::Zero);
  p.status_mlp = num::make_mlp(reg, prefix + ".status_mlp",
                               {cfg.status_dim, cfg.hidden, c});
  p.fuse_mlp = num::make_mlp(reg, prefix + ".fuse_mlp", {2 * c, cfg.hidden, c});
  p.dec = num::make_mlp(reg, prefix + ".dec", {c, cfg.hidden, cfg.t_plan * 2});
  return p;
}

std::vector<double> build_ego_status(const scene::Scene& s) {
  const int cur = s.cfg.t_obs - 1;
  const scene::Pose2& ego = s.current_ego();
  std::vector<double> st;
  const auto rel = [&](int t) {
    const scene::Pose2& w = s.ego[static_cast<std::size_t>(t)];
    return ego.apply_inverse({w.x, w.y});
  };
  const Vec2 p1 = rel(cur - 1);
  const double v1 = std::hypot(p1.x, p1.y) / s.cfg.dt;
  double v2 = v1;
  if (cur >= 2) {
    const Vec2 p2 = rel(cur - 2);
    v2 = std::hypot(p2.x - p1.x, p2.y - p1.y) / s.cfg.dt;
  }
  const double accel = (v1 - v2) / s.cfg.dt;
  const double yaw_rate =
      scene::wrap_angle(ego.yaw - s.ego[static_cast<std::size_t>(cur - 1)].yaw) / s.cfg.dt;
  st.push_back(v1);
  st.push_back(accel);
  st.push_back(yaw_rate);
  for (int t = 0; t < s.cfg.t_obs - 1; ++t) {
    const Vec2 p = rel(t);
    st.push_back(p.x);
    st.push_back(p.y);
  }
  return st;
}

std::vector<Vec2> plan_forward(const num::ParamRegistry& reg,
                               const PlannerParams& p, const scene::BevGrid& bev,
                               scene::Command command,
                               std::span<const double> status, PlanCache* cache) {
  const PlannerConfig& cfg = p.cfg;
  const int c = cfg.channels;
  const int cmd = static_cast<int>(command);
  if (cmd < 0 || cmd > 2) throw std::invalid_argument("planner: unknown command");
  if (static_cast<int>(status.size()) != cfg.status_dim)
    throw std::invalid_argument("planner: status vector size mismatch");
  if (bev.c != c) throw std::invalid_argument("planner: BEV channel mismatch");

  PlanCache local;
  PlanCache& cc = cache ? *cache : local;
  cc.command = command;
  cc.status.assign(status.begin(), status.end());

  cc.qin.resize(2 * static_cast<std::size_t>(c));
  const double* eq = reg.val(p.ego_query);
  const double* ce = reg.val(p.command_embed) + static_cast<std::size_t>(cmd) * c;
  std::copy(eq, eq + c, cc.qin.begin());
  std::copy(ce, ce + c, cc.qin.begin() + c);
  cc.q.resize(static_cast<std::size_t>(c));
  num::mlp_forward(reg, p.query_mlp, cc.qin.data(), cc.q.data());

  const Vec2 g = bev.to_grid({0.0, 0.0});
  cc.att.assign(static_cast<std::size_t>(c), 0.0);
  num::def_attn(reg, p.bev_attn, cc.q.data(), g.x, g.y, bev.view(), cc.att.data());
  cc.sum1.resize(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) cc.sum1[ch] = cc.q[ch] + cc.att[ch];
  cc.h.resize(static_cast<std::size_t>(c));
  num::layer_norm(reg.val(p.ln1_gamma), reg.val(p.ln1_beta), c, cc.sum1.data(),
                  cc.h.data(), &cc.ln1);

  cc.s.resize(static_cast<std::size_t>(c));
  num::mlp_forward(reg, p.status_mlp, cc.status.data(), cc.s.data());
  cc.fin.resize(2 * static_cast<std::size_t>(c));
  std::copy(cc.h.begin(), cc.h.end(), cc.fin.begin());
  std::copy(cc.s.begin(), cc.s.end(), cc.fin.begin() + c);
  cc.state.resize(static_cast<std::size_t>(c));
  num::mlp_forward(reg, p.fuse_mlp, cc.fin.data(), cc.state.data());

  cc.deltas.resize(static_cast<std::size_t>(cfg.t_plan) * 2);
  num::mlp_forward(reg, p.dec, cc.state.data(), cc.deltas.data());

  std::vector<Vec2> waypoints(static_cast<std::size_t>(cfg.t_plan));
  double x = 0.0, y = 0.0;
  for (int t = 0; t < cfg.t_plan; ++t) {
    x += cc.deltas[2 * t];
    y += cc.deltas[2 * t + 1];
    waypoints[static_cast<std::size_t>(t)] = {x, y};
  }
  return waypoints;
}

void plan_backward(num::ParamRegistry& reg, const PlannerParams& p,
                   const scene::BevGrid& bev, const PlanCache& cc,
                   std::span<const Vec2> d_waypoints, GridMut* d_bev) {
  const PlannerConfig& cfg = p.cfg;
  const int c = cfg.channels;
  if (static_cast<int>(d_waypoints.size()) != cfg.t_plan)
    throw std::invalid_argument("planner: waypoint gradient size mismatch");

  std::vector<double> d_delta(static_cast<std::size_t>(cfg.t_plan) * 2);
  double sx = 0.0, sy = 0.0;
  for (int t = cfg.t_plan - 1; t >= 0; --t) {
    sx += d_waypoints[static_cast<std::size_t>(t)].x;
    sy += d_waypoints[static_cast<std::size_t>(t)].y;
    d_delta[2 * t] = sx;
    d_delta[2 * t + 1] = sy;
  }

  std::vector<double> d_state(static_cast<std::size_t>(c), 0.0);
  num::mlp_backward(reg, p.dec, cc.state.data(), d_delta.data(), d_state.data());

  std::vector<double> d_fin(2 * static_cast<std::size_t>(c), 0.0);
  num::mlp_backward(reg, p.fuse_mlp, cc.fin.data(), d_state.data(), d_fin.data());
  std::vector<double> d_h(d_fin.begin(), d_fin.begin() + c);
  num::mlp_backward(reg, p.status_mlp, cc.status.data(), d_fin.data() + c, nullptr);

  std::vector<double> d_sum1(static_cast<std::size_t>(c), 0.0);
  num::layer_norm_backward(reg.val(p.ln1_gamma), c, cc.sum1.data(), cc.ln1,
                           d_h.data(), d_sum1.data(), reg.grad(p.ln1_gamma),
                           reg.grad(p.ln1_beta));
  std::vector<double> d_q = d_sum1;  // residual
  const Vec2 g = bev.to_grid({0.0, 0.0});
  num::def_attn_backward(reg, p.bev_attn, cc.q.data(), g.x, g.y, bev.view(),
                         d_sum1.data(), d_q.data(), d_bev);

  std::vector<double> d_qin(2 * static_cast<std::size_t>(c), 0.0);
  num::mlp_backward(reg, p.query_mlp, cc.qin.data(), d_q.data(), d_qin.data());
  double* d_eq = reg.grad(p.ego_query);
  double* d_ce = reg.grad(p.command_embed) +
                 static_cast<std::size_t>(static_cast<int>(cc.command)) * c;
  for (int ch = 0; ch < c; ++ch) {
    d_eq[ch] += d_qin[static_cast<std::size_t>(ch)];
    d_ce[ch] += d_qin[static_cast<std::size_t>(c + ch)];
  }
}

}  // namespace bevfuse::pnp
