#pragma once

#include <span>
#include <vector>

#include "num/defattn.hpp"
#include "num/mlp.hpp"
#include "num/ops.hpp"
#include "num/params.hpp"
#include "scene/render.hpp"

namespace bevfuse::pnp {

struct PlannerConfig {
  int channels = 16;
  int hidden = 32;
  int attn_heads = 4;
  int attn_points = 4;
  int t_plan = 6;
  int status_dim = 11;  // speed, accel, yaw rate, past trajectory offsets
};

struct PlannerParams {
  PlannerConfig cfg;
  num::ParamId ego_query;      // (channels)
  num::ParamId command_embed;  // (3, channels), one per navigation command
  num::MlpParams query_mlp;    // ego query (+) command -> plan query
  num::DefAttnParams bev_attn;
  num::ParamId ln1_gamma, ln1_beta;
  num::MlpParams status_mlp;   // vectorized ego status -> channels
  num::MlpParams fuse_mlp;     // surroundings (+) status -> state embedding
  num::MlpParams dec;          // state embedding -> step deltas
};

PlannerParams make_planner(num::ParamRegistry& reg, const PlannerConfig& cfg,
                           const std::string& prefix = "plan");

// Ego status vector for the planner: [speed, accel, yaw_rate, past ego
// positions in the current frame].
std::vector<double> build_ego_status(const scene::Scene& s);

struct PlanCache {
  scene::Command command = scene::Command::Forward;
  std::vector<double> status;
  std::vector<double> qin;   // concat(ego_query, command_embed)
  std::vector<double> q;     // plan query
  std::vector<double> att;   // attention into the BEV grid
  std::vector<double> sum1, h;
  num::LayerNormCache ln1;
  std::vector<double> s;     // status embedding
  std::vector<double> fin;   // concat(h, s)
  std::vector<double> state; // state embedding
  std::vector<double> deltas;
};

// Decoded ego waypoints in the current ego frame (cumulative step deltas
// from the origin). Throws on unknown command or status size mismatch.
std::vector<scene::Vec2> plan_forward(const num::ParamRegistry& reg,
                                      const PlannerParams& p,
                                      const scene::BevGrid& bev,
                                      scene::Command command,
                                      std::span<const double> status,
                                      PlanCache* cache);

void plan_backward(num::ParamRegistry& reg, const PlannerParams& p,
                   const scene::BevGrid& bev, const PlanCache& cache,
                   std::span<const scene::Vec2> d_waypoints,
                   num::GridMut* d_bev);

}  // namespace bevfuse::pnp
