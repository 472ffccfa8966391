#pragma once

#include <vector>

#include "num/defattn.hpp"
#include "num/mhsa.hpp"
#include "num/mlp.hpp"
#include "num/ops.hpp"
#include "num/params.hpp"
#include "pnp/trajectory.hpp"
#include "scene/render.hpp"

namespace bevfuse::pnp {

// Current-frame observation of one agent, everything in the ego frame.
// Position enters the network only through attention into the BEV grid; the
// feature vector itself is position-free.
struct AgentObs {
  int id = 0;
  scene::Vec2 pos;
  double yaw = 0.0;
  scene::Vec2 vel;
  double half_length = 0.0, half_width = 0.0, radius = 0.0;
  scene::Vec2 goal_rel;  // kinematic goal offset over the horizon
};

std::vector<AgentObs> make_agent_obs(const scene::Scene& s);

inline constexpr int kAgentFeatDim = 8;
void agent_features(const AgentObs& a, double* out);

struct PredictionConfig {
  int channels = 16;
  int hidden = 32;
  int modes = 3;
  int mhsa_heads = 4;
  int attn_heads = 4;
  int attn_points = 4;
  int t_pred = 12;
  bool mode_attention = true;
  bool refine = true;
};

struct PredictionParams {
  PredictionConfig cfg;
  num::MlpParams state_mlp;       // agent features -> channels
  num::DefAttnParams ctx_attn;    // scene context from the fused BEV grid
  num::ParamId ln1_gamma, ln1_beta;
  num::MhsaParams agent_mhsa;     // agent-agent interaction
  num::ParamId ln2_gamma, ln2_beta;
  num::ParamId mode_embed;        // (modes, channels)
  num::ParamId ln3_gamma, ln3_beta;
  num::MhsaParams mode_mhsa;      // mode self-attention across the K modes
  num::ParamId ln4_gamma, ln4_beta;
  num::MlpParams traj_dec;        // per-mode step deltas
  num::MlpParams score_mlp;       // per-mode confidence logit
  num::MlpParams refine_enc;      // per-step waypoint encoder
  num::DefAttnParams refine_attn; // endpoint-anchored attention into the BEV
  num::ParamId lnr_gamma, lnr_beta;
  num::MlpParams refine_dec;      // per-step offsets, zero-initialized
};

PredictionParams make_prediction(num::ParamRegistry& reg,
                                 const PredictionConfig& cfg,
                                 const std::string& prefix = "pred");

// Flat (agents, modes, t_pred, 2) trajectories plus per-mode scores.
struct PredOutput {
  int n_agents = 0, modes = 0, t_pred = 0;
  std::vector<double> raw;      // decoder trajectories
  std::vector<double> refined;  // after the refinement offsets
  std::vector<double> logits;   // (agents, modes)
  std::vector<double> scores;   // softmax over modes per agent

  scene::Vec2 waypoint(bool use_refined, int a, int k, int t) const {
    const std::vector<double>& w = use_refined ? refined : raw;
    const std::size_t base =
        ((static_cast<std::size_t>(a) * modes + k) * t_pred + t) * 2;
    return {w[base], w[base + 1]};
  }
};

struct PredCache {
  std::vector<AgentObs> agents;
  std::vector<double> feats;            // (A, feat_dim)
  std::vector<double> q0, ctx, sum1, q1;
  std::vector<num::LayerNormCache> ln1;
  std::vector<double> mh1, sum2, q2;
  std::vector<num::LayerNormCache> ln2;
  std::vector<double> qu_pre, qu;       // (A*K, C)
  std::vector<num::LayerNormCache> ln3;
  std::vector<double> mm, sum4, qmode;  // (A*K, C)
  std::vector<num::LayerNormCache> ln4;
  std::vector<double> deltas;           // (A*K, T*2)
  // refinement
  std::vector<double> enc_in;           // (A*K*T, 2) waypoint offsets
  std::vector<double> enc_out;          // (A*K*T, C)
  std::vector<int> pool_arg;            // (A*K, C) argmax step per channel
  std::vector<double> anchor;           // (A*K, C)
  std::vector<double> qr, sumr, hr;     // (A*K, C)
  std::vector<num::LayerNormCache> lnr;
  std::vector<scene::Vec2> ref_pt;      // (A*K) endpoint in grid coords
  std::vector<double> offsets;          // (A*K, T*2)
};

// Context aggregation, mode attention, decoding and refinement in one pass.
// Zero agents produce an empty output, not an error.
PredOutput predict(const num::ParamRegistry& reg, const PredictionParams& p,
                   const scene::BevGrid& bev,
                   std::span<const AgentObs> agents, PredCache* cache);

// Backward through the full prediction head. Gradient inputs may be empty
// (treated as zero). d_bev is optional.
void predict_backward(num::ParamRegistry& reg, const PredictionParams& p,
                      const scene::BevGrid& bev, const PredCache& cache,
                      std::span<const double> d_raw,
                      std::span<const double> d_refined,
                      std::span<const double> d_logits, num::GridMut* d_bev);

// Forecast in trajectory form (refined when enabled).
Forecast to_forecast(const PredOutput& out, std::span<const AgentObs> agents,
                     std::uint64_t scene_seed, bool use_refined);

}  // namespace bevfuse::pnp
