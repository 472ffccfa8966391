#include "pnp/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bevfuse::pnp {

using num::GridMut;
using num::GridView;
using scene::Vec2;

std::vector<AgentObs> make_agent_obs(const scene::Scene& s) {
  const scene::Pose2& ego = s.current_ego();
  const int cur = s.cfg.t_obs - 1;
  std::vector<AgentObs> obs;
  for (const auto& a : s.agents) {
    AgentObs o;
    o.id = a.id;
    const scene::Pose2& w = a.at(cur);
    const scene::Pose2& w_prev = a.at(cur - 1);
    const Vec2 p = ego.apply_inverse({w.x, w.y});
    const Vec2 p_prev = ego.apply_inverse({w_prev.x, w_prev.y});
    o.pos = p;
    o.yaw = scene::wrap_angle(w.yaw - ego.yaw);
    o.vel = {(p.x - p_prev.x) / s.cfg.dt, (p.y - p_prev.y) / s.cfg.dt};
    o.half_length = a.half_length;
    o.half_width = a.half_width;
    o.radius = a.radius;
    const double horizon = s.cfg.t_pred * s.cfg.dt;
    o.goal_rel = {o.vel.x * horizon, o.vel.y * horizon};
    obs.push_back(o);
  }
  return obs;
}

void agent_features(const AgentObs& a, double* out) {
  out[0] = std::cos(a.yaw);
  out[1] = std::sin(a.yaw);
  out[2] = a.vel.x;
  out[3] = a.vel.y;
  out[4] = std::hypot(a.vel.x, a.vel.y);
  out[5] = a.radius;
  out[6] = a.goal_rel.x;
  out[7] = a.goal_rel.y;
}

PredictionParams make_prediction(num::ParamRegistry& reg,
                                 const PredictionConfig& cfg,
                                 const std::string& prefix) {
  if (cfg.modes < 1) throw std::invalid_argument("prediction: modes < 1");
  PredictionParams p;
  p.cfg = cfg;
  const int c = cfg.channels;
  p.state_mlp = num::make_mlp(reg, prefix + ".state_mlp",
                              {kAgentFeatDim, cfg.hidden, c});
  p.ctx_attn = num::make_def_attn(reg, prefix + ".ctx_attn", c, cfg.attn_heads,
                                  cfg.attn_points);
  p.ln1_gamma = reg.add(prefix + ".ln1.gamma", {c}, num::Init::One);
  p.ln1_beta = reg.add(prefix + ".ln1.beta", {c}, num::Init::Zero);
  p.agent_mhsa = num::make_mhsa(reg, prefix + ".agent_mhsa", c, cfg.mhsa_heads);
  p.ln2_gamma = reg.add(prefix + ".ln2.gamma", {c}, num::Init::One);
  p.ln2_beta = reg.add(prefix + ".ln2.beta", {c}, num::Init::Zero);
  p.mode_embed = reg.add(prefix + ".mode_embed", {cfg.modes, c},
                         num::Init::UniformFanIn, c);
  p.ln3_gamma = reg.add(prefix + ".ln3.gamma", {c}, num::Init::One);
  p.ln3_beta = reg.add(prefix + ".ln3.beta", {c}, num::Init::Zero);
  p.mode_mhsa = num::make_mhsa(reg, prefix + ".mode_mhsa", c, cfg.mhsa_heads);
  p.ln4_gamma = reg.add(prefix + ".ln4.gamma", {c}, num::Init::One);
  p.ln4_beta = reg.add(prefix + ".ln4.beta", {c}, num::Init::Zero);
  p.traj_dec = num::make_mlp(reg, prefix + ".traj_dec",
                             {c, cfg.hidden, cfg.t_pred * 2});
  p.score_mlp = num::make_mlp(reg, prefix + ".score_mlp", {c, cfg.hidden, 1});
  p.refine_enc = num::make_mlp(reg, prefix + ".refine_enc", {2, cfg.hidden, c});
  p.refine_attn = num::make_def_attn(reg, prefix + ".refine_attn", c,
                                     cfg.attn_heads, cfg.attn_points);
  p.lnr_gamma = reg.add(prefix + ".lnr.gamma", {c}, num::Init::One);
  p.lnr_beta = reg.add(prefix + ".lnr.beta", {c}, num::Init::Zero);
  p.refine_dec = num::make_mlp(reg, prefix + ".refine_dec",
                               {c, cfg.hidden, cfg.t_pred * 2}, num::Act::Tanh,
                               /*zero_last=*/true);
  return p;
}

namespace {

void ln_rows(const num::ParamRegistry& reg, num::ParamId gamma,
             num::ParamId beta, const std::vector<double>& x, int rows, int c,
             std::vector<double>& y, std::vector<num::LayerNormCache>& caches) {
  y.resize(x.size());
  caches.resize(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i)
    num::layer_norm(reg.val(gamma), reg.val(beta), c,
                    x.data() + static_cast<std::size_t>(i) * c,
                    y.data() + static_cast<std::size_t>(i) * c,
                    &caches[static_cast<std::size_t>(i)]);
}

}  // namespace

PredOutput predict(const num::ParamRegistry& reg, const PredictionParams& p,
                   const scene::BevGrid& bev, std::span<const AgentObs> agents,
                   PredCache* cache) {
  const PredictionConfig& cfg = p.cfg;
  const int a_n = static_cast<int>(agents.size());
  const int c = cfg.channels, k_n = cfg.modes, t_n = cfg.t_pred;
  PredOutput out;
  out.n_agents = a_n;
  out.modes = k_n;
  out.t_pred = t_n;
  if (a_n == 0) return out;
  if (bev.c != c) throw std::invalid_argument("prediction: BEV channel mismatch");

  PredCache local;
  PredCache& cc = cache ? *cache : local;
  cc.agents.assign(agents.begin(), agents.end());

  cc.feats.resize(static_cast<std::size_t>(a_n) * kAgentFeatDim);
  for (int a = 0; a < a_n; ++a)
    agent_features(agents[a], cc.feats.data() + static_cast<std::size_t>(a) * kAgentFeatDim);

  cc.q0.assign(static_cast<std::size_t>(a_n) * c, 0.0);
  cc.ctx.assign(static_cast<std::size_t>(a_n) * c, 0.0);
  cc.sum1.resize(static_cast<std::size_t>(a_n) * c);
  for (int a = 0; a < a_n; ++a) {
    double* q0 = cc.q0.data() + static_cast<std::size_t>(a) * c;
    num::mlp_forward(reg, p.state_mlp,
                     cc.feats.data() + static_cast<std::size_t>(a) * kAgentFeatDim, q0);
    const Vec2 g = bev.to_grid(agents[a].pos);
    num::def_attn(reg, p.ctx_attn, q0, g.x, g.y, bev.view(),
                  cc.ctx.data() + static_cast<std::size_t>(a) * c);
  }
  for (std::size_t i = 0; i < cc.sum1.size(); ++i) cc.sum1[i] = cc.q0[i] + cc.ctx[i];
  ln_rows(reg, p.ln1_gamma, p.ln1_beta, cc.sum1, a_n, c, cc.q1, cc.ln1);

  cc.mh1.assign(static_cast<std::size_t>(a_n) * c, 0.0);
  num::mhsa(reg, p.agent_mhsa, cc.q1.data(), a_n, cc.mh1.data());
  cc.sum2.resize(cc.q1.size());
  for (std::size_t i = 0; i < cc.sum2.size(); ++i) cc.sum2[i] = cc.q1[i] + cc.mh1[i];
  ln_rows(reg, p.ln2_gamma, p.ln2_beta, cc.sum2, a_n, c, cc.q2, cc.ln2);

  const int rows = a_n * k_n;
  cc.qu_pre.resize(static_cast<std::size_t>(rows) * c);
  const double* mode_embed = reg.val(p.mode_embed);
  for (int a = 0; a < a_n; ++a)
    for (int k = 0; k < k_n; ++k)
      for (int ch = 0; ch < c; ++ch)
        cc.qu_pre[(static_cast<std::size_t>(a) * k_n + k) * c + ch] =
            cc.q2[static_cast<std::size_t>(a) * c + ch] +
            mode_embed[static_cast<std::size_t>(k) * c + ch];
  ln_rows(reg, p.ln3_gamma, p.ln3_beta, cc.qu_pre, rows, c, cc.qu, cc.ln3);

  if (cfg.mode_attention) {
    cc.mm.assign(static_cast<std::size_t>(rows) * c, 0.0);
    for (int a = 0; a < a_n; ++a)
      num::mhsa(reg, p.mode_mhsa,
                cc.qu.data() + static_cast<std::size_t>(a) * k_n * c, k_n,
                cc.mm.data() + static_cast<std::size_t>(a) * k_n * c);
    cc.sum4.resize(cc.qu.size());
    for (std::size_t i = 0; i < cc.sum4.size(); ++i) cc.sum4[i] = cc.qu[i] + cc.mm[i];
    ln_rows(reg, p.ln4_gamma, p.ln4_beta, cc.sum4, rows, c, cc.qmode, cc.ln4);
  } else {
    cc.qmode = cc.qu;
  }

  cc.deltas.resize(static_cast<std::size_t>(rows) * t_n * 2);
  out.raw.resize(static_cast<std::size_t>(rows) * t_n * 2);
  out.logits.resize(static_cast<std::size_t>(rows));
  for (int a = 0; a < a_n; ++a) {
    for (int k = 0; k < k_n; ++k) {
      const int row = a * k_n + k;
      const double* q = cc.qmode.data() + static_cast<std::size_t>(row) * c;
      double* d = cc.deltas.data() + static_cast<std::size_t>(row) * t_n * 2;
      num::mlp_forward(reg, p.traj_dec, q, d);
      double logit = 0.0;
      num::mlp_forward(reg, p.score_mlp, q, &logit);
      out.logits[static_cast<std::size_t>(row)] = logit;
      double x = agents[a].pos.x, y = agents[a].pos.y;
      double* w = out.raw.data() + static_cast<std::size_t>(row) * t_n * 2;
      for (int t = 0; t < t_n; ++t) {
        x += d[2 * t];
        y += d[2 * t + 1];
        w[2 * t] = x;
        w[2 * t + 1] = y;
      }
    }
  }

  out.scores.resize(out.logits.size());
  for (int a = 0; a < a_n; ++a) {
    std::vector<double> s(out.logits.begin() + static_cast<std::size_t>(a) * k_n,
                          out.logits.begin() + static_cast<std::size_t>(a + 1) * k_n);
    num::softmax_inplace(s);
    std::copy(s.begin(), s.end(), out.scores.begin() + static_cast<std::size_t>(a) * k_n);
  }

  if (cfg.refine) {
    cc.enc_in.resize(static_cast<std::size_t>(rows) * t_n * 2);
    cc.enc_out.resize(static_cast<std::size_t>(rows) * t_n * c);
    cc.pool_arg.resize(static_cast<std::size_t>(rows) * c);
    cc.anchor.resize(static_cast<std::size_t>(rows) * c);
    cc.qr.assign(static_cast<std::size_t>(rows) * c, 0.0);
    cc.sumr.resize(static_cast<std::size_t>(rows) * c);
    cc.ref_pt.resize(static_cast<std::size_t>(rows));
    cc.offsets.resize(static_cast<std::size_t>(rows) * t_n * 2);
    out.refined.resize(out.raw.size());
    for (int a = 0; a < a_n; ++a) {
      for (int k = 0; k < k_n; ++k) {
        const int row = a * k_n + k;
        const double* w = out.raw.data() + static_cast<std::size_t>(row) * t_n * 2;
        double* enc_in = cc.enc_in.data() + static_cast<std::size_t>(row) * t_n * 2;
        double* enc_out = cc.enc_out.data() + static_cast<std::size_t>(row) * t_n * c;
        for (int t = 0; t < t_n; ++t) {
          enc_in[2 * t] = w[2 * t] - agents[a].pos.x;
          enc_in[2 * t + 1] = w[2 * t + 1] - agents[a].pos.y;
          num::mlp_forward(reg, p.refine_enc, enc_in + 2 * t,
                           enc_out + static_cast<std::size_t>(t) * c);
        }
        // Max-pool over the time dimension.
        double* anchor = cc.anchor.data() + static_cast<std::size_t>(row) * c;
        int* arg = cc.pool_arg.data() + static_cast<std::size_t>(row) * c;
        for (int ch = 0; ch < c; ++ch) {
          double best = enc_out[ch];
          int best_t = 0;
          for (int t = 1; t < t_n; ++t) {
            const double v = enc_out[static_cast<std::size_t>(t) * c + ch];
            if (v > best) {
              best = v;
              best_t = t;
            }
          }
          anchor[ch] = best;
          arg[ch] = best_t;
        }
        const Vec2 endpoint{w[2 * (t_n - 1)], w[2 * (t_n - 1) + 1]};
        const Vec2 g = bev.to_grid(endpoint);
        cc.ref_pt[static_cast<std::size_t>(row)] = g;
        num::def_attn(reg, p.refine_attn, anchor, g.x, g.y, bev.view(),
                      cc.qr.data() + static_cast<std::size_t>(row) * c);
        for (int ch = 0; ch < c; ++ch)
          cc.sumr[static_cast<std::size_t>(row) * c + ch] =
              anchor[ch] + cc.qr[static_cast<std::size_t>(row) * c + ch];
      }
    }
    ln_rows(reg, p.lnr_gamma, p.lnr_beta, cc.sumr, rows, c, cc.hr, cc.lnr);
    for (int row = 0; row < rows; ++row) {
      double* off = cc.offsets.data() + static_cast<std::size_t>(row) * t_n * 2;
      num::mlp_forward(reg, p.refine_dec,
                       cc.hr.data() + static_cast<std::size_t>(row) * c, off);
      const double* w = out.raw.data() + static_cast<std::size_t>(row) * t_n * 2;
      double* r = out.refined.data() + static_cast<std::size_t>(row) * t_n * 2;
      for (int i = 0; i < t_n * 2; ++i) r[i] = w[i] + off[i];
    }
  } else {
    out.refined = out.raw;
  }
  return out;
}

void predict_backward(num::ParamRegistry& reg, const PredictionParams& p,
                      const scene::BevGrid& bev, const PredCache& cc,
                      std::span<const double> d_raw,
                      std::span<const double> d_refined,
                      std::span<const double> d_logits, GridMut* d_bev) {
  const PredictionConfig& cfg = p.cfg;
  const int a_n = static_cast<int>(cc.agents.size());
  if (a_n == 0) return;
  const int c = cfg.channels, k_n = cfg.modes, t_n = cfg.t_pred;
  const int rows = a_n * k_n;
  const std::size_t wn = static_cast<std::size_t>(rows) * t_n * 2;

  std::vector<double> d_w(wn, 0.0);
  if (!d_raw.empty()) {
    if (d_raw.size() != wn) throw std::invalid_argument("predict_backward: d_raw size");
    for (std::size_t i = 0; i < wn; ++i) d_w[i] += d_raw[i];
  }
  if (!d_refined.empty()) {
    if (d_refined.size() != wn)
      throw std::invalid_argument("predict_backward: d_refined size");
    for (std::size_t i = 0; i < wn; ++i) d_w[i] += d_refined[i];
  }

  std::vector<double> d_qmode(static_cast<std::size_t>(rows) * c, 0.0);

  if (cfg.refine && !d_refined.empty()) {
    // Offsets depend on the raw trajectory through the anchor encoding and
    // the endpoint reference; route those contributions back into d_w.
    std::vector<double> d_hr(static_cast<std::size_t>(rows) * c, 0.0);
    for (int row = 0; row < rows; ++row)
      num::mlp_backward(reg, p.refine_dec,
                        cc.hr.data() + static_cast<std::size_t>(row) * c,
                        d_refined.data() + static_cast<std::size_t>(row) * t_n * 2,
                        d_hr.data() + static_cast<std::size_t>(row) * c);
    std::vector<double> d_sumr(static_cast<std::size_t>(rows) * c, 0.0);
    for (int row = 0; row < rows; ++row)
      num::layer_norm_backward(reg.val(p.lnr_gamma), c,
                               cc.sumr.data() + static_cast<std::size_t>(row) * c,
                               cc.lnr[static_cast<std::size_t>(row)],
                               d_hr.data() + static_cast<std::size_t>(row) * c,
                               d_sumr.data() + static_cast<std::size_t>(row) * c,
                               reg.grad(p.lnr_gamma), reg.grad(p.lnr_beta));
    for (int a = 0; a < a_n; ++a) {
      for (int k = 0; k < k_n; ++k) {
        const int row = a * k_n + k;
        const double* anchor = cc.anchor.data() + static_cast<std::size_t>(row) * c;
        const double* d_sr = d_sumr.data() + static_cast<std::size_t>(row) * c;
        std::vector<double> d_anchor(d_sr, d_sr + c);  // residual path
        const Vec2 g = cc.ref_pt[static_cast<std::size_t>(row)];
        double d_ref[2] = {0.0, 0.0};
        num::def_attn_backward(reg, p.refine_attn, anchor, g.x, g.y, bev.view(),
                               d_sr, d_anchor.data(), d_bev, d_ref);
        double* dw = d_w.data() + static_cast<std::size_t>(row) * t_n * 2;
        dw[2 * (t_n - 1)] += d_ref[0] / bev.res_x();
        dw[2 * (t_n - 1) + 1] += d_ref[1] / bev.res_y();
        // Max-pool routes each channel's gradient to its argmax step.
        const int* arg = cc.pool_arg.data() + static_cast<std::size_t>(row) * c;
        std::vector<double> d_enc_out(static_cast<std::size_t>(t_n) * c, 0.0);
        for (int ch = 0; ch < c; ++ch)
          d_enc_out[static_cast<std::size_t>(arg[ch]) * c + ch] += d_anchor[ch];
        const double* enc_in = cc.enc_in.data() + static_cast<std::size_t>(row) * t_n * 2;
        for (int t = 0; t < t_n; ++t) {
          double d_in[2] = {0.0, 0.0};
          num::mlp_backward(reg, p.refine_enc, enc_in + 2 * t,
                            d_enc_out.data() + static_cast<std::size_t>(t) * c, d_in);
          dw[2 * t] += d_in[0];
          dw[2 * t + 1] += d_in[1];
        }
      }
    }
  }

  // Waypoints -> step deltas (suffix sums), then the trajectory decoder.
  for (int row = 0; row < rows; ++row) {
    const double* dw = d_w.data() + static_cast<std::size_t>(row) * t_n * 2;
    std::vector<double> d_delta(static_cast<std::size_t>(t_n) * 2);
    double sx = 0.0, sy = 0.0;
    for (int t = t_n - 1; t >= 0; --t) {
      sx += dw[2 * t];
      sy += dw[2 * t + 1];
      d_delta[2 * t] = sx;
      d_delta[2 * t + 1] = sy;
    }
    num::mlp_backward(reg, p.traj_dec,
                      cc.qmode.data() + static_cast<std::size_t>(row) * c,
                      d_delta.data(),
                      d_qmode.data() + static_cast<std::size_t>(row) * c);
  }
  if (!d_logits.empty()) {
    if (d_logits.size() != static_cast<std::size_t>(rows))
      throw std::invalid_argument("predict_backward: d_logits size");
    for (int row = 0; row < rows; ++row)
      num::mlp_backward(reg, p.score_mlp,
                        cc.qmode.data() + static_cast<std::size_t>(row) * c,
                        d_logits.data() + row,
                        d_qmode.data() + static_cast<std::size_t>(row) * c);
  }

  std::vector<double> d_qu(static_cast<std::size_t>(rows) * c, 0.0);
  if (cfg.mode_attention) {
    std::vector<double> d_sum4(static_cast<std::size_t>(rows) * c, 0.0);
    for (int row = 0; row < rows; ++row)
      num::layer_norm_backward(reg.val(p.ln4_gamma), c,
                               cc.sum4.data() + static_cast<std::size_t>(row) * c,
                               cc.ln4[static_cast<std::size_t>(row)],
                               d_qmode.data() + static_cast<std::size_t>(row) * c,
                               d_sum4.data() + static_cast<std::size_t>(row) * c,
                               reg.grad(p.ln4_gamma), reg.grad(p.ln4_beta));
    for (std::size_t i = 0; i < d_qu.size(); ++i) d_qu[i] += d_sum4[i];
    for (int a = 0; a < a_n; ++a)
      num::mhsa_backward(reg, p.mode_mhsa,
                         cc.qu.data() + static_cast<std::size_t>(a) * k_n * c, k_n,
                         d_sum4.data() + static_cast<std::size_t>(a) * k_n * c,
                         d_qu.data() + static_cast<std::size_t>(a) * k_n * c);
  } else {
    d_qu = d_qmode;
  }

  std::vector<double> d_qu_pre(static_cast<std::size_t>(rows) * c, 0.0);
  for (int row = 0; row < rows; ++row)
    num::layer_norm_backward(reg.val(p.ln3_gamma), c,
                             cc.qu_pre.data() + static_cast<std::size_t>(row) * c,
                             cc.ln3[static_cast<std::size_t>(row)],
                             d_qu.data() + static_cast<std::size_t>(row) * c,
                             d_qu_pre.data() + static_cast<std::size_t>(row) * c,
                             reg.grad(p.ln3_gamma), reg.grad(p.ln3_beta));
  std::vector<double> d_q2(static_cast<std::size_t>(a_n) * c, 0.0);
  double* d_mode_embed = reg.grad(p.mode_embed);
  for (int a = 0; a < a_n; ++a)
    for (int k = 0; k < k_n; ++k)
      for (int ch = 0; ch < c; ++ch) {
        const double g = d_qu_pre[(static_cast<std::size_t>(a) * k_n + k) * c + ch];
        d_q2[static_cast<std::size_t>(a) * c + ch] += g;
        d_mode_embed[static_cast<std::size_t>(k) * c + ch] += g;
      }

  std::vector<double> d_sum2(static_cast<std::size_t>(a_n) * c, 0.0);
  for (int a = 0; a < a_n; ++a)
    num::layer_norm_backward(reg.val(p.ln2_gamma), c,
                             cc.sum2.data() + static_cast<std::size_t>(a) * c,
                             cc.ln2[static_cast<std::size_t>(a)],
                             d_q2.data() + static_cast<std::size_t>(a) * c,
                             d_sum2.data() + static_cast<std::size_t>(a) * c,
                             reg.grad(p.ln2_gamma), reg.grad(p.ln2_beta));
  std::vector<double> d_q1 = d_sum2;  // residual
  num::mhsa_backward(reg, p.agent_mhsa, cc.q1.data(), a_n, d_sum2.data(),
                     d_q1.data());

  std::vector<double> d_sum1(static_cast<std::size_t>(a_n) * c, 0.0);
  for (int a = 0; a < a_n; ++a)
    num::layer_norm_backward(reg.val(p.ln1_gamma), c,
                             cc.sum1.data() + static_cast<std::size_t>(a) * c,
                             cc.ln1[static_cast<std::size_t>(a)],
                             d_q1.data() + static_cast<std::size_t>(a) * c,
                             d_sum1.data() + static_cast<std::size_t>(a) * c,
                             reg.grad(p.ln1_gamma), reg.grad(p.ln1_beta));
  for (int a = 0; a < a_n; ++a) {
    const double* q0 = cc.q0.data() + static_cast<std::size_t>(a) * c;
    const double* d_s1 = d_sum1.data() + static_cast<std::size_t>(a) * c;
    std::vector<double> d_q0(d_s1, d_s1 + c);  // residual
    const Vec2 g = bev.to_grid(cc.agents[static_cast<std::size_t>(a)].pos);
    num::def_attn_backward(reg, p.ctx_attn, q0, g.x, g.y, bev.view(), d_s1,
                           d_q0.data(), d_bev);
    num::mlp_backward(reg, p.state_mlp,
                      cc.feats.data() + static_cast<std::size_t>(a) * kAgentFeatDim,
                      d_q0.data(), nullptr);
  }
}

Forecast to_forecast(const PredOutput& out, std::span<const AgentObs> agents,
                     std::uint64_t scene_seed, bool use_refined) {
  Forecast f;
  f.scene_seed = scene_seed;
  for (int a = 0; a < out.n_agents; ++a) {
    AgentForecast af;
    af.agent_id = agents[static_cast<std::size_t>(a)].id;
    for (int k = 0; k < out.modes; ++k) {
      ModeTraj m;
      m.score = out.scores[static_cast<std::size_t>(a) * out.modes + k];
      for (int t = 0; t < out.t_pred; ++t)
        m.waypoints.push_back(out.waypoint(use_refined, a, k, t));
      af.modes.push_back(std::move(m));
    }
    f.agents.push_back(std::move(af));
  }
  return f;
}

}  // namespace bevfuse::pnp
