#include "train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <numbers>
#include <stdexcept>

#include "num/checkpoint.hpp"
#include "scene/occupancy.hpp"

namespace bevfuse::train {

using scene::Vec2;

double lr_schedule(const StageConfig& s, int step) {
  if (step < s.warmup) return s.lr * (step + 1) / static_cast<double>(s.warmup);
  const int span = std::max(1, s.steps - s.warmup);
  const double phase = static_cast<double>(step - s.warmup) / span;
  return s.lr_min + 0.5 * (s.lr - s.lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

bool adamw_step(num::ParamRegistry& reg, AdamState& adam, const TrainConfig& tc,
                double lr, const std::vector<std::uint8_t>& trainable) {
  auto grads = reg.grads();
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (trainable[i] && !std::isfinite(grads[i])) return false;
  ++adam.t;
  const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(adam.t));
  auto values = reg.values();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!trainable[i]) continue;
    const double g = grads[i];
    adam.m[i] = tc.beta1 * adam.m[i] + (1.0 - tc.beta1) * g;
    adam.v[i] = tc.beta2 * adam.v[i] + (1.0 - tc.beta2) * g * g;
    const double mhat = adam.m[i] / bc1;
    const double vhat = adam.v[i] / bc2;
    values[i] -= lr * (mhat / (std::sqrt(vhat) + tc.adam_eps) +
                       tc.weight_decay * values[i]);
  }
  return true;
}

TrainState init_train_state(const Model& m) {
  TrainState st;
  const std::size_t n = static_cast<std::size_t>(m.reg.total_size());
  st.adam.m.assign(n, 0.0);
  st.adam.v.assign(n, 0.0);
  st.data_rng = num::Rng(num::mix_seed(m.cfg.train.seed, num::hash_str("data_order")));
  return st;
}

std::vector<std::string> stage_trainable_prefixes(int stage) {
  switch (stage) {
    case 1: return {"encoder.", "aux."};
    case 2: return {"pred.", "plan."};
    case 3: return {"plan."};
  }
  throw std::invalid_argument("trainer: stage out of range");
}

std::vector<std::string> stage_frozen_prefixes(int stage) {
  switch (stage) {
    case 1: return {"pred.", "plan."};
    case 2: return {"encoder.", "aux."};
    case 3: return {"encoder.", "aux.", "pred."};
  }
  throw std::invalid_argument("trainer: stage out of range");
}

Trainer::Trainer(Model& model, std::vector<scene::Scene> scenes)
    : model_(model), scenes_(std::move(scenes)) {
  if (scenes_.empty()) throw std::invalid_argument("trainer: no scenes");
  frames_.resize(scenes_.size());
}

void Trainer::ensure_frames(int scene_idx, int queue) {
  auto& fd = frames_[static_cast<std::size_t>(scene_idx)];
  if (!fd.empty()) return;
  const scene::Scene& s = scenes_[static_cast<std::size_t>(scene_idx)];
  const int t_cur = s.cfg.t_obs - 1;
  const int t_start = std::max(0, t_cur - (queue - 1));
  const scene::OccupancyGridSpec spec{s.cfg.bev_nx, s.cfg.bev_ny,
                                      s.cfg.extent_m / s.cfg.bev_nx};
  for (int t = t_start; t <= t_cur; ++t) {
    FrameData d;
    d.inputs = enc::make_frame_inputs(s, t);
    // Occupancy target at frame t, in the ego frame of frame t.
    std::vector<std::pair<int, scene::Obb>> boxes;
    const scene::Pose2& ego = s.ego[static_cast<std::size_t>(t)];
    for (const auto& a : s.agents) {
      const scene::Pose2& w = a.at(t);
      const Vec2 p = ego.apply_inverse({w.x, w.y});
      boxes.push_back({a.id, scene::Obb{{p.x, p.y, scene::wrap_angle(w.yaw - ego.yaw)},
                                        a.half_length, a.half_width}});
    }
    std::vector<std::int32_t> ids(static_cast<std::size_t>(spec.nx) * spec.ny);
    scene::rasterize_step(spec, boxes, ids.data());
    d.occ.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) d.occ[i] = ids[i] != 0 ? 1 : 0;
    fd.push_back(std::move(d));
  }
}

StepStats Trainer::stage1_step(int scene_idx) {
  const StageConfig& sc = model_.cfg.train.stages[0];
  ensure_frames(scene_idx, sc.queue);
  auto& fd = frames_[static_cast<std::size_t>(scene_idx)];
  const scene::Scene& s = scenes_[static_cast<std::size_t>(scene_idx)];
  const int t_cur = s.cfg.t_obs - 1;
  const int t_start = std::max(0, t_cur - (sc.queue - 1));
  const int n_frames = t_cur - t_start + 1;
  const int cells = model_.cfg.encoder.cells();
  const int c = model_.cfg.encoder.channels;

  model_.reg.zero_grads();

  // Forward chain with caches.
  std::vector<enc::EncodeCache> caches(static_cast<std::size_t>(n_frames));
  std::vector<scene::BevGrid> bevs(static_cast<std::size_t>(n_frames));
  for (int f = 0; f < n_frames; ++f) {
    const int t = t_start + f;
    const scene::BevGrid* prev = f > 0 ? &bevs[static_cast<std::size_t>(f - 1)] : nullptr;
    const scene::Pose2 motion = f > 0 ? ego_motion(s, t) : scene::Pose2{};
    bevs[static_cast<std::size_t>(f)] =
        enc::encode(model_.reg, model_.encoder, fd[static_cast<std::size_t>(f)].inputs,
                    prev, motion, &caches[static_cast<std::size_t>(f)]);
  }

  // Auxiliary reconstruction loss and its gradient per frame.
  double loss = 0.0;
  std::vector<std::vector<double>> d_bev(static_cast<std::size_t>(n_frames));
  const double inv = 1.0 / (static_cast<double>(cells) * n_frames);
  for (int f = 0; f < n_frames; ++f) {
    d_bev[static_cast<std::size_t>(f)].assign(static_cast<std::size_t>(cells) * c, 0.0);
    const auto& occ = fd[static_cast<std::size_t>(f)].occ;
    const auto& bev = bevs[static_cast<std::size_t>(f)];
    for (int cell = 0; cell < cells; ++cell) {
      double z = 0.0;
      const double* feat = bev.data.data() + static_cast<std::size_t>(cell) * c;
      num::mlp_forward(model_.reg, model_.aux_head, feat, &z);
      const double y = occ[static_cast<std::size_t>(cell)] ? 1.0 : 0.0;
      loss += inv * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z))));
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double dz = inv * (p - y);
      num::mlp_backward(model_.reg, model_.aux_head, feat, &dz,
                        d_bev[static_cast<std::size_t>(f)].data() +
                            static_cast<std::size_t>(cell) * c);
    }
  }

  // Backward through the recurrent chain, newest frame first.
  for (int f = n_frames - 1; f >= 0; --f) {
    const int t = t_start + f;
    const scene::BevGrid* prev = f > 0 ? &bevs[static_cast<std::size_t>(f - 1)] : nullptr;
    const scene::Pose2 motion = f > 0 ? ego_motion(s, t) : scene::Pose2{};
    enc::EncodeInputGrads grads;
    scene::BevGrid d_prev;
    if (f > 0) {
      d_prev = scene::BevGrid(model_.cfg.encoder.bev_nx, model_.cfg.encoder.bev_ny,
                              c, model_.cfg.encoder.extent_m);
      grads.d_prev = &d_prev;
    }
    enc::encode_backward(model_.reg, model_.encoder,
                         fd[static_cast<std::size_t>(f)].inputs, prev, motion,
                         caches[static_cast<std::size_t>(f)],
                         d_bev[static_cast<std::size_t>(f)], grads);
    if (f > 0)
      for (std::size_t i = 0; i < d_prev.data.size(); ++i)
        d_bev[static_cast<std::size_t>(f - 1)][i] += d_prev.data[i];
  }

  StepStats st;
  st.loss = loss;
  return st;
}

double Trainer::aux_corpus_loss() {
  const StageConfig& sc = model_.cfg.train.stages[0];
  const int cells = model_.cfg.encoder.cells();
  const int c = model_.cfg.encoder.channels;
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(scenes_.size()); ++i) {
    ensure_frames(i, sc.queue);
    auto& fd = frames_[static_cast<std::size_t>(i)];
    const scene::Scene& s = scenes_[static_cast<std::size_t>(i)];
    const int t_cur = s.cfg.t_obs - 1;
    const int t_start = std::max(0, t_cur - (sc.queue - 1));
    const int n_frames = static_cast<int>(fd.size());
    scene::BevGrid bev;
    double loss = 0.0;
    const double inv = 1.0 / (static_cast<double>(cells) * n_frames);
    for (int f = 0; f < n_frames; ++f) {
      const int t = t_start + f;
      const scene::Pose2 motion = f > 0 ? ego_motion(s, t) : scene::Pose2{};
      bev = enc::encode(model_.reg, model_.encoder, fd[static_cast<std::size_t>(f)].inputs,
                        f > 0 ? &bev : nullptr, motion, nullptr);
      const auto& occ = fd[static_cast<std::size_t>(f)].occ;
      for (int cell = 0; cell < cells; ++cell) {
        double z = 0.0;
        num::mlp_forward(model_.reg, model_.aux_head,
                         bev.data.data() + static_cast<std::size_t>(cell) * c, &z);
        const double y = occ[static_cast<std::size_t>(cell)] ? 1.0 : 0.0;
        loss += inv * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z))));
      }
    }
    total += loss;
  }
  return total / static_cast<double>(scenes_.size());
}

void Trainer::build_head_caches(int stage) {
  if (head_cache_stage_ == stage) return;
  const StageConfig& sc = model_.cfg.train.stages[static_cast<std::size_t>(stage - 1)];
  heads_.assign(scenes_.size(), {});
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    const scene::Scene& s = scenes_[i];
    SceneHead& h = heads_[i];
    h.bev = encode_scene(model_, s, sc.queue);
    h.obs = pnp::make_agent_obs(s);
    const scene::Pose2& ego = s.current_ego();
    for (const auto& a : s.agents) {
      std::vector<Vec2> fut;
      for (int t = 0; t < s.cfg.t_pred; ++t) {
        const scene::Pose2& w = a.at(s.cfg.t_obs + t);
        fut.push_back(ego.apply_inverse({w.x, w.y}));
      }
      h.gt_future.push_back(std::move(fut));
      pnp::AgentDisc disc;
      disc.radius = a.radius;
      for (int t = 0; t < s.cfg.t_plan; ++t) {
        const scene::Pose2& w = a.at(s.cfg.t_obs + t);
        disc.centers.push_back(ego.apply_inverse({w.x, w.y}));
      }
      h.discs_gt.push_back(std::move(disc));
    }
    for (int t = 0; t < s.cfg.t_plan; ++t) {
      const scene::Pose2& w = s.ego[static_cast<std::size_t>(s.cfg.t_obs + t)];
      h.plan_labels.push_back(ego.apply_inverse({w.x, w.y}));
    }
    h.status = pnp::build_ego_status(s);

    if (stage == 3 && model_.cfg.train.collision_agents == CollisionAgents::Predicted) {
      // Prediction is frozen in stage three; forecasts are constants.
      const pnp::PredOutput out =
          pnp::predict(model_.reg, model_.pred, h.bev, h.obs, nullptr);
      for (int a = 0; a < out.n_agents; ++a) {
        int best = 0;
        for (int k = 1; k < out.modes; ++k)
          if (out.scores[static_cast<std::size_t>(a) * out.modes + k] >
              out.scores[static_cast<std::size_t>(a) * out.modes + best])
            best = k;
        pnp::AgentDisc disc;
        disc.radius = h.obs[static_cast<std::size_t>(a)].radius;
        for (int t = 0; t < s.cfg.t_plan; ++t)
          disc.centers.push_back(out.waypoint(true, a, best, t));
        h.discs_pred.push_back(std::move(disc));
      }
    }
  }
  head_cache_stage_ = stage;
}

StepStats Trainer::stage23_step(int stage, int scene_idx) {
  const TrainConfig& tc = model_.cfg.train;
  const SceneHead& h = heads_[static_cast<std::size_t>(scene_idx)];
  const scene::Scene& s = scenes_[static_cast<std::size_t>(scene_idx)];
  const int k_n = model_.cfg.pnp.pred.modes;
  const int t_pred = model_.cfg.pnp.pred.t_pred;
  const int t_plan = model_.cfg.pnp.plan.t_plan;
  const int a_n = static_cast<int>(h.obs.size());

  model_.reg.zero_grads();
  StepStats stats;

  pnp::PredCache pcache;
  pnp::PredOutput out;
  std::vector<pnp::AgentDisc> discs_step;
  const std::vector<pnp::AgentDisc>* discs = &h.discs_gt;

  const bool need_pred = stage == 2 || tc.collision_agents == CollisionAgents::Predicted;
  if (need_pred && a_n > 0) {
    out = pnp::predict(model_.reg, model_.pred, h.bev, h.obs,
                       stage == 2 ? &pcache : nullptr);
  }

  std::vector<double> d_raw, d_refined, d_logits;
  if (stage == 2 && a_n > 0) {
    const std::size_t wn = static_cast<std::size_t>(a_n) * k_n * t_pred * 2;
    d_raw.assign(wn, 0.0);
    d_refined.assign(wn, 0.0);
    d_logits.assign(static_cast<std::size_t>(a_n) * k_n, 0.0);

    double l_motion = 0.0, l_score = 0.0, l_refine = 0.0;
    for (int a = 0; a < a_n; ++a) {
      const auto& gt = h.gt_future[static_cast<std::size_t>(a)];
      // Winner-takes-all mode by raw average displacement.
      int best = 0;
      double best_ade = 1e300;
      for (int k = 0; k < k_n; ++k) {
        double ade = 0.0;
        for (int t = 0; t < t_pred; ++t) {
          const Vec2 w = out.waypoint(false, a, k, t);
          ade += std::hypot(w.x - gt[static_cast<std::size_t>(t)].x,
                            w.y - gt[static_cast<std::size_t>(t)].y);
        }
        if (ade < best_ade) {
          best_ade = ade;
          best = k;
        }
      }
      const double w_m = tc.w_motion / (static_cast<double>(a_n) * t_pred);
      const double w_r = tc.w_refine / (static_cast<double>(a_n) * t_pred);
      for (int t = 0; t < t_pred; ++t) {
        const std::size_t base =
            ((static_cast<std::size_t>(a) * k_n + best) * t_pred + t) * 2;
        const Vec2 wr_ = out.waypoint(false, a, best, t);
        const double dx = wr_.x - gt[static_cast<std::size_t>(t)].x;
        const double dy = wr_.y - gt[static_cast<std::size_t>(t)].y;
        l_motion += tc.w_motion * (dx * dx + dy * dy) / (a_n * t_pred);
        d_raw[base] += 2.0 * w_m * dx;
        d_raw[base + 1] += 2.0 * w_m * dy;
        if (model_.cfg.pnp.pred.refine) {
          const Vec2 wf = out.waypoint(true, a, best, t);
          const double rx = wf.x - gt[static_cast<std::size_t>(t)].x;
          const double ry = wf.y - gt[static_cast<std::size_t>(t)].y;
          l_refine += tc.w_refine * (rx * rx + ry * ry) / (a_n * t_pred);
          d_refined[base] += 2.0 * w_r * rx;
          d_refined[base + 1] += 2.0 * w_r * ry;
        }
      }
      // Cross entropy toward the winning mode.
      const double* sc = out.scores.data() + static_cast<std::size_t>(a) * k_n;
      l_score += -tc.w_score * std::log(std::max(sc[best], 1e-300)) / a_n;
      for (int k = 0; k < k_n; ++k)
        d_logits[static_cast<std::size_t>(a) * k_n + k] +=
            tc.w_score * (sc[k] - (k == best ? 1.0 : 0.0)) / a_n;
    }
    stats.loss += l_motion + l_score + l_refine;
  }

  // Forecasted agents enter the collision term as constants.
  if (tc.collision_agents == CollisionAgents::Predicted && a_n > 0) {
    if (stage == 2) {
      for (int a = 0; a < a_n; ++a) {
        int best = 0;
        for (int k = 1; k < k_n; ++k)
          if (out.scores[static_cast<std::size_t>(a) * k_n + k] >
              out.scores[static_cast<std::size_t>(a) * k_n + best])
            best = k;
        pnp::AgentDisc disc;
        disc.radius = h.obs[static_cast<std::size_t>(a)].radius;
        for (int t = 0; t < t_plan; ++t)
          disc.centers.push_back(out.waypoint(true, a, best, t));
        discs_step.push_back(std::move(disc));
      }
      discs = &discs_step;
    } else {
      discs = &h.discs_pred;
    }
  }

  pnp::PlanCache plan_cache;
  const std::vector<Vec2> plan_wp = pnp::plan_forward(
      model_.reg, model_.plan, h.bev, s.command, h.status, &plan_cache);

  std::vector<Vec2> d_plan(plan_wp.size(), Vec2{0.0, 0.0});
  pnp::CollisionOpts copts{model_.cfg.pnp.clamp, model_.cfg.pnp.norm,
                           std::hypot(s.ego_half_length, s.ego_half_width)};
  const pnp::TotalLoss tl = pnp::total_loss(plan_wp, h.plan_labels, *discs,
                                            model_.cfg.pnp.weights, copts, d_plan);
  stats.imitation = tl.imitation;
  stats.collision = tl.collision;
  stats.loss += tc.w_plan * tl.total;
  for (auto& g : d_plan) {
    g.x *= tc.w_plan;
    g.y *= tc.w_plan;
  }
  pnp::plan_backward(model_.reg, model_.plan, h.bev, plan_cache, d_plan, nullptr);

  if (stage == 2 && a_n > 0)
    pnp::predict_backward(model_.reg, model_.pred, h.bev, pcache, d_raw,
                          d_refined, d_logits, nullptr);
  return stats;
}

void Trainer::run_stage(int stage, TrainState& st, const CheckpointSink& sink) {
  const StageConfig& sc = model_.cfg.train.stages[static_cast<std::size_t>(stage - 1)];
  const auto trainable = model_.reg.mask_for_prefixes(stage_trainable_prefixes(stage));
  const auto frozen = model_.reg.mask_for_prefixes(stage_frozen_prefixes(stage));

  if (st.step == 0) {
    st.frozen_checksum = model_.reg.checksum(frozen);
    std::fill(st.adam.m.begin(), st.adam.m.end(), 0.0);
    std::fill(st.adam.v.begin(), st.adam.v.end(), 0.0);
    st.adam.t = 0;
  }
  if (stage >= 2) build_head_caches(stage);

  while (st.step < sc.steps) {
    const int idx = static_cast<int>(st.data_rng.below(scenes_.size()));
    const double lr = lr_schedule(sc, st.step);
    StepStats stats =
        stage == 1 ? stage1_step(idx) : stage23_step(stage, idx);
    (void)stats;
    if (!adamw_step(model_.reg, st.adam, model_.cfg.train, lr, trainable)) {
      ++st.rejected_steps;
      std::fprintf(stderr,
                   "trainer: rejected step %d of stage %d (non-finite gradients)\n",
                   st.step, stage);
    }
    ++st.step;
    if (model_.cfg.train.checkpoint_every > 0 && sink &&
        st.step % model_.cfg.train.checkpoint_every == 0 && st.step < sc.steps)
      sink(st, "latest");
  }

  if (model_.reg.checksum(frozen) != st.frozen_checksum)
    throw std::runtime_error("trainer: frozen-parameter drift detected in stage " +
                             std::to_string(stage));
  if (sink) sink(st, "stage" + std::to_string(stage));
}

void Trainer::run(TrainState& st, const CheckpointSink& sink) {
  while (!st.done()) {
    run_stage(st.stage, st, sink);
    ++st.stage;
    st.step = 0;
  }
  if (sink) sink(st, "final");
}

nlohmann::json train_state_to_json(const TrainState& st, const Model& m) {
  nlohmann::json j;
  j["schema"] = "checkpoint/1";
  j["config_digest"] = config_digest(m.cfg);
  j["stage"] = st.stage;
  j["step"] = st.step;
  j["rejected_steps"] = st.rejected_steps;
  j["frozen_checksum"] = st.frozen_checksum;
  j["adam"] = {{"m", st.adam.m}, {"v", st.adam.v}, {"t", st.adam.t}};
  j["data_rng"] = st.data_rng.serialize();
  j["params"] = num::params_to_json(m.reg);
  return j;
}

void train_state_from_json(TrainState& st, Model& m, const nlohmann::json& j) {
  if (j.value("schema", "") != "checkpoint/1")
    throw std::invalid_argument("checkpoint: unsupported schema");
  if (j.value("config_digest", "") != config_digest(m.cfg))
    throw std::invalid_argument("checkpoint: config digest mismatch");
  st.stage = j.at("stage").get<int>();
  st.step = j.at("step").get<int>();
  st.rejected_steps = j.value("rejected_steps", 0);
  st.frozen_checksum = j.at("frozen_checksum").get<std::uint64_t>();
  st.adam.m = j.at("adam").at("m").get<std::vector<double>>();
  st.adam.v = j.at("adam").at("v").get<std::vector<double>>();
  st.adam.t = j.at("adam").at("t").get<std::int64_t>();
  st.data_rng.deserialize(j.at("data_rng").get<std::string>());
  num::params_from_json(m.reg, j.at("params"));
  if (st.adam.m.size() != static_cast<std::size_t>(m.reg.total_size()) ||
      st.adam.v.size() != st.adam.m.size())
    throw std::invalid_argument("checkpoint: optimizer state size mismatch");
}

}  // namespace bevfuse::train
