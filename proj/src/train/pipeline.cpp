#include "train/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "metrics/forecast_metrics.hpp"
#include "metrics/occ_metrics.hpp"
#include "metrics/plan_metrics.hpp"
#include "pnp/newton.hpp"
#include "plot/plot.hpp"
#include "scene/occupancy.hpp"
#include "train/fsio.hpp"

namespace bevfuse::train {

using scene::Vec2;

namespace {

std::string index_name(const char* stem, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.json", stem, i);
  return buf;
}

// Oriented boxes for a predicted agent track; headings follow the waypoint
// direction, starting from the agent's observed pose.
std::vector<scene::Pose2> waypoint_poses(const std::vector<Vec2>& w, Vec2 start,
                                         double start_yaw) {
  std::vector<scene::Pose2> poses;
  double yaw = start_yaw;
  Vec2 prev = start;
  for (const Vec2& p : w) {
    const double dx = p.x - prev.x, dy = p.y - prev.y;
    if (std::hypot(dx, dy) > 1e-9) yaw = std::atan2(dy, dx);
    poses.push_back({p.x, p.y, yaw});
    prev = p;
  }
  return poses;
}

scene::OccupancySequence forecast_occupancy(const scene::Scene& s,
                                            const pnp::Forecast& f) {
  std::vector<scene::AgentFuture> futures;
  for (const auto& af : f.agents) {
    const scene::AgentTrack* track = nullptr;
    for (const auto& a : s.agents)
      if (a.id == af.agent_id) track = &a;
    if (!track || af.modes.empty()) continue;
    int best = 0;
    for (std::size_t k = 1; k < af.modes.size(); ++k)
      if (af.modes[k].score > af.modes[static_cast<std::size_t>(best)].score)
        best = static_cast<int>(k);
    const scene::Pose2& ego = s.current_ego();
    const scene::Pose2& w = track->at(s.cfg.t_obs - 1);
    const Vec2 start = ego.apply_inverse({w.x, w.y});
    scene::AgentFuture fut;
    fut.id = af.agent_id;
    fut.half_length = track->half_length;
    fut.half_width = track->half_width;
    fut.poses = waypoint_poses(af.modes[static_cast<std::size_t>(best)].waypoints,
                               start, scene::wrap_angle(w.yaw - ego.yaw));
    futures.push_back(std::move(fut));
  }
  const int n = std::max(2, static_cast<int>(std::llround(s.cfg.far_m / s.cfg.occ_cell_m)));
  const scene::OccupancyGridSpec spec{n, n, s.cfg.occ_cell_m};
  return scene::rasterize_occupancy(futures, spec, s.cfg.t_pred, s.cfg.near_m,
                                    s.cfg.far_m);
}

std::vector<std::vector<Vec2>> gt_futures_ego(const scene::Scene& s) {
  std::vector<std::vector<Vec2>> out;
  const scene::Pose2& ego = s.current_ego();
  for (const auto& a : s.agents) {
    std::vector<Vec2> fut;
    for (int t = 0; t < s.cfg.t_pred; ++t) {
      const scene::Pose2& w = a.at(s.cfg.t_obs + t);
      fut.push_back(ego.apply_inverse({w.x, w.y}));
    }
    out.push_back(std::move(fut));
  }
  return out;
}

std::vector<Vec2> gt_plan_ego(const scene::Scene& s) {
  std::vector<Vec2> out;
  const scene::Pose2& ego = s.current_ego();
  for (int t = 0; t < s.cfg.t_plan; ++t) {
    const scene::Pose2& w = s.ego[static_cast<std::size_t>(s.cfg.t_obs + t)];
    out.push_back(ego.apply_inverse({w.x, w.y}));
  }
  return out;
}

}  // namespace

void run_synth(const ExperimentConfig& cfg, std::uint64_t seed, int count,
               const std::string& out_dir) {
  if (count < 1) throw std::invalid_argument("synth: count must be >= 1");
  ensure_dir(out_dir);
  for (int i = 0; i < count; ++i) {
    const scene::Scene s = scene::generate_scene(seed + static_cast<std::uint64_t>(i), cfg.scene);
    write_text(out_dir + "/" + index_name("scene", i), scene::scene_to_string(s));
  }
}

std::vector<scene::Scene> load_scene_dir(const std::string& dir) {
  std::vector<scene::Scene> scenes;
  for (const auto& path : list_json_files(dir)) {
    const auto j = nlohmann::json::parse(read_text(path));
    if (j.value("schema", "") != "scene/1") continue;
    scenes.push_back(scene::scene_from_json(j));
  }
  if (scenes.empty()) throw IoError("no scene files in " + dir);
  return scenes;
}

std::unique_ptr<Model> load_model(const ExperimentConfig& cfg,
                                  const std::string& checkpoint_path,
                                  TrainState* st) {
  auto m = build_model(cfg);
  TrainState local = init_train_state(*m);
  TrainState& state = st ? *st : local;
  state = init_train_state(*m);
  const auto j = nlohmann::json::parse(read_text(checkpoint_path));
  train_state_from_json(state, *m, j);
  return m;
}

void run_train(const ExperimentConfig& cfg, const std::string& scene_dir,
               const std::string& out_dir, const std::string& resume) {
  ensure_dir(out_dir);
  auto scenes = load_scene_dir(scene_dir);
  auto model = build_model(cfg);
  TrainState st = init_train_state(*model);
  if (!resume.empty()) {
    const auto j = nlohmann::json::parse(read_text(resume));
    train_state_from_json(st, *model, j);
  }
  Trainer trainer(*model, std::move(scenes));
  const auto sink = [&](const TrainState& s, const std::string& tag) {
    write_text(out_dir + "/checkpoint_" + tag + ".json",
               train_state_to_json(s, *model).dump() + "\n");
  };
  trainer.run(st, sink);
}

SceneEval eval_scene(const Model& m, const scene::Scene& s,
                     const ExperimentConfig& cfg) {
  SceneEval out;
  const int queue = cfg.train.stages[1].queue;
  const scene::BevGrid bev = encode_scene(m, s, queue);
  const auto obs = pnp::make_agent_obs(s);
  const pnp::PredOutput pred = pnp::predict(m.reg, m.pred, bev, obs, nullptr);
  out.forecast = pnp::to_forecast(pred, obs, s.seed, cfg.pnp.pred.refine);
  const auto status = pnp::build_ego_status(s);
  std::vector<Vec2> waypoints =
      pnp::plan_forward(m.reg, m.plan, bev, s.command, status, nullptr);
  out.occ_pred = forecast_occupancy(s, out.forecast);
  if (cfg.eval.use_newton)
    waypoints = pnp::optimize_plan(waypoints, out.occ_pred, cfg.pnp.newton);
  out.plan.scene_seed = s.seed;
  out.plan.command = s.command;
  out.plan.waypoints = std::move(waypoints);
  return out;
}

SceneEval eval_scene_oracle(const scene::Scene& s) {
  SceneEval out;
  out.forecast.scene_seed = s.seed;
  const auto futures = gt_futures_ego(s);
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    pnp::AgentForecast af;
    af.agent_id = s.agents[i].id;
    af.modes.push_back(pnp::ModeTraj{1.0, futures[i]});
    out.forecast.agents.push_back(std::move(af));
  }
  out.plan.scene_seed = s.seed;
  out.plan.command = s.command;
  out.plan.waypoints = gt_plan_ego(s);
  out.occ_pred = scene::gt_occupancy(s, s.cfg.t_pred);
  return out;
}

metrics::Report evaluate_scenes(const Model* m, const ExperimentConfig& cfg,
                                std::span<const scene::Scene> scenes,
                                bool oracle, const std::string& dump_dir) {
  if (!oracle && !m) throw std::invalid_argument("eval: model required");
  if (!dump_dir.empty()) ensure_dir(dump_dir);

  std::vector<metrics::ForecastEvalItem> items;
  double iou_n = 0.0, iou_f = 0.0, vpq_n = 0.0, vpq_f = 0.0;
  std::vector<metrics::PlanSample> plan_samples;

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const scene::Scene& s = scenes[i];
    const SceneEval ev = oracle ? eval_scene_oracle(s) : eval_scene(*m, s, cfg);

    const auto futures = gt_futures_ego(s);
    for (std::size_t a = 0; a < ev.forecast.agents.size(); ++a) {
      metrics::ForecastEvalItem item;
      item.matched = true;
      item.modes = ev.forecast.agents[a].modes;
      item.gt = futures[a];
      items.push_back(std::move(item));
    }

    const scene::OccupancySequence occ_gt = scene::gt_occupancy(s, s.cfg.t_pred);
    iou_n += metrics::occupancy_iou(ev.occ_pred, occ_gt, s.cfg.near_m);
    iou_f += metrics::occupancy_iou(ev.occ_pred, occ_gt, s.cfg.far_m);
    vpq_n += metrics::occupancy_vpq(ev.occ_pred, occ_gt, s.cfg.near_m);
    vpq_f += metrics::occupancy_vpq(ev.occ_pred, occ_gt, s.cfg.far_m);

    metrics::PlanSample ps;
    ps.plan = ev.plan.waypoints;
    ps.gt = gt_plan_ego(s);
    ps.ego_half_length = s.ego_half_length;
    ps.ego_half_width = s.ego_half_width;
    const scene::Pose2& ego = s.current_ego();
    ps.agents.resize(static_cast<std::size_t>(s.cfg.t_plan));
    for (int t = 0; t < s.cfg.t_plan; ++t)
      for (const auto& a : s.agents) {
        const scene::Pose2& w = a.at(s.cfg.t_obs + t);
        const Vec2 p = ego.apply_inverse({w.x, w.y});
        ps.agents[static_cast<std::size_t>(t)].push_back(
            {{p.x, p.y, scene::wrap_angle(w.yaw - ego.yaw)}, a.half_length, a.half_width});
      }
    plan_samples.push_back(std::move(ps));

    if (!dump_dir.empty()) {
      const int idx = static_cast<int>(i);
      write_text(dump_dir + "/" + index_name("forecast", idx),
                 pnp::forecast_to_json(ev.forecast).dump() + "\n");
      write_text(dump_dir + "/" + index_name("plan", idx),
                 pnp::plan_to_json(ev.plan).dump() + "\n");
      write_text(dump_dir + "/" + index_name("occupancy_pred", idx),
                 scene::occupancy_to_json(ev.occ_pred).dump() + "\n");
    }
  }

  metrics::Report r;
  r.config_digest = config_digest(cfg);
  r.counts["scenes"] = static_cast<std::int64_t>(scenes.size());
  r.counts["agents"] = static_cast<std::int64_t>(items.size());

  if (!items.empty()) {
    double ade = 0.0, fde = 0.0;
    for (const auto& item : items) {
      ade += metrics::min_ade(item);
      fde += metrics::min_fde(item);
    }
    r.set("minADE", ade / static_cast<double>(items.size()));
    r.set("minFDE", fde / static_cast<double>(items.size()));
    r.set("MR", metrics::miss_rate(items, cfg.eval.mr_threshold_m));
    const auto e = metrics::epa(items, 0, cfg.eval.epa_alpha, cfg.eval.epa_threshold_m);
    if (e) r.set("EPA", *e);
  }
  const double n = static_cast<double>(scenes.size());
  r.set("IoU_near", iou_n / n);
  r.set("IoU_far", iou_f / n);
  r.set("VPQ_near", vpq_n / n);
  r.set("VPQ_far", vpq_f / n);

  const metrics::PlanMetrics pm = metrics::plan_metrics(plan_samples, cfg.eval.cr_mode);
  r.set("DE_avg", pm.de_avg);
  r.set("CR_1s", pm.cr_1s);
  r.set("CR_2s", pm.cr_2s);
  r.set("CR_3s", pm.cr_3s);
  r.set("CR_avg", pm.cr_avg);
  r.set("CR_traj", pm.cr_traj);
  return r;
}

metrics::Report run_eval(const ExperimentConfig& cfg, const std::string& checkpoint,
                         const std::string& scene_dir, const std::string& out_dir,
                         bool oracle) {
  ensure_dir(out_dir);
  const auto scenes = load_scene_dir(scene_dir);
  std::unique_ptr<Model> model;
  if (!oracle) {
    if (checkpoint.empty())
      throw std::invalid_argument("eval: checkpoint required unless oracle mode");
    model = load_model(cfg, checkpoint);
  }
  const metrics::Report r =
      evaluate_scenes(model.get(), cfg, scenes, oracle, out_dir);
  write_text(out_dir + "/report.json", metrics::report_to_json(r).dump(2) + "\n");
  write_text(out_dir + "/metrics.csv", metrics::report_to_csv(r));
  return r;
}

void run_optimize(const ExperimentConfig& cfg, const std::string& plan_path,
                  const std::string& occ_path, const std::string& out_path) {
  pnp::Plan plan = pnp::plan_from_json(nlohmann::json::parse(read_text(plan_path)));
  const scene::OccupancySequence occ =
      scene::occupancy_from_json(nlohmann::json::parse(read_text(occ_path)));
  plan.waypoints = pnp::optimize_plan(plan.waypoints, occ, cfg.pnp.newton);
  write_text(out_path, pnp::plan_to_json(plan).dump() + "\n");
}

void run_report(const std::string& report_path, const std::string& scene_path,
                const std::string& forecast_path, const std::string& plan_path,
                const std::string& out_dir) {
  if (report_path.empty() && scene_path.empty())
    throw std::invalid_argument("report: need a report file or a scene file");
  ensure_dir(out_dir);
  if (!report_path.empty()) {
    const auto r = metrics::report_from_json(nlohmann::json::parse(read_text(report_path)));
    write_text(out_dir + "/metrics.csv", metrics::report_to_csv(r));
  }
  if (!scene_path.empty()) {
    const scene::Scene s =
        scene::scene_from_json(nlohmann::json::parse(read_text(scene_path)));
    pnp::Forecast forecast;
    pnp::Plan plan;
    const pnp::Forecast* fp = nullptr;
    const pnp::Plan* pp = nullptr;
    if (!forecast_path.empty()) {
      forecast = pnp::forecast_from_json(nlohmann::json::parse(read_text(forecast_path)));
      fp = &forecast;
    }
    if (!plan_path.empty()) {
      plan = pnp::plan_from_json(nlohmann::json::parse(read_text(plan_path)));
      pp = &plan;
    }
    plot::write_png(plot::plot_trajectories(s, fp, pp), out_dir + "/trajectories.png");
    plot::write_png(plot::plot_bev(s), out_dir + "/bev.png");
  }
}

}  // namespace bevfuse::train
