#pragma once

#include <span>
#include <string>

#include "metrics/report.hpp"
#include "pnp/trajectory.hpp"
#include "train/trainer.hpp"

namespace bevfuse::train {

// Deterministic scene corpus: scenes with seeds seed, seed+1, ... written as
// scene_<index>.json.
void run_synth(const ExperimentConfig& cfg, std::uint64_t seed, int count,
               const std::string& out_dir);

// Three-stage schedule over the scenes in scene_dir; checkpoints land in
// out_dir (checkpoint_stage<k>.json, checkpoint_final.json, and
// checkpoint_latest.json when checkpoint_every is set).
void run_train(const ExperimentConfig& cfg, const std::string& scene_dir,
               const std::string& out_dir, const std::string& resume);

// Per-scene forward artifacts produced during evaluation.
struct SceneEval {
  pnp::Forecast forecast;
  pnp::Plan plan;
  scene::OccupancySequence occ_pred;
};

SceneEval eval_scene(const Model& m, const scene::Scene& s,
                     const ExperimentConfig& cfg);
SceneEval eval_scene_oracle(const scene::Scene& s);

// Metric report over a scene set. `m` may be null only in oracle mode.
// When dump_dir is non-empty, per-scene forecast/plan/occupancy files are
// written there.
metrics::Report evaluate_scenes(const Model* m, const ExperimentConfig& cfg,
                                std::span<const scene::Scene> scenes,
                                bool oracle, const std::string& dump_dir);

metrics::Report run_eval(const ExperimentConfig& cfg,
                         const std::string& checkpoint,
                         const std::string& scene_dir,
                         const std::string& out_dir, bool oracle);

void run_optimize(const ExperimentConfig& cfg, const std::string& plan_path,
                  const std::string& occ_path, const std::string& out_path);

void run_report(const std::string& report_path, const std::string& scene_path,
                const std::string& forecast_path, const std::string& plan_path,
                const std::string& out_dir);

std::vector<scene::Scene> load_scene_dir(const std::string& dir);
std::unique_ptr<Model> load_model(const ExperimentConfig& cfg,
                                  const std::string& checkpoint_path,
                                  TrainState* st = nullptr);

}  // namespace bevfuse::train
