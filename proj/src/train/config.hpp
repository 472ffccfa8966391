#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "encoder/encoder.hpp"
#include "metrics/plan_metrics.hpp"
#include "pnp/losses.hpp"
#include "pnp/newton.hpp"
#include "pnp/planner.hpp"
#include "pnp/prediction.hpp"
#include "scene/scene.hpp"

namespace bevfuse::train {

struct StageConfig {
  int steps = 400;
  double lr = 2e-4;
  int warmup = 100;
  double lr_min = 1e-5;
  int queue = 3;  // recurrent window over the frame chain
};

enum class CollisionAgents { Predicted, GroundTruth };

struct TrainConfig {
  std::uint64_t seed = 1;
  std::array<StageConfig, 3> stages{
      StageConfig{400, 2e-4, 100, 1e-5, 5},
      StageConfig{800, 2e-4, 100, 1e-5, 3},
      StageConfig{300, 1e-4, 50, 1e-5, 3}};
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double weight_decay = 0.01;
  int checkpoint_every = 0;  // additionally checkpoint every N steps when > 0
  double w_motion = 1.0, w_score = 0.5, w_refine = 1.0, w_plan = 1.0;
  CollisionAgents collision_agents = CollisionAgents::Predicted;
};

struct EvalConfig {
  double mr_threshold_m = 2.0;
  double epa_alpha = 0.5;        // VIP3D convention
  double epa_threshold_m = 2.0;  // imported with the metric lineage
  metrics::CrMode cr_mode = metrics::CrMode::AtHorizon;
  bool use_newton = true;  // trajectory optimization at inference
};

struct PnpConfig {
  pnp::PredictionConfig pred;
  pnp::PlannerConfig plan;
  pnp::LossWeights weights;
  pnp::CollisionClamp clamp = pnp::CollisionClamp::CapAtOne;
  pnp::CollisionNorm norm = pnp::CollisionNorm::NSquared;
  pnp::NewtonOptions newton;
};

struct ExperimentConfig {
  scene::SceneConfig scene;
  enc::EncoderConfig encoder;
  PnpConfig pnp;
  TrainConfig train;
  EvalConfig eval;
};

// Defaults with all cross-module dims consistent.
ExperimentConfig config_defaults();

nlohmann::json config_to_json(const ExperimentConfig& c);
// Parses a (possibly partial) JSON document on top of the defaults, then
// revalidates cross-module consistency.
ExperimentConfig config_from_json(const nlohmann::json& j);

// Environment overrides: BEVFUSE_<path with __ separators> = JSON scalar,
// e.g. BEVFUSE_train__seed=7 or BEVFUSE_scene__noise_sigma=0.0.
void apply_env_overrides(nlohmann::json& j, const std::string& prefix = "BEVFUSE_");

ExperimentConfig load_config_file(const std::string& path, bool with_env = true);
ExperimentConfig parse_config_text(const std::string& text, bool with_env = true);

// Hex FNV digest of the canonical config serialization.
std::string config_digest(const ExperimentConfig& c);

}  // namespace bevfuse::train
