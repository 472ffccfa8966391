#pragma once

#include <memory>

#include "encoder/encoder.hpp"
#include "pnp/planner.hpp"
#include "pnp/prediction.hpp"
#include "train/config.hpp"

namespace bevfuse::train {

// All learnable components plus the auxiliary occupancy-reconstruction head
// that supervises the encoder in stage one.
struct Model {
  ExperimentConfig cfg;
  num::ParamRegistry reg;
  enc::EncoderParams encoder;
  num::MlpParams aux_head;  // per-cell occupancy logit from fused features
  pnp::PredictionParams pred;
  pnp::PlannerParams plan;
};

std::unique_ptr<Model> build_model(const ExperimentConfig& cfg);

// Fused BEV features at the current frame: recurrent chain over the last
// `queue` observed frames, bootstrapping with no history.
scene::BevGrid encode_scene(const Model& m, const scene::Scene& s, int queue);

// Relative ego motion from frame t-1 to frame t.
scene::Pose2 ego_motion(const scene::Scene& s, int t);

}  // namespace bevfuse::train
