#pragma once

#include <functional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pnp/losses.hpp"
#include "train/model.hpp"

namespace bevfuse::train {

// Linear warmup to the stage learning rate, then cosine annealing to lr_min.
double lr_schedule(const StageConfig& s, int step);

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
};

// Decoupled-weight-decay Adam over the masked arena slots. Returns false
// without touching parameters when any trainable gradient is non-finite.
bool adamw_step(num::ParamRegistry& reg, AdamState& adam, const TrainConfig& tc,
                double lr, const std::vector<std::uint8_t>& trainable);

struct TrainState {
  int stage = 1;  // 1..3, 4 when done
  int step = 0;   // step within the current stage
  AdamState adam;
  num::Rng data_rng;
  std::uint64_t frozen_checksum = 0;
  int rejected_steps = 0;

  bool done() const { return stage > 3; }
};

TrainState init_train_state(const Model& m);

// Parameter groups updated per stage; everything else is frozen and verified
// bit-unchanged at stage end.
std::vector<std::string> stage_trainable_prefixes(int stage);
std::vector<std::string> stage_frozen_prefixes(int stage);

struct StepStats {
  double loss = 0.0;
  double imitation = 0.0;
  double collision = 0.0;
};

class Trainer {
 public:
  Trainer(Model& model, std::vector<scene::Scene> scenes);

  using CheckpointSink =
      std::function<void(const TrainState& st, const std::string& tag)>;

  // Runs the schedule from wherever `st` points to completion.
  void run(TrainState& st, const CheckpointSink& sink = {});
  // Runs exactly one stage to completion (resuming mid-stage if st.step > 0).
  void run_stage(int stage, TrainState& st, const CheckpointSink& sink = {});

  // Stage-one objective over the whole corpus with the current parameters.
  double aux_corpus_loss();

  const std::vector<scene::Scene>& scenes() const { return scenes_; }

 private:
  StepStats stage1_step(int scene_idx);
  StepStats stage23_step(int stage, int scene_idx);
  void build_head_caches(int stage);

  Model& model_;
  std::vector<scene::Scene> scenes_;

  // Stage-one render cache: frame inputs and BEV-resolution occupancy
  // targets, both pure functions of the scene.
  struct FrameData {
    enc::FrameInputs inputs;
    std::vector<std::uint8_t> occ;  // binarized, cells
  };
  std::vector<std::vector<FrameData>> frames_;  // [scene][frame offset]
  void ensure_frames(int scene_idx, int queue);

  // Frozen-encoder caches for stages two and three.
  struct SceneHead {
    scene::BevGrid bev;
    std::vector<pnp::AgentObs> obs;
    std::vector<std::vector<scene::Vec2>> gt_future;  // per agent, t_pred
    std::vector<scene::Vec2> plan_labels;             // t_plan
    std::vector<double> status;
    std::vector<pnp::AgentDisc> discs_gt;
    std::vector<pnp::AgentDisc> discs_pred;  // stage 3, frozen forecasts
  };
  std::vector<SceneHead> heads_;
  int head_cache_stage_ = 0;
};

nlohmann::json train_state_to_json(const TrainState& st, const Model& m);
void train_state_from_json(TrainState& st, Model& m, const nlohmann::json& j);

}  // namespace bevfuse::train
