#include "train/model.hpp"

namespace bevfuse::train {

std::unique_ptr<Model> build_model(const ExperimentConfig& cfg) {
  auto m = std::make_unique<Model>();
  m->cfg = cfg;
  m->encoder = enc::make_encoder(m->reg, cfg.encoder, "encoder");
  m->aux_head = num::make_mlp(m->reg, "aux.occ_head", {cfg.encoder.channels, 1});
  m->pred = pnp::make_prediction(m->reg, cfg.pnp.pred, "pred");
  m->plan = pnp::make_planner(m->reg, cfg.pnp.plan, "plan");
  m->reg.finalize(cfg.train.seed);
  return m;
}

scene::Pose2 ego_motion(const scene::Scene& s, int t) {
  return scene::relative_pose(s.ego[static_cast<std::size_t>(t - 1)],
                              s.ego[static_cast<std::size_t>(t)]);
}

scene::BevGrid encode_scene(const Model& m, const scene::Scene& s, int queue) {
  const int t_cur = s.cfg.t_obs - 1;
  const int t_start = std::max(0, t_cur - (queue - 1));
  scene::BevGrid bev;
  bool has_prev = false;
  for (int t = t_start; t <= t_cur; ++t) {
    const enc::FrameInputs in = enc::make_frame_inputs(s, t);
    const scene::Pose2 motion =
        has_prev ? ego_motion(s, t) : scene::Pose2{0.0, 0.0, 0.0};
    bev = enc::encode(m.reg, m.encoder, in, has_prev ? &bev : nullptr, motion,
                      nullptr);
    has_prev = true;
  }
  return bev;
}

}  // namespace bevfuse::train
