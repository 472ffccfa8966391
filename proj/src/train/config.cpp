#include "train/config.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "num/rng.hpp"

extern char** environ;

namespace bevfuse::train {

ExperimentConfig config_defaults() {
  ExperimentConfig c;
  c.encoder.bev_nx = c.scene.bev_nx;
  c.encoder.bev_ny = c.scene.bev_ny;
  c.encoder.channels = c.scene.bev_channels;
  c.encoder.extent_m = c.scene.extent_m;
  c.pnp.pred.channels = c.scene.bev_channels;
  c.pnp.pred.t_pred = c.scene.t_pred;
  c.pnp.plan.channels = c.scene.bev_channels;
  c.pnp.plan.t_plan = c.scene.t_plan;
  c.pnp.plan.status_dim = 3 + 2 * (c.scene.t_obs - 1);
  return c;
}

namespace {

nlohmann::json stage_to_json(const StageConfig& s) {
  return {{"steps", s.steps}, {"lr", s.lr}, {"warmup", s.warmup},
          {"lr_min", s.lr_min}, {"queue", s.queue}};
}

StageConfig stage_from_json(const nlohmann::json& j, StageConfig s) {
  s.steps = j.value("steps", s.steps);
  s.lr = j.value("lr", s.lr);
  s.warmup = j.value("warmup", s.warmup);
  s.lr_min = j.value("lr_min", s.lr_min);
  s.queue = j.value("queue", s.queue);
  return s;
}

void validate(const ExperimentConfig& c) {
  if (c.encoder.bev_nx != c.scene.bev_nx || c.encoder.bev_ny != c.scene.bev_ny ||
      c.encoder.channels != c.scene.bev_channels ||
      c.encoder.extent_m != c.scene.extent_m)
    throw std::invalid_argument("config: encoder grid must match scene BEV grid");
  if (c.scene.cam_channels != c.encoder.channels)
    throw std::invalid_argument("config: camera channels must match encoder channels");
  if (c.pnp.pred.channels != c.encoder.channels ||
      c.pnp.plan.channels != c.encoder.channels)
    throw std::invalid_argument("config: head channels must match encoder channels");
  if (c.pnp.pred.t_pred != c.scene.t_pred || c.pnp.plan.t_plan != c.scene.t_plan)
    throw std::invalid_argument("config: head horizons must match scene horizons");
  if (c.pnp.plan.status_dim != 3 + 2 * (c.scene.t_obs - 1))
    throw std::invalid_argument("config: planner status_dim inconsistent with t_obs");
  for (const auto& s : c.train.stages) {
    if (s.steps < 0 || s.warmup < 0 || s.queue < 1)
      throw std::invalid_argument("config: bad stage schedule");
    if (!(s.lr > 0.0)) throw std::invalid_argument("config: learning rate must be positive");
  }
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema"] = "config/1";
  j["scene"] = scene::scene_config_to_json(c.scene);
  j["encoder"] = {{"layers", c.encoder.layers},
                  {"heads", c.encoder.heads},
                  {"points", c.encoder.points},
                  {"n_ref", c.encoder.n_ref},
                  {"z_min", c.encoder.z_min},
                  {"z_max", c.encoder.z_max},
                  {"ffn_hidden", c.encoder.ffn_hidden},
                  {"order", enc::order_name(c.encoder.order)},
                  {"strict_layers", c.encoder.strict_layers}};
  j["pnp"] = {{"modes", c.pnp.pred.modes},
              {"hidden", c.pnp.pred.hidden},
              {"mhsa_heads", c.pnp.pred.mhsa_heads},
              {"attn_heads", c.pnp.pred.attn_heads},
              {"attn_points", c.pnp.pred.attn_points},
              {"mode_attention", c.pnp.pred.mode_attention},
              {"refine", c.pnp.pred.refine},
              {"plan_hidden", c.pnp.plan.hidden},
              {"lambda_imi", c.pnp.weights.lambda_imi},
              {"lambda_col", c.pnp.weights.lambda_col},
              {"collision_clamp",
               c.pnp.clamp == pnp::CollisionClamp::CapAtOne ? "cap_at_one" : "verbatim_max"},
              {"collision_norm",
               c.pnp.norm == pnp::CollisionNorm::NSquared ? "n_squared" : "n"},
              {"newton", {{"w_occ", c.pnp.newton.w_occ},
                          {"soften_cells", c.pnp.newton.soften_cells},
                          {"tol", c.pnp.newton.tol},
                          {"max_iter", c.pnp.newton.max_iter}}}};
  j["train"] = {{"seed", c.train.seed},
                {"stages", {stage_to_json(c.train.stages[0]),
                            stage_to_json(c.train.stages[1]),
                            stage_to_json(c.train.stages[2])}},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"weight_decay", c.train.weight_decay},
                {"checkpoint_every", c.train.checkpoint_every},
                {"w_motion", c.train.w_motion},
                {"w_score", c.train.w_score},
                {"w_refine", c.train.w_refine},
                {"w_plan", c.train.w_plan},
                {"collision_agents",
                 c.train.collision_agents == CollisionAgents::Predicted ? "predicted" : "ground_truth"}};
  j["eval"] = {{"mr_threshold_m", c.eval.mr_threshold_m},
               {"epa_alpha", c.eval.epa_alpha},
               {"epa_threshold_m", c.eval.epa_threshold_m},
               {"cr_mode", c.eval.cr_mode == metrics::CrMode::AtHorizon ? "at_horizon" : "cumulative"},
               {"use_newton", c.eval.use_newton}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = config_defaults();
  if (j.contains("schema") && j["schema"] != "config/1")
    throw std::invalid_argument("config: unsupported schema");
  if (j.contains("scene")) c.scene = scene::scene_config_from_json(j["scene"]);
  // Re-derive cross-module dims from the scene block, then apply overrides.
  c.encoder.bev_nx = c.scene.bev_nx;
  c.encoder.bev_ny = c.scene.bev_ny;
  c.encoder.channels = c.scene.bev_channels;
  c.encoder.extent_m = c.scene.extent_m;
  c.pnp.pred.channels = c.scene.bev_channels;
  c.pnp.pred.t_pred = c.scene.t_pred;
  c.pnp.plan.channels = c.scene.bev_channels;
  c.pnp.plan.t_plan = c.scene.t_plan;
  c.pnp.plan.status_dim = 3 + 2 * (c.scene.t_obs - 1);

  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    c.encoder.layers = e.value("layers", c.encoder.layers);
    c.encoder.heads = e.value("heads", c.encoder.heads);
    c.encoder.points = e.value("points", c.encoder.points);
    c.encoder.n_ref = e.value("n_ref", c.encoder.n_ref);
    c.encoder.z_min = e.value("z_min", c.encoder.z_min);
    c.encoder.z_max = e.value("z_max", c.encoder.z_max);
    c.encoder.ffn_hidden = e.value("ffn_hidden", c.encoder.ffn_hidden);
    if (e.contains("order")) c.encoder.order = enc::order_from_name(e["order"].get<std::string>());
    c.encoder.strict_layers = e.value("strict_layers", c.encoder.strict_layers);
  }
  if (j.contains("pnp")) {
    const auto& p = j["pnp"];
    c.pnp.pred.modes = p.value("modes", c.pnp.pred.modes);
    c.pnp.pred.hidden = p.value("hidden", c.pnp.pred.hidden);
    c.pnp.pred.mhsa_heads = p.value("mhsa_heads", c.pnp.pred.mhsa_heads);
    c.pnp.pred.attn_heads = p.value("attn_heads", c.pnp.pred.attn_heads);
    c.pnp.pred.attn_points = p.value("attn_points", c.pnp.pred.attn_points);
    c.pnp.pred.mode_attention = p.value("mode_attention", c.pnp.pred.mode_attention);
    c.pnp.pred.refine = p.value("refine", c.pnp.pred.refine);
    c.pnp.plan.hidden = p.value("plan_hidden", c.pnp.plan.hidden);
    c.pnp.plan.attn_heads = c.pnp.pred.attn_heads;
    c.pnp.plan.attn_points = c.pnp.pred.attn_points;
    c.pnp.weights.lambda_imi = p.value("lambda_imi", c.pnp.weights.lambda_imi);
    c.pnp.weights.lambda_col = p.value("lambda_col", c.pnp.weights.lambda_col);
    if (p.contains("collision_clamp")) {
      const std::string s = p["collision_clamp"].get<std::string>();
      if (s == "cap_at_one") c.pnp.clamp = pnp::CollisionClamp::CapAtOne;
      else if (s == "verbatim_max") c.pnp.clamp = pnp::CollisionClamp::VerbatimMax;
      else throw std::invalid_argument("config: unknown collision_clamp '" + s + "'");
    }
    if (p.contains("collision_norm")) {
      const std::string s = p["collision_norm"].get<std::string>();
      if (s == "n_squared") c.pnp.norm = pnp::CollisionNorm::NSquared;
      else if (s == "n") c.pnp.norm = pnp::CollisionNorm::N;
      else throw std::invalid_argument("config: unknown collision_norm '" + s + "'");
    }
    if (p.contains("newton")) {
      const auto& n = p["newton"];
      c.pnp.newton.w_occ = n.value("w_occ", c.pnp.newton.w_occ);
      c.pnp.newton.soften_cells = n.value("soften_cells", c.pnp.newton.soften_cells);
      c.pnp.newton.tol = n.value("tol", c.pnp.newton.tol);
      c.pnp.newton.max_iter = n.value("max_iter", c.pnp.newton.max_iter);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train.seed = t.value("seed", c.train.seed);
    if (t.contains("stages")) {
      const auto& st = t["stages"];
      if (!st.is_array() || st.size() != 3)
        throw std::invalid_argument("config: train.stages must have exactly 3 entries");
      for (int i = 0; i < 3; ++i)
        c.train.stages[static_cast<std::size_t>(i)] =
            stage_from_json(st[static_cast<std::size_t>(i)], c.train.stages[static_cast<std::size_t>(i)]);
    }
    c.train.beta1 = t.value("beta1", c.train.beta1);
    c.train.beta2 = t.value("beta2", c.train.beta2);
    c.train.adam_eps = t.value("adam_eps", c.train.adam_eps);
    c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
    c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
    c.train.w_motion = t.value("w_motion", c.train.w_motion);
    c.train.w_score = t.value("w_score", c.train.w_score);
    c.train.w_refine = t.value("w_refine", c.train.w_refine);
    c.train.w_plan = t.value("w_plan", c.train.w_plan);
    if (t.contains("collision_agents")) {
      const std::string s = t["collision_agents"].get<std::string>();
      if (s == "predicted") c.train.collision_agents = CollisionAgents::Predicted;
      else if (s == "ground_truth") c.train.collision_agents = CollisionAgents::GroundTruth;
      else throw std::invalid_argument("config: unknown collision_agents '" + s + "'");
    }
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    c.eval.mr_threshold_m = e.value("mr_threshold_m", c.eval.mr_threshold_m);
    c.eval.epa_alpha = e.value("epa_alpha", c.eval.epa_alpha);
    c.eval.epa_threshold_m = e.value("epa_threshold_m", c.eval.epa_threshold_m);
    if (e.contains("cr_mode")) {
      const std::string s = e["cr_mode"].get<std::string>();
      if (s == "at_horizon") c.eval.cr_mode = metrics::CrMode::AtHorizon;
      else if (s == "cumulative") c.eval.cr_mode = metrics::CrMode::CumulativeUpTo;
      else throw std::invalid_argument("config: unknown cr_mode '" + s + "'");
    }
    c.eval.use_newton = e.value("use_newton", c.eval.use_newton);
  }
  validate(c);
  return c;
}

void apply_env_overrides(nlohmann::json& j, const std::string& prefix) {
  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string path = entry.substr(prefix.size(), eq - prefix.size());
    const std::string value = entry.substr(eq + 1);
    nlohmann::json* node = &j;
    std::size_t pos = 0;
    while (true) {
      const auto sep = path.find("__", pos);
      const std::string key = path.substr(pos, sep == std::string::npos ? sep : sep - pos);
      if (key.empty()) break;
      const bool last = sep == std::string::npos;
      if (node->is_array()) {
        const std::size_t idx = std::stoul(key);
        while (node->size() <= idx) node->push_back(nlohmann::json::object());
        node = &(*node)[idx];
      } else {
        node = &(*node)[key];
      }
      if (last) {
        const auto parsed = nlohmann::json::parse(value, nullptr, false);
        *node = parsed.is_discarded() ? nlohmann::json(value) : parsed;
        break;
      }
      pos = sep + 2;
    }
  }
}

ExperimentConfig parse_config_text(const std::string& text, bool with_env) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (with_env) apply_env_overrides(j);
  return config_from_json(j);
}

ExperimentConfig load_config_file(const std::string& path, bool with_env) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), with_env);
}

std::string config_digest(const ExperimentConfig& c) {
  const std::string dump = config_to_json(c).dump();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(num::hash_str(dump)));
  return buf;
}

}  // namespace bevfuse::train
