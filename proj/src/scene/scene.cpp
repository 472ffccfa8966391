#include "scene/scene.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "num/rng.hpp"

namespace bevfuse::scene {

using num::Rng;

const char* command_name(Command c) {
  switch (c) {
    case Command::Forward: return "forward";
    case Command::Left: return "left";
    case Command::Right: return "right";
  }
  return "forward";
}

Command command_from_name(const std::string& s) {
  if (s == "forward") return Command::Forward;
  if (s == "left") return Command::Left;
  if (s == "right") return Command::Right;
  throw std::invalid_argument("scene: unknown command '" + s + "'");
}

CameraModel camera_at(const CameraRig& rig, const Pose2& ego) {
  CameraModel cam;
  cam.fx = rig.fx;
  cam.fy = rig.fy;
  cam.cx = rig.cx;
  cam.cy = rig.cy;
  cam.width = rig.width;
  cam.height = rig.height;
  cam.channels = rig.channels;
  const Vec2 center2 = ego.apply({rig.offset.x, rig.offset.y});
  const Vec3 center{center2.x, center2.y, rig.offset.z};
  const double psi = ego.yaw + rig.yaw_offset;
  const double c = std::cos(psi), s = std::sin(psi);
  // Rows: camera x (right), y (down), z (optical axis) in world coordinates.
  cam.rot = {s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0};
  cam.trans = {-(cam.rot[0] * center.x + cam.rot[1] * center.y + cam.rot[2] * center.z),
               -(cam.rot[3] * center.x + cam.rot[4] * center.y + cam.rot[5] * center.z),
               -(cam.rot[6] * center.x + cam.rot[7] * center.y + cam.rot[8] * center.z)};
  return cam;
}

namespace {

void validate(const SceneConfig& c) {
  if (c.extent_m <= 0.0 || c.bev_nx <= 0 || c.bev_ny <= 0 || c.bev_channels <= 0)
    throw std::invalid_argument("scene: degenerate BEV extent/dims");
  if (c.t_obs < 2 || c.t_pred < 1 || c.t_plan < 1 || c.dt <= 0.0)
    throw std::invalid_argument("scene: degenerate timebase");
  if (c.max_agents < 1) throw std::invalid_argument("scene: max_agents < 1");
  if (c.cam_count < 1 || c.cam_width < 2 || c.cam_height < 2)
    throw std::invalid_argument("scene: degenerate camera dims");
  if (c.occ_cell_m <= 0.0 || c.near_m <= 0.0 || c.far_m < c.near_m)
    throw std::invalid_argument("scene: degenerate occupancy geometry");
}

std::vector<Pose2> roll_ego(Rng& rng, const SceneConfig& cfg, Command cmd) {
  const int total = cfg.t_obs + cfg.t_plan;
  double speed = rng.uniform(cfg.ego_speed_min, cfg.ego_speed_max);
  const double accel = rng.uniform(-0.4, 0.4);
  double kappa = 0.0;
  switch (cmd) {
    case Command::Forward: kappa = rng.uniform(-0.01, 0.01); break;
    case Command::Left: kappa = rng.uniform(0.03, 0.08); break;
    case Command::Right: kappa = -rng.uniform(0.03, 0.08); break;
  }
  std::vector<Pose2> poses;
  poses.reserve(static_cast<std::size_t>(total));
  Pose2 cur{0.0, 0.0, 0.0};
  poses.push_back(cur);
  for (int t = 1; t < total; ++t) {
    speed = std::min(std::max(speed + accel * cfg.dt, 0.5), cfg.ego_speed_max);
    const double ds = speed * cfg.dt;
    cur.x += ds * std::cos(cur.yaw);
    cur.y += ds * std::sin(cur.yaw);
    cur.yaw = wrap_angle(cur.yaw + kappa * ds);
    poses.push_back(cur);
  }
  return poses;
}

// Closed-form track: exact constant-velocity line or constant-turn-rate arc
// around the spawn state at the current frame.
std::vector<Pose2> roll_agent(const Pose2& spawn, double speed, double omega,
                              const SceneConfig& cfg) {
  const int total = cfg.t_obs + cfg.t_pred;
  const int t0 = cfg.t_obs - 1;
  std::vector<Pose2> poses(static_cast<std::size_t>(total));
  for (int t = 0; t < total; ++t) {
    const double dt = (t - t0) * cfg.dt;
    if (std::fabs(omega) < 1e-9) {
      poses[t] = {spawn.x + dt * speed * std::cos(spawn.yaw),
                  spawn.y + dt * speed * std::sin(spawn.yaw), spawn.yaw};
    } else {
      const double r = speed / omega;
      const double h0 = spawn.yaw, h1 = spawn.yaw + omega * dt;
      poses[t] = {spawn.x + r * (std::sin(h1) - std::sin(h0)),
                  spawn.y - r * (std::cos(h1) - std::cos(h0)), wrap_angle(h1)};
    }
  }
  return poses;
}

AgentTrack make_agent(Rng& rng, int id, const Pose2& cur_ego,
                      const SceneConfig& cfg) {
  AgentTrack a;
  a.id = id;
  a.half_length = rng.uniform(1.0, 2.5);
  a.half_width = rng.uniform(0.6, 1.0);
  a.radius = std::hypot(a.half_length, a.half_width);
  a.height = cfg.agent_height_m;

  Vec2 local{0.0, 0.0};
  for (int attempt = 0; attempt < 32; ++attempt) {
    local = {rng.uniform(-0.8, 0.8) * cfg.extent_m * 0.5,
             rng.uniform(-0.8, 0.8) * cfg.extent_m * 0.5};
    if (std::fabs(local.x) > 4.0 || std::fabs(local.y) > 3.0) break;
  }
  const Vec2 world = cur_ego.apply(local);
  const double heading = rng.uniform(-M_PI, M_PI);
  const Pose2 spawn{world.x, world.y, heading};

  const double pick = rng.uniform();
  double speed = 0.0, omega = 0.0;
  if (pick < 0.5) {
    a.motion = "constant_velocity";
    speed = rng.uniform(0.0, cfg.agent_speed_max);
  } else if (pick < 0.8) {
    a.motion = "turning";
    speed = rng.uniform(1.0, cfg.agent_speed_max);
    omega = (rng.uniform() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.1, 0.4);
  } else {
    a.motion = "uturn";
    speed = rng.uniform(1.0, 0.6 * cfg.agent_speed_max);
    const double span = cfg.t_pred * cfg.dt * rng.uniform(0.6, 1.0);
    omega = (rng.uniform() < 0.5 ? 1.0 : -1.0) * M_PI / span;
  }
  a.states = roll_agent(spawn, speed, omega, cfg);
  return a;
}

AgentTrack make_hazard(Rng& rng, int id, const std::vector<Pose2>& ego,
                       double ego_half_width, const SceneConfig& cfg) {
  AgentTrack a;
  a.id = id;
  a.half_length = rng.uniform(1.0, 1.8);
  a.half_width = rng.uniform(0.6, 0.9);
  a.radius = std::hypot(a.half_length, a.half_width);
  a.height = cfg.agent_height_m;
  a.motion = "constant_velocity";

  const int k = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.t_plan - 2)));
  const Pose2& anchor = ego[static_cast<std::size_t>(cfg.t_obs - 1 + k)];
  const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const double gap = rng.uniform(0.15, 0.5);
  const Vec2 world = anchor.apply({0.0, side * (ego_half_width + a.half_width + gap)});
  const Pose2 spawn{world.x, world.y, anchor.yaw};
  const double speed = rng.uniform(0.0, 0.2);
  a.states = roll_agent(spawn, speed, 0.0, cfg);
  return a;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  validate(cfg);
  Rng rng(num::mix_seed(seed, num::hash_str("scene")));

  Scene s;
  s.seed = seed;
  s.cfg = cfg;
  s.command = static_cast<Command>(rng.below(3));
  s.ego = roll_ego(rng, cfg, s.command);

  const int n_agents = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_agents)));
  int next_id = 1;
  if (cfg.hazard_rate > 0.0 && rng.uniform() < cfg.hazard_rate)
    s.agents.push_back(make_hazard(rng, next_id++, s.ego, s.ego_half_width, cfg));
  while (static_cast<int>(s.agents.size()) < n_agents)
    s.agents.push_back(make_agent(rng, next_id++, s.current_ego(), cfg));

  const double yaw = cfg.cam_yaw_deg * M_PI / 180.0;
  for (int i = 0; i < cfg.cam_count; ++i) {
    CameraRig rig;
    rig.yaw_offset = (cfg.cam_count == 1) ? 0.0 : (i % 2 == 0 ? yaw : -yaw);
    rig.offset = {1.0, (i % 2 == 0 ? 0.3 : -0.3), cfg.cam_height_m};
    rig.fx = rig.fy = cfg.cam_focal;
    rig.cx = (cfg.cam_width - 1) / 2.0;
    rig.cy = (cfg.cam_height - 1) / 2.0;
    rig.width = cfg.cam_width;
    rig.height = cfg.cam_height;
    rig.channels = cfg.cam_channels;
    s.cameras.push_back(rig);
  }
  return s;
}

namespace {

nlohmann::json pose_to_json(const Pose2& p) {
  return nlohmann::json::array({p.x, p.y, p.yaw});
}

Pose2 pose_from_json(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

nlohmann::json poses_to_json(const std::vector<Pose2>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : v) a.push_back(pose_to_json(p));
  return a;
}

std::vector<Pose2> poses_from_json(const nlohmann::json& j) {
  std::vector<Pose2> v;
  for (const auto& e : j) v.push_back(pose_from_json(e));
  return v;
}

}  // namespace

nlohmann::json scene_config_to_json(const SceneConfig& c) {
  return nlohmann::json{{"dt", c.dt},
                        {"t_obs", c.t_obs},
                        {"t_pred", c.t_pred},
                        {"t_plan", c.t_plan},
                        {"bev_nx", c.bev_nx},
                        {"bev_ny", c.bev_ny},
                        {"bev_channels", c.bev_channels},
                        {"extent_m", c.extent_m},
                        {"cam_count", c.cam_count},
                        {"cam_width", c.cam_width},
                        {"cam_height", c.cam_height},
                        {"cam_channels", c.cam_channels},
                        {"cam_focal", c.cam_focal},
                        {"cam_yaw_deg", c.cam_yaw_deg},
                        {"cam_height_m", c.cam_height_m},
                        {"max_agents", c.max_agents},
                        {"agent_speed_max", c.agent_speed_max},
                        {"ego_speed_min", c.ego_speed_min},
                        {"ego_speed_max", c.ego_speed_max},
                        {"hazard_rate", c.hazard_rate},
                        {"noise_sigma", c.noise_sigma},
                        {"agent_height_m", c.agent_height_m},
                        {"occ_cell_m", c.occ_cell_m},
                        {"near_m", c.near_m},
                        {"far_m", c.far_m}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  c.dt = j.value("dt", c.dt);
  c.t_obs = j.value("t_obs", c.t_obs);
  c.t_pred = j.value("t_pred", c.t_pred);
  c.t_plan = j.value("t_plan", c.t_plan);
  c.bev_nx = j.value("bev_nx", c.bev_nx);
  c.bev_ny = j.value("bev_ny", c.bev_ny);
  c.bev_channels = j.value("bev_channels", c.bev_channels);
  c.extent_m = j.value("extent_m", c.extent_m);
  c.cam_count = j.value("cam_count", c.cam_count);
  c.cam_width = j.value("cam_width", c.cam_width);
  c.cam_height = j.value("cam_height", c.cam_height);
  c.cam_channels = j.value("cam_channels", c.cam_channels);
  c.cam_focal = j.value("cam_focal", c.cam_focal);
  c.cam_yaw_deg = j.value("cam_yaw_deg", c.cam_yaw_deg);
  c.cam_height_m = j.value("cam_height_m", c.cam_height_m);
  c.max_agents = j.value("max_agents", c.max_agents);
  c.agent_speed_max = j.value("agent_speed_max", c.agent_speed_max);
  c.ego_speed_min = j.value("ego_speed_min", c.ego_speed_min);
  c.ego_speed_max = j.value("ego_speed_max", c.ego_speed_max);
  c.hazard_rate = j.value("hazard_rate", c.hazard_rate);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.agent_height_m = j.value("agent_height_m", c.agent_height_m);
  c.occ_cell_m = j.value("occ_cell_m", c.occ_cell_m);
  c.near_m = j.value("near_m", c.near_m);
  c.far_m = j.value("far_m", c.far_m);
  return c;
}

nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["schema"] = "scene/1";
  j["seed"] = s.seed;
  j["config"] = scene_config_to_json(s.cfg);
  j["command"] = command_name(s.command);
  j["ego"] = {{"poses", poses_to_json(s.ego)},
              {"half_length", s.ego_half_length},
              {"half_width", s.ego_half_width}};
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : s.agents) {
    agents.push_back({{"id", a.id},
                      {"half_length", a.half_length},
                      {"half_width", a.half_width},
                      {"radius", a.radius},
                      {"height", a.height},
                      {"motion", a.motion},
                      {"states", poses_to_json(a.states)}});
  }
  j["agents"] = std::move(agents);
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : s.cameras) {
    cams.push_back({{"yaw_offset", c.yaw_offset},
                    {"offset", {c.offset.x, c.offset.y, c.offset.z}},
                    {"fx", c.fx},
                    {"fy", c.fy},
                    {"cx", c.cx},
                    {"cy", c.cy},
                    {"width", c.width},
                    {"height", c.height},
                    {"channels", c.channels}});
  }
  j["cameras"] = std::move(cams);
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "scene/1")
    throw std::invalid_argument("scene: unsupported schema");
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.cfg = scene_config_from_json(j.at("config"));
  s.command = command_from_name(j.at("command").get<std::string>());
  s.ego = poses_from_json(j.at("ego").at("poses"));
  s.ego_half_length = j.at("ego").at("half_length").get<double>();
  s.ego_half_width = j.at("ego").at("half_width").get<double>();
  for (const auto& a : j.at("agents")) {
    AgentTrack t;
    t.id = a.at("id").get<int>();
    t.half_length = a.at("half_length").get<double>();
    t.half_width = a.at("half_width").get<double>();
    t.radius = a.at("radius").get<double>();
    t.height = a.at("height").get<double>();
    t.motion = a.at("motion").get<std::string>();
    t.states = poses_from_json(a.at("states"));
    s.agents.push_back(std::move(t));
  }
  for (const auto& c : j.at("cameras")) {
    CameraRig r;
    r.yaw_offset = c.at("yaw_offset").get<double>();
    r.offset = {c.at("offset").at(0).get<double>(), c.at("offset").at(1).get<double>(),
                c.at("offset").at(2).get<double>()};
    r.fx = c.at("fx").get<double>();
    r.fy = c.at("fy").get<double>();
    r.cx = c.at("cx").get<double>();
    r.cy = c.at("cy").get<double>();
    r.width = c.at("width").get<int>();
    r.height = c.at("height").get<int>();
    r.channels = c.at("channels").get<int>();
    s.cameras.push_back(r);
  }
  return s;
}

std::string scene_to_string(const Scene& s) { return scene_to_json(s).dump(2) + "\n"; }

}  // namespace bevfuse::scene
