#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "num/grid.hpp"
#include "scene/geometry.hpp"

namespace bevfuse::scene {

enum class Command { Forward = 0, Left = 1, Right = 2 };
const char* command_name(Command c);
Command command_from_name(const std::string& s);

struct SceneConfig {
  // Timebase: 2 Hz. t_obs observed frames, t_pred agent future steps,
  // t_plan ego future steps.
  double dt = 0.5;
  int t_obs = 5;
  int t_pred = 12;
  int t_plan = 6;

  // BEV feature grid over a square metric extent centered on ego.
  int bev_nx = 32;
  int bev_ny = 32;
  int bev_channels = 16;
  double extent_m = 32.0;

  // Camera rigs and their feature grids.
  int cam_count = 2;
  int cam_width = 40;
  int cam_height = 24;
  int cam_channels = 16;
  double cam_focal = 24.0;
  double cam_yaw_deg = 25.0;    // symmetric yaw offset of the two front cams
  double cam_height_m = 1.6;

  // Agent population.
  int max_agents = 6;
  double agent_speed_max = 8.0;
  double ego_speed_min = 3.0;
  double ego_speed_max = 8.0;
  // Probability of placing a near-stationary obstacle right next to the
  // ego's future path (keeps the labels collision-free but low-margin).
  double hazard_rate = 0.0;

  double noise_sigma = 0.02;
  double agent_height_m = 1.5;

  // Occupancy raster geometry.
  double occ_cell_m = 0.5;
  double near_m = 30.0;
  double far_m = 100.0;
};

struct AgentTrack {
  int id = 0;  // >= 1; 0 marks free space in occupancy rasters
  double half_length = 1.5;
  double half_width = 0.8;
  double radius = 0.0;  // circumscribed: hypot(half_length, half_width)
  double height = 1.5;
  std::string motion;  // "constant_velocity" | "turning" | "uturn"
  std::vector<Pose2> states;  // t_obs + t_pred world poses

  const Pose2& at(int t) const { return states[static_cast<std::size_t>(t)]; }
};

struct CameraRig {
  double yaw_offset = 0.0;
  Vec3 offset;  // mount point in ego frame
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0, channels = 0;
};

struct Scene {
  std::uint64_t seed = 0;
  SceneConfig cfg;
  Command command = Command::Forward;
  std::vector<Pose2> ego;  // t_obs + t_plan world poses
  double ego_half_length = 2.0;
  double ego_half_width = 0.9;
  std::vector<AgentTrack> agents;
  std::vector<CameraRig> cameras;

  int frames() const { return cfg.t_obs + cfg.t_plan; }
  const Pose2& current_ego() const { return ego[static_cast<std::size_t>(cfg.t_obs - 1)]; }
};

// Deterministic synthetic scene. Throws on degenerate configuration.
Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

// Camera extrinsics for a rig mounted on an ego at `ego`. Pass the identity
// pose to get the camera in the ego frame.
CameraModel camera_at(const CameraRig& rig, const Pose2& ego);

nlohmann::json scene_to_json(const Scene& s);
Scene scene_from_json(const nlohmann::json& j);
std::string scene_to_string(const Scene& s);

nlohmann::json scene_config_to_json(const SceneConfig& c);
SceneConfig scene_config_from_json(const nlohmann::json& j);

}  // namespace bevfuse::scene
