#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scene/scene.hpp"

namespace bevfuse::scene {

struct OccupancyGridSpec {
  int nx = 0, ny = 0;
  double cell_m = 0.5;

  double extent_x() const { return nx * cell_m; }
  double extent_y() const { return ny * cell_m; }
  Vec2 cell_center(int ix, int iy) const {
    return {(ix + 0.5) * cell_m - extent_x() / 2.0,
            (iy + 0.5) * cell_m - extent_y() / 2.0};
  }
  bool operator==(const OccupancyGridSpec&) const = default;
};

// Oriented box in the grid frame.
struct Obb {
  Pose2 pose;
  double half_length = 0.0;
  double half_width = 0.0;
};

// One labeled box per agent per step. Boxes live in the grid frame.
struct AgentFuture {
  int id = 0;
  double half_length = 0.0;
  double half_width = 0.0;
  std::vector<Pose2> poses;  // one per future step
};

// A cell holds an agent id iff its center lies inside that agent's oriented
// footprint; contested cells go to the lower id.
void rasterize_step(const OccupancyGridSpec& spec,
                    std::span<const std::pair<int, Obb>> boxes,
                    std::int32_t* out);

// Instance-labeled occupancy over future steps, ego-centered grid with
// near/far evaluation crops.
struct OccupancySequence {
  OccupancyGridSpec spec;
  int steps = 0;
  double near_m = 30.0;
  double far_m = 100.0;
  std::vector<std::vector<std::int32_t>> ids;  // per step, nx*ny

  std::int32_t at(int t, int ix, int iy) const {
    return ids[static_cast<std::size_t>(t)]
              [static_cast<std::size_t>(ix) * spec.ny + iy];
  }
};

OccupancySequence rasterize_occupancy(std::span<const AgentFuture> futures,
                                      const OccupancyGridSpec& spec, int steps,
                                      double near_m, double far_m);

// Ground-truth occupancy of a scene over `steps` future steps, in the
// current-ego frame, on the configured far-range grid.
OccupancySequence gt_occupancy(const Scene& s, int steps);

// Agent futures of a scene in the current-ego frame (ground truth).
std::vector<AgentFuture> gt_agent_futures(const Scene& s, int steps);

nlohmann::json occupancy_to_json(const OccupancySequence& o);
OccupancySequence occupancy_from_json(const nlohmann::json& j);

}  // namespace bevfuse::scene
