#pragma once

#include <vector>

#include "num/grid.hpp"
#include "scene/scene.hpp"

namespace bevfuse::scene {

struct FeatureGrid {
  int nx = 0, ny = 0, c = 0;
  std::vector<double> data;

  FeatureGrid() = default;
  FeatureGrid(int nx_, int ny_, int c_)
      : nx(nx_), ny(ny_), c(c_),
        data(static_cast<std::size_t>(nx_) * ny_ * c_, 0.0) {}

  num::GridView view() const { return {data.data(), nx, ny, c}; }
  num::GridMut mut() { return {data.data(), nx, ny, c}; }
  double* cell(int ix, int iy) {
    return data.data() + (static_cast<std::size_t>(ix) * ny + iy) * c;
  }
  const double* cell(int ix, int iy) const {
    return data.data() + (static_cast<std::size_t>(ix) * ny + iy) * c;
  }
};

// Feature grid over a square metric extent centered on an ego pose.
// Axis 0 follows ego x (forward), axis 1 ego y (left).
struct BevGrid : FeatureGrid {
  double extent_m = 0.0;

  BevGrid() = default;
  BevGrid(int nx_, int ny_, int c_, double extent)
      : FeatureGrid(nx_, ny_, c_), extent_m(extent) {}

  double res_x() const { return extent_m / nx; }
  double res_y() const { return extent_m / ny; }
  // Fractional grid coordinates of an ego-frame metric point.
  Vec2 to_grid(Vec2 p) const {
    return {(p.x + extent_m / 2.0) / res_x() - 0.5,
            (p.y + extent_m / 2.0) / res_y() - 0.5};
  }
  Vec2 cell_center(int ix, int iy) const {
    return {(ix + 0.5) * res_x() - extent_m / 2.0,
            (iy + 0.5) * res_y() - extent_m / 2.0};
  }
};

// Identity-coded feature channels for one agent: [0] footprint indicator,
// [1] range bump, [2..] per-identity pattern scaled by the bump.
std::vector<double> agent_pattern(int agent_id, int channels, const char* tag);

// LiDAR-like BEV features at frame t: exact footprint geometry stamped in
// the ego frame of that frame, plus seeded additive noise.
BevGrid render_lidar_bev(const Scene& s, int t);

struct CameraFrame {
  CameraModel cam_world;  // extrinsics at frame t, world frame
  CameraModel cam_ego;    // extrinsics in the ego frame of frame t
  FeatureGrid features;
};

// Image-like features: perspective-projected agent boxes rasterized as
// pixel-bbox stamps with a depth cue, plus seeded additive noise.
std::vector<CameraFrame> render_camera_features(const Scene& s, int t);

}  // namespace bevfuse::scene
