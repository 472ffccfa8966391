#include "scene/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "num/rng.hpp"

namespace bevfuse::scene {

using num::Rng;

std::vector<double> agent_pattern(int agent_id, int channels, const char* tag) {
  std::vector<double> p(static_cast<std::size_t>(channels), 0.0);
  Rng rng(num::mix_seed(static_cast<std::uint64_t>(agent_id), num::hash_str(tag)));
  for (int k = 2; k < channels; ++k) p[k] = rng.uniform(0.25, 1.0);
  if (channels > 0) p[0] = 1.0;
  if (channels > 1) p[1] = 1.0;
  return p;
}

namespace {

void check_frame(const Scene& s, int t) {
  if (t < 0 || t >= s.frames())
    throw std::invalid_argument("render: frame outside scene horizon");
}

bool inside_obb(Vec2 p, const Pose2& box, double hl, double hw) {
  const double c = std::cos(box.yaw), sn = std::sin(box.yaw);
  const double dx = p.x - box.x, dy = p.y - box.y;
  const double u = c * dx + sn * dy;
  const double v = -sn * dx + c * dy;
  return std::fabs(u) <= hl && std::fabs(v) <= hw;
}

void add_noise(FeatureGrid& g, std::uint64_t seed, double sigma) {
  if (sigma <= 0.0) return;
  Rng rng(seed);
  for (double& v : g.data) v += sigma * rng.normal();
}

}  // namespace

BevGrid render_lidar_bev(const Scene& s, int t) {
  check_frame(s, t);
  const SceneConfig& cfg = s.cfg;
  BevGrid g(cfg.bev_nx, cfg.bev_ny, cfg.bev_channels, cfg.extent_m);
  const Pose2& ego = s.ego[static_cast<std::size_t>(std::min(t, cfg.t_obs + cfg.t_plan - 1))];

  const int agent_steps = cfg.t_obs + cfg.t_pred;
  for (const auto& a : s.agents) {
    if (t >= agent_steps) continue;
    const Pose2& world = a.at(t);
    const Vec2 center = ego.apply_inverse({world.x, world.y});
    const Pose2 box{center.x, center.y, world.yaw - ego.yaw};
    const auto pattern = agent_pattern(a.id, cfg.bev_channels, "lidar");
    const double sigma = a.radius / 2.0;
    const double reach = 2.0 * a.radius;
    const int ix0 = std::max(0, static_cast<int>(std::floor((center.x - reach + cfg.extent_m / 2) / g.res_x())));
    const int ix1 = std::min(cfg.bev_nx - 1, static_cast<int>(std::ceil((center.x + reach + cfg.extent_m / 2) / g.res_x())));
    const int iy0 = std::max(0, static_cast<int>(std::floor((center.y - reach + cfg.extent_m / 2) / g.res_y())));
    const int iy1 = std::min(cfg.bev_ny - 1, static_cast<int>(std::ceil((center.y + reach + cfg.extent_m / 2) / g.res_y())));
    for (int ix = ix0; ix <= ix1; ++ix) {
      for (int iy = iy0; iy <= iy1; ++iy) {
        const Vec2 cc = g.cell_center(ix, iy);
        const double d2 = (cc.x - center.x) * (cc.x - center.x) +
                          (cc.y - center.y) * (cc.y - center.y);
        if (d2 > reach * reach) continue;
        double* cell = g.cell(ix, iy);
        const double bump = std::exp(-d2 / (2.0 * sigma * sigma));
        if (inside_obb(cc, box, a.half_length, a.half_width)) cell[0] += 1.0;
        if (cfg.bev_channels > 1) cell[1] += bump;
        for (int k = 2; k < cfg.bev_channels; ++k) cell[k] += bump * pattern[k];
      }
    }
  }
  add_noise(g, num::mix_seed(s.seed, num::mix_seed(num::hash_str("lidar_noise"),
                                                   static_cast<std::uint64_t>(t))),
            cfg.noise_sigma);
  return g;
}

std::vector<CameraFrame> render_camera_features(const Scene& s, int t) {
  check_frame(s, t);
  const SceneConfig& cfg = s.cfg;
  const Pose2& ego = s.ego[static_cast<std::size_t>(std::min(t, cfg.t_obs + cfg.t_plan - 1))];
  std::vector<CameraFrame> out;
  out.reserve(s.cameras.size());
  const int agent_steps = cfg.t_obs + cfg.t_pred;

  for (std::size_t ci = 0; ci < s.cameras.size(); ++ci) {
    const CameraRig& rig = s.cameras[ci];
    CameraFrame frame;
    frame.cam_world = camera_at(rig, ego);
    frame.cam_ego = camera_at(rig, Pose2{0.0, 0.0, 0.0});
    frame.features = FeatureGrid(rig.width, rig.height, rig.channels);

    for (const auto& a : s.agents) {
      if (t >= agent_steps) continue;
      const Pose2& world = a.at(t);
      double depth = 0.0;
      const auto center_px = project_unbounded(
          {world.x, world.y, a.height / 2.0}, frame.cam_world, &depth);
      if (!center_px || center_px->x < 0.0 || center_px->x > rig.width - 1 ||
          center_px->y < 0.0 || center_px->y > rig.height - 1)
        continue;

      double u0 = 1e30, u1 = -1e30, v0 = 1e30, v1 = -1e30;
      const double c = std::cos(world.yaw), sn = std::sin(world.yaw);
      for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2)
          for (int sz = 0; sz <= 1; ++sz) {
            const double lx = sx * a.half_length, ly = sy * a.half_width;
            const Vec3 corner{world.x + c * lx - sn * ly,
                              world.y + sn * lx + c * ly,
                              sz * a.height};
            const auto px = project_unbounded(corner, frame.cam_world);
            if (!px) continue;
            u0 = std::min(u0, px->x);
            u1 = std::max(u1, px->x);
            v0 = std::min(v0, px->y);
            v1 = std::max(v1, px->y);
          }
      if (u0 > u1 || v0 > v1) continue;
      const int iu0 = std::max(0, static_cast<int>(std::floor(u0)));
      const int iu1 = std::min(rig.width - 1, static_cast<int>(std::ceil(u1)));
      const int iv0 = std::max(0, static_cast<int>(std::floor(v0)));
      const int iv1 = std::min(rig.height - 1, static_cast<int>(std::ceil(v1)));
      const auto pattern = agent_pattern(a.id, rig.channels, "camera");
      const double w = 1.0 / std::max(1.0, depth);
      for (int iu = iu0; iu <= iu1; ++iu)
        for (int iv = iv0; iv <= iv1; ++iv) {
          double* cell = frame.features.cell(iu, iv);
          cell[0] += 1.0;
          if (rig.channels > 1) cell[1] += w;
          for (int k = 2; k < rig.channels; ++k) cell[k] += w * pattern[k];
        }
    }
    add_noise(frame.features,
              num::mix_seed(s.seed, num::mix_seed(num::hash_str("camera_noise"),
                                                  (static_cast<std::uint64_t>(t) << 8) + ci)),
              cfg.noise_sigma);
    out.push_back(std::move(frame));
  }
  return out;
}

}  // namespace bevfuse::scene
