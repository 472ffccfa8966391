#include "plot/plot.hpp"

#include <algorithm>
#include <cmath>

#include "scene/render.hpp"

namespace bevfuse::plot {

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kEgo{40, 160, 60};
constexpr Rgb kEgoGt{150, 200, 150};
constexpr Rgb kAgent{90, 90, 90};
constexpr Rgb kAgentGt{180, 180, 180};
constexpr Rgb kForecast{235, 140, 30};
constexpr Rgb kPlan{40, 90, 220};

class View {
 public:
  View(Image& img, double half_extent)
      : img_(img), half_(half_extent),
        scale_(std::min(img.width, img.height) / (2.0 * half_extent)) {}

  void point(scene::Vec2 p, Rgb c, int size = 1) {
    const auto [px, py] = to_px(p);
    for (int dx = -size; dx <= size; ++dx)
      for (int dy = -size; dy <= size; ++dy)
        img_.set(px + dx, py + dy, c.r, c.g, c.b);
  }

  void line(scene::Vec2 a, scene::Vec2 b, Rgb c) {
    auto [x0, y0] = to_px(a);
    auto [x1, y1] = to_px(b);
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      img_.set(x0, y0, c.r, c.g, c.b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void box(const scene::Pose2& pose, double hl, double hw, Rgb c) {
    scene::Vec2 corners[4];
    const double cs = std::cos(pose.yaw), sn = std::sin(pose.yaw);
    const double sx[4] = {1, 1, -1, -1}, sy[4] = {1, -1, -1, 1};
    for (int i = 0; i < 4; ++i)
      corners[i] = {pose.x + cs * sx[i] * hl - sn * sy[i] * hw,
                    pose.y + sn * sx[i] * hl + cs * sy[i] * hw};
    for (int i = 0; i < 4; ++i) line(corners[i], corners[(i + 1) % 4], c);
  }

  void polyline(const std::vector<scene::Vec2>& pts, Rgb c) {
    for (std::size_t i = 1; i < pts.size(); ++i) line(pts[i - 1], pts[i], c);
  }

 private:
  std::pair<int, int> to_px(scene::Vec2 p) const {
    // Ego x (forward) points up, ego y (left) points left in the image.
    const int px = static_cast<int>(std::lround(img_.width / 2.0 - p.y * scale_));
    const int py = static_cast<int>(std::lround(img_.height / 2.0 - p.x * scale_));
    return {px, py};
  }

  Image& img_;
  double half_;
  double scale_;
};

}  // namespace

Image plot_trajectories(const scene::Scene& s, const pnp::Forecast* forecast,
                        const pnp::Plan* plan) {
  Image img(640, 640);
  const double half = std::max(s.cfg.extent_m, 40.0);
  View view(img, half);
  const scene::Pose2& ego = s.current_ego();

  for (const auto& a : s.agents) {
    const scene::Pose2& w = a.at(s.cfg.t_obs - 1);
    const scene::Vec2 p = ego.apply_inverse({w.x, w.y});
    view.box({p.x, p.y, scene::wrap_angle(w.yaw - ego.yaw)}, a.half_length,
             a.half_width, kAgent);
    std::vector<scene::Vec2> gt;
    for (int t = 0; t < s.cfg.t_pred; ++t) {
      const scene::Pose2& f = a.at(s.cfg.t_obs + t);
      gt.push_back(ego.apply_inverse({f.x, f.y}));
    }
    view.polyline(gt, kAgentGt);
  }

  view.box({0.0, 0.0, 0.0}, s.ego_half_length, s.ego_half_width, kEgo);
  std::vector<scene::Vec2> ego_gt;
  for (int t = 0; t < s.cfg.t_plan; ++t) {
    const scene::Pose2& f = s.ego[static_cast<std::size_t>(s.cfg.t_obs + t)];
    ego_gt.push_back(ego.apply_inverse({f.x, f.y}));
  }
  view.polyline(ego_gt, kEgoGt);

  if (forecast)
    for (const auto& a : forecast->agents)
      for (const auto& m : a.modes) {
        view.polyline(m.waypoints, kForecast);
        if (!m.waypoints.empty()) view.point(m.waypoints.back(), kForecast);
      }
  if (plan) {
    view.polyline(plan->waypoints, kPlan);
    for (const auto& w : plan->waypoints) view.point(w, kPlan);
  }
  return img;
}

Image plot_bev(const scene::Scene& s) {
  const scene::BevGrid g = scene::render_lidar_bev(s, s.cfg.t_obs - 1);
  double max_norm = 1e-9;
  std::vector<double> norms(static_cast<std::size_t>(g.nx) * g.ny, 0.0);
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iy = 0; iy < g.ny; ++iy) {
      const double* cell = g.cell(ix, iy);
      double n2 = 0.0;
      for (int ch = 0; ch < g.c; ++ch) n2 += cell[ch] * cell[ch];
      const double n = std::sqrt(n2);
      norms[static_cast<std::size_t>(ix) * g.ny + iy] = n;
      max_norm = std::max(max_norm, n);
    }
  const int cell_px = std::max(1, 512 / std::max(g.nx, g.ny));
  Image img(g.ny * cell_px, g.nx * cell_px);
  for (int ix = 0; ix < g.nx; ++ix)
    for (int iy = 0; iy < g.ny; ++iy) {
      const double v = norms[static_cast<std::size_t>(ix) * g.ny + iy] / max_norm;
      const auto shade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - v)));
      // x (forward) up, y (left) to the image left.
      for (int px = 0; px < cell_px; ++px)
        for (int py = 0; py < cell_px; ++py)
          img.set((g.ny - 1 - iy) * cell_px + px, (g.nx - 1 - ix) * cell_px + py,
                  shade, shade, 255);
    }
  return img;
}

}  // namespace bevfuse::plot
