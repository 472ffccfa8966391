#include "scene/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace bevfuse::scene {

void rasterize_step(const OccupancyGridSpec& spec,
                    std::span<const std::pair<int, Obb>> boxes,
                    std::int32_t* out) {
  std::fill_n(out, static_cast<std::size_t>(spec.nx) * spec.ny, 0);
  for (const auto& [id, box] : boxes) {
    const double reach = std::hypot(box.half_length, box.half_width);
    const int ix0 = std::max(0, static_cast<int>(std::floor((box.pose.x - reach + spec.extent_x() / 2) / spec.cell_m)));
    const int ix1 = std::min(spec.nx - 1, static_cast<int>(std::ceil((box.pose.x + reach + spec.extent_x() / 2) / spec.cell_m)));
    const int iy0 = std::max(0, static_cast<int>(std::floor((box.pose.y - reach + spec.extent_y() / 2) / spec.cell_m)));
    const int iy1 = std::min(spec.ny - 1, static_cast<int>(std::ceil((box.pose.y + reach + spec.extent_y() / 2) / spec.cell_m)));
    const double c = std::cos(box.pose.yaw), sn = std::sin(box.pose.yaw);
    for (int ix = ix0; ix <= ix1; ++ix) {
      for (int iy = iy0; iy <= iy1; ++iy) {
        const Vec2 cc = spec.cell_center(ix, iy);
        const double dx = cc.x - box.pose.x, dy = cc.y - box.pose.y;
        const double u = c * dx + sn * dy;
        const double v = -sn * dx + c * dy;
        if (std::fabs(u) > box.half_length || std::fabs(v) > box.half_width) continue;
        std::int32_t& cell = out[static_cast<std::size_t>(ix) * spec.ny + iy];
        if (cell == 0 || id < cell) cell = id;
      }
    }
  }
}

OccupancySequence rasterize_occupancy(std::span<const AgentFuture> futures,
                                      const OccupancyGridSpec& spec, int steps,
                                      double near_m, double far_m) {
  OccupancySequence seq;
  seq.spec = spec;
  seq.steps = steps;
  seq.near_m = near_m;
  seq.far_m = far_m;
  seq.ids.assign(static_cast<std::size_t>(steps),
                 std::vector<std::int32_t>(static_cast<std::size_t>(spec.nx) * spec.ny, 0));
  for (int t = 0; t < steps; ++t) {
    std::vector<std::pair<int, Obb>> boxes;
    for (const auto& f : futures) {
      if (t >= static_cast<int>(f.poses.size())) continue;
      boxes.push_back({f.id, Obb{f.poses[static_cast<std::size_t>(t)],
                                 f.half_length, f.half_width}});
    }
    rasterize_step(spec, boxes, seq.ids[static_cast<std::size_t>(t)].data());
  }
  return seq;
}

std::vector<AgentFuture> gt_agent_futures(const Scene& s, int steps) {
  if (steps > s.cfg.t_pred)
    throw std::invalid_argument("occupancy: steps beyond prediction horizon");
  const Pose2& ego = s.current_ego();
  std::vector<AgentFuture> futures;
  for (const auto& a : s.agents) {
    AgentFuture f;
    f.id = a.id;
    f.half_length = a.half_length;
    f.half_width = a.half_width;
    for (int t = 0; t < steps; ++t) {
      const Pose2& w = a.at(s.cfg.t_obs + t);
      const Vec2 p = ego.apply_inverse({w.x, w.y});
      f.poses.push_back({p.x, p.y, wrap_angle(w.yaw - ego.yaw)});
    }
    futures.push_back(std::move(f));
  }
  return futures;
}

OccupancySequence gt_occupancy(const Scene& s, int steps) {
  const auto futures = gt_agent_futures(s, steps);
  const int n = std::max(2, static_cast<int>(std::llround(s.cfg.far_m / s.cfg.occ_cell_m)));
  OccupancyGridSpec spec{n, n, s.cfg.occ_cell_m};
  return rasterize_occupancy(futures, spec, steps, s.cfg.near_m, s.cfg.far_m);
}

nlohmann::json occupancy_to_json(const OccupancySequence& o) {
  nlohmann::json j;
  j["schema"] = "occupancy/1";
  j["nx"] = o.spec.nx;
  j["ny"] = o.spec.ny;
  j["cell_m"] = o.spec.cell_m;
  j["steps"] = o.steps;
  j["near_m"] = o.near_m;
  j["far_m"] = o.far_m;
  // Run-length encoding per row: [value, count, value, count, ...].
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& grid : o.ids) {
    nlohmann::json rows = nlohmann::json::array();
    for (int ix = 0; ix < o.spec.nx; ++ix) {
      nlohmann::json row = nlohmann::json::array();
      const std::int32_t* base = grid.data() + static_cast<std::size_t>(ix) * o.spec.ny;
      int iy = 0;
      while (iy < o.spec.ny) {
        const std::int32_t v = base[iy];
        int run = 1;
        while (iy + run < o.spec.ny && base[iy + run] == v) ++run;
        row.push_back(v);
        row.push_back(run);
        iy += run;
      }
      rows.push_back(std::move(row));
    }
    steps.push_back(std::move(rows));
  }
  j["rle"] = std::move(steps);
  return j;
}

OccupancySequence occupancy_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "occupancy/1")
    throw std::invalid_argument("occupancy: unsupported schema");
  OccupancySequence o;
  o.spec.nx = j.at("nx").get<int>();
  o.spec.ny = j.at("ny").get<int>();
  o.spec.cell_m = j.at("cell_m").get<double>();
  o.steps = j.at("steps").get<int>();
  o.near_m = j.at("near_m").get<double>();
  o.far_m = j.at("far_m").get<double>();
  const auto& steps = j.at("rle");
  if (static_cast<int>(steps.size()) != o.steps)
    throw std::invalid_argument("occupancy: step count mismatch");
  for (const auto& rows : steps) {
    std::vector<std::int32_t> grid(static_cast<std::size_t>(o.spec.nx) * o.spec.ny, 0);
    if (static_cast<int>(rows.size()) != o.spec.nx)
      throw std::invalid_argument("occupancy: row count mismatch");
    for (int ix = 0; ix < o.spec.nx; ++ix) {
      const auto& row = rows[static_cast<std::size_t>(ix)];
      if (row.size() % 2 != 0)
        throw std::invalid_argument("occupancy: malformed RLE row");
      int iy = 0;
      for (std::size_t k = 0; k < row.size(); k += 2) {
        const std::int32_t v = row[k].get<std::int32_t>();
        const int run = row[k + 1].get<int>();
        if (run <= 0 || iy + run > o.spec.ny)
          throw std::invalid_argument("occupancy: RLE overrun");
        std::fill_n(grid.begin() + static_cast<std::size_t>(ix) * o.spec.ny + iy, run, v);
        iy += run;
      }
      if (iy != o.spec.ny) throw std::invalid_argument("occupancy: RLE underrun");
    }
    o.ids.push_back(std::move(grid));
  }
  return o;
}

}  // namespace bevfuse::scene
