#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "scene/occupancy.hpp"
#include "scene/render.hpp"
#include "scene/scene.hpp"

using namespace bevfuse;
using scene::Vec2;
using scene::Vec3;

namespace {

scene::SceneConfig small_cfg() {
  scene::SceneConfig c;
  c.bev_nx = c.bev_ny = 16;
  c.bev_channels = 8;
  c.cam_channels = 8;
  c.extent_m = 16.0;
  c.max_agents = 4;
  return c;
}

// Hand-built scene: ego parked at the origin, given agents, no noise.
scene::Scene fixed_scene(const scene::SceneConfig& cfg,
                         std::vector<scene::AgentTrack> agents) {
  scene::Scene s;
  s.seed = 1234;
  s.cfg = cfg;
  s.cfg.noise_sigma = 0.0;
  s.command = scene::Command::Forward;
  for (int t = 0; t < cfg.t_obs + cfg.t_plan; ++t) s.ego.push_back({0.0, 0.0, 0.0});
  s.agents = std::move(agents);
  const double yaw = cfg.cam_yaw_deg * M_PI / 180.0;
  for (int i = 0; i < cfg.cam_count; ++i) {
    scene::CameraRig rig;
    rig.yaw_offset = i % 2 == 0 ? yaw : -yaw;
    rig.offset = {1.0, i % 2 == 0 ? 0.3 : -0.3, cfg.cam_height_m};
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

scene::AgentTrack still_agent(int id, Vec2 pos, double yaw, double hl, double hw,
                              const scene::SceneConfig& cfg) {
  scene::AgentTrack a;
  a.id = id;
  a.half_length = hl;
  a.half_width = hw;
  a.radius = std::hypot(hl, hw);
  a.height = cfg.agent_height_m;
  a.motion = "constant_velocity";
  for (int t = 0; t < cfg.t_obs + cfg.t_pred; ++t) a.states.push_back({pos.x, pos.y, yaw});
  return a;
}

}  // namespace

TEST_CASE("pose algebra") {
  const scene::Pose2 a{1.0, 2.0, 0.5};
  const scene::Pose2 b{-0.5, 0.25, -1.2};
  const auto ab = a.compose(b);
  const Vec2 p{0.3, -0.7};
  const Vec2 via_ab = ab.apply(p);
  const Vec2 via_chain = a.apply(b.apply(p));
  CHECK(via_ab.x == doctest::Approx(via_chain.x).epsilon(1e-14));
  CHECK(via_ab.y == doctest::Approx(via_chain.y).epsilon(1e-14));
  const Vec2 back = a.apply_inverse(a.apply(p));
  CHECK(back.x == doctest::Approx(p.x).epsilon(1e-13));
  CHECK(back.y == doctest::Approx(p.y).epsilon(1e-13));
  const auto rel = scene::relative_pose(a, b);
  const auto recomposed = a.compose(rel);
  CHECK(recomposed.x == doctest::Approx(b.x).epsilon(1e-13));
  CHECK(recomposed.yaw == doctest::Approx(b.yaw).epsilon(1e-13));
}

TEST_CASE("camera projection") {
  SUBCASE("hand-constructed pinhole") {
    scene::CameraModel cam;
    cam.fx = cam.fy = 100.0;
    cam.cx = cam.cy = 50.0;
    cam.width = 101;
    cam.height = 101;
    const auto px = scene::project_to_camera({1.0, 0.0, 10.0}, cam);
    REQUIRE(px.has_value());
    CHECK(px->x == doctest::Approx(60.0).epsilon(1e-14));
    CHECK(px->y == doctest::Approx(50.0).epsilon(1e-14));
  }
  SUBCASE("optical axis lands on the principal point") {
    scene::CameraModel cam;
    cam.fx = cam.fy = 42.0;
    cam.cx = 19.5;
    cam.cy = 11.5;
    cam.width = 40;
    cam.height = 24;
    const auto px = scene::project_to_camera({0.0, 0.0, 7.0}, cam);
    REQUIRE(px.has_value());
    CHECK(px->x == doctest::Approx(19.5));
    CHECK(px->y == doctest::Approx(11.5));
  }
  SUBCASE("points behind the image plane are absent") {
    scene::CameraModel cam;
    cam.fx = cam.fy = 10.0;
    cam.width = cam.height = 10;
    CHECK_FALSE(scene::project_to_camera({0.0, 0.0, -1.0}, cam).has_value());
    CHECK_FALSE(scene::project_to_camera({0.0, 0.0, 0.0}, cam).has_value());
  }
  SUBCASE("out-of-bounds pixels are absent") {
    scene::CameraModel cam;
    cam.fx = cam.fy = 100.0;
    cam.cx = cam.cy = 5.0;
    cam.width = cam.height = 11;
    CHECK_FALSE(scene::project_to_camera({10.0, 0.0, 1.0}, cam).has_value());
  }
  SUBCASE("rig-mounted camera looks along the mount heading") {
    scene::CameraRig rig;
    rig.yaw_offset = 0.0;
    rig.offset = {0.0, 0.0, 1.0};
    rig.fx = rig.fy = 50.0;
    rig.cx = rig.cy = 25.0;
    rig.width = rig.height = 51;
    rig.channels = 1;
    const auto cam = scene::camera_at(rig, {0.0, 0.0, 0.0});
    // A point straight ahead at camera height projects to the center.
    const auto px = scene::project_to_camera({10.0, 0.0, 1.0}, cam);
    REQUIRE(px.has_value());
    CHECK(px->x == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(px->y == doctest::Approx(25.0).epsilon(1e-12));
    // A point to the left moves left in the image (smaller u).
    const auto left = scene::project_to_camera({10.0, 2.0, 1.0}, cam);
    REQUIRE(left.has_value());
    CHECK(left->x < 25.0);
    // A point below camera height moves down (larger v).
    const auto low = scene::project_to_camera({10.0, 0.0, 0.2}, cam);
    REQUIRE(low.has_value());
    CHECK(low->y > 25.0);
  }
}

TEST_CASE("scene generation") {
  const scene::SceneConfig cfg = small_cfg();

  SUBCASE("same seed gives byte-identical JSON") {
    const auto a = scene::scene_to_string(scene::generate_scene(7, cfg));
    const auto b = scene::scene_to_string(scene::generate_scene(7, cfg));
    CHECK(a == b);
    const auto c = scene::scene_to_string(scene::generate_scene(8, cfg));
    CHECK(a != c);
  }

  SUBCASE("JSON round-trip preserves the scene") {
    const scene::Scene s = scene::generate_scene(11, cfg);
    const scene::Scene t = scene::scene_from_json(scene::scene_to_json(s));
    CHECK(scene::scene_to_string(t) == scene::scene_to_string(s));
  }

  SUBCASE("constant-velocity futures are exact lines") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const scene::Scene s = scene::generate_scene(seed, cfg);
      for (const auto& a : s.agents) {
        if (a.motion != "constant_velocity") continue;
        const scene::Pose2& p0 = a.at(cfg.t_obs - 1);
        const scene::Pose2& p1 = a.at(cfg.t_obs);
        const double vx = (p1.x - p0.x) / cfg.dt;
        const double vy = (p1.y - p0.y) / cfg.dt;
        for (int t = 0; t < cfg.t_obs + cfg.t_pred; ++t) {
          const double dt = (t - (cfg.t_obs - 1)) * cfg.dt;
          CHECK(a.at(t).x == doctest::Approx(p0.x + dt * vx).epsilon(1e-9));
          CHECK(a.at(t).y == doctest::Approx(p0.y + dt * vy).epsilon(1e-9));
        }
      }
    }
  }

  SUBCASE("u-turn template flips the heading") {
    bool found = false;
    for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
      const scene::Scene s = scene::generate_scene(seed, cfg);
      for (const auto& a : s.agents) {
        if (a.motion != "uturn") continue;
        found = true;
        const double h0 = a.at(cfg.t_obs - 1).yaw;
        const double h1 = a.states.back().yaw;
        const double turn = std::fabs(scene::wrap_angle(h1 - h0));
        CHECK(turn > M_PI / 2.0);
      }
    }
    CHECK(found);
  }

  SUBCASE("population statistics respect the configuration bounds") {
    int hazard_hits = 0;
    scene::SceneConfig hcfg = cfg;
    hcfg.hazard_rate = 0.5;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const scene::Scene s = scene::generate_scene(seed, hcfg);
      CHECK(s.agents.size() >= 1);
      CHECK(s.agents.size() <= static_cast<std::size_t>(hcfg.max_agents));
      // Ego speed bounds.
      for (std::size_t t = 1; t < s.ego.size(); ++t) {
        const double v = std::hypot(s.ego[t].x - s.ego[t - 1].x,
                                    s.ego[t].y - s.ego[t - 1].y) / hcfg.dt;
        CHECK(v <= hcfg.ego_speed_max + 1e-9);
        CHECK(v >= 0.0);
      }
      // Agent speeds and sizes.
      std::set<int> ids;
      for (const auto& a : s.agents) {
        CHECK(ids.insert(a.id).second);
        CHECK(a.radius > 0.0);
        CHECK(a.radius == doctest::Approx(std::hypot(a.half_length, a.half_width)));
        const double v = std::hypot(a.at(1).x - a.at(0).x, a.at(1).y - a.at(0).y) / hcfg.dt;
        CHECK(v <= hcfg.agent_speed_max * (1.0 + 1e-9) + 1e-9);
        CHECK(static_cast<int>(a.states.size()) == hcfg.t_obs + hcfg.t_pred);
      }
      if (!s.agents.empty() && s.agents[0].id == 1) {
        const auto& a = s.agents[0];
        const double v = std::hypot(a.at(1).x - a.at(0).x, a.at(1).y - a.at(0).y) / hcfg.dt;
        if (v <= 0.2 + 1e-9) ++hazard_hits;
      }
    }
    CHECK(hazard_hits > 300);  // hazard rate 0.5 with slack
  }

  SUBCASE("degenerate extent is an error") {
    scene::SceneConfig bad = cfg;
    bad.extent_m = 0.0;
    CHECK_THROWS_AS(scene::generate_scene(1, bad), std::invalid_argument);
  }
}

TEST_CASE("LiDAR BEV rendering") {
  const scene::SceneConfig cfg = small_cfg();

  SUBCASE("empty world with zero noise is constant") {
    scene::Scene s = fixed_scene(cfg, {});
    const scene::BevGrid g = scene::render_lidar_bev(s, cfg.t_obs - 1);
    for (double v : g.data) CHECK(v == 0.0);
  }

  SUBCASE("single agent peaks at its own cell") {
    // Cell (10, 6) center for a 16x16 grid over 16 m: res 1, center at
    // (ix + 0.5 - 8, iy + 0.5 - 8).
    const Vec2 pos{10.5 - 8.0, 6.5 - 8.0};
    scene::Scene s = fixed_scene(cfg, {still_agent(1, pos, 0.3, 1.5, 0.8, cfg)});
    const scene::BevGrid g = scene::render_lidar_bev(s, cfg.t_obs - 1);
    double best = -1.0;
    int best_ix = -1, best_iy = -1;
    for (int ix = 0; ix < g.nx; ++ix)
      for (int iy = 0; iy < g.ny; ++iy) {
        const double v = g.cell(ix, iy)[1];  // range bump channel
        if (v > best) {
          best = v;
          best_ix = ix;
          best_iy = iy;
        }
      }
    CHECK(best_ix == 10);
    CHECK(best_iy == 6);
    CHECK(g.cell(10, 6)[0] == 1.0);  // footprint indicator
  }

  SUBCASE("rendering is deterministic with noise") {
    scene::Scene s = scene::generate_scene(3, cfg);
    const auto a = scene::render_lidar_bev(s, 2);
    const auto b = scene::render_lidar_bev(s, 2);
    CHECK(a.data == b.data);
  }
}

TEST_CASE("camera feature rendering") {
  const scene::SceneConfig cfg = small_cfg();

  SUBCASE("empty world with zero noise is constant") {
    scene::Scene s = fixed_scene(cfg, {});
    const auto frames = scene::render_camera_features(s, cfg.t_obs - 1);
    REQUIRE(frames.size() == 2);
    for (const auto& f : frames)
      for (double v : f.features.data) CHECK(v == 0.0);
  }

  SUBCASE("stamps match an independent corner-projection rasterization") {
    scene::Scene s = fixed_scene(
        cfg, {still_agent(3, {6.0, 1.0}, 0.4, 1.2, 0.7, cfg)});
    const int t = cfg.t_obs - 1;
    const auto frames = scene::render_camera_features(s, t);
    const auto& a = s.agents[0];
    for (std::size_t ci = 0; ci < s.cameras.size(); ++ci) {
      // Rebuild the expected grid from the public projection operation.
      const auto cam = scene::camera_at(s.cameras[ci], s.ego[static_cast<std::size_t>(t)]);
      scene::FeatureGrid expect(cfg.cam_width, cfg.cam_height, cfg.cam_channels);
      double depth = 0.0;
      const auto center = scene::project_unbounded(
          {a.at(t).x, a.at(t).y, a.height / 2.0}, cam, &depth);
      const bool center_hit = center && center->x >= 0.0 &&
                              center->x <= cfg.cam_width - 1 && center->y >= 0.0 &&
                              center->y <= cfg.cam_height - 1;
      if (center_hit) {
        double u0 = 1e30, u1 = -1e30, v0 = 1e30, v1 = -1e30;
        const double cs = std::cos(a.at(t).yaw), sn = std::sin(a.at(t).yaw);
        for (int sx = -1; sx <= 1; sx += 2)
          for (int sy = -1; sy <= 1; sy += 2)
            for (int sz = 0; sz <= 1; ++sz) {
              const Vec3 corner{a.at(t).x + cs * sx * a.half_length - sn * sy * a.half_width,
                                a.at(t).y + sn * sx * a.half_length + cs * sy * a.half_width,
                                sz * a.height};
              const auto px = scene::project_unbounded(corner, cam);
              if (!px) continue;
              u0 = std::min(u0, px->x);
              u1 = std::max(u1, px->x);
              v0 = std::min(v0, px->y);
              v1 = std::max(v1, px->y);
            }
        REQUIRE(u0 <= u1);
        const auto pattern = scene::agent_pattern(a.id, cfg.cam_channels, "camera");
        const double w = 1.0 / std::max(1.0, depth);
        for (int iu = std::max(0, static_cast<int>(std::floor(u0)));
             iu <= std::min(cfg.cam_width - 1, static_cast<int>(std::ceil(u1))); ++iu)
          for (int iv = std::max(0, static_cast<int>(std::floor(v0)));
               iv <= std::min(cfg.cam_height - 1, static_cast<int>(std::ceil(v1))); ++iv) {
            double* cell = expect.cell(iu, iv);
            cell[0] += 1.0;
            cell[1] += w;
            for (int k = 2; k < cfg.cam_channels; ++k) cell[k] += w * pattern[k];
          }
      }
      CHECK(frames[ci].features.data == expect.data);
    }
  }
}

TEST_CASE("occupancy rasterization") {
  SUBCASE("axis-aligned 2x2 m footprint labels exactly a 4x4 block") {
    const scene::OccupancyGridSpec spec{8, 8, 0.5};
    std::vector<std::pair<int, scene::Obb>> boxes{
        {1, scene::Obb{{0.0, 0.0, 0.0}, 1.0, 1.0}}};
    std::vector<std::int32_t> out(64);
    scene::rasterize_step(spec, boxes, out.data());
    // Brute-force oracle: point-in-rectangle per cell center.
    for (int ix = 0; ix < 8; ++ix)
      for (int iy = 0; iy < 8; ++iy) {
        const Vec2 cc = spec.cell_center(ix, iy);
        const bool inside = std::fabs(cc.x) <= 1.0 && std::fabs(cc.y) <= 1.0;
        CHECK(out[static_cast<std::size_t>(ix) * 8 + iy] == (inside ? 1 : 0));
      }
    int labeled = 0;
    for (auto v : out) labeled += v != 0;
    CHECK(labeled == 16);
  }

  SUBCASE("empty trajectory set leaves all cells free") {
    const scene::OccupancyGridSpec spec{6, 6, 0.5};
    const auto seq = scene::rasterize_occupancy({}, spec, 3, 1.0, 3.0);
    for (const auto& grid : seq.ids)
      for (auto v : grid) CHECK(v == 0);
  }

  SUBCASE("overlaps resolve to the smaller id") {
    const scene::OccupancyGridSpec spec{8, 8, 0.5};
    std::vector<std::pair<int, scene::Obb>> boxes{
        {4, scene::Obb{{0.0, 0.0, 0.0}, 1.0, 1.0}},
        {2, scene::Obb{{0.0, 0.0, 0.0}, 1.0, 1.0}}};
    std::vector<std::int32_t> out(64);
    scene::rasterize_step(spec, boxes, out.data());
    for (auto v : out) CHECK((v == 0 || v == 2));
  }

  SUBCASE("rotation oracle against brute-force point tests") {
    const scene::OccupancyGridSpec spec{20, 20, 0.5};
    const scene::Obb box{{0.7, -1.3, 0.6}, 1.8, 0.9};
    std::vector<std::pair<int, scene::Obb>> boxes{{5, box}};
    std::vector<std::int32_t> out(400);
    scene::rasterize_step(spec, boxes, out.data());
    for (int ix = 0; ix < 20; ++ix)
      for (int iy = 0; iy < 20; ++iy) {
        const Vec2 cc = spec.cell_center(ix, iy);
        const double c = std::cos(box.pose.yaw), sn = std::sin(box.pose.yaw);
        const double dx = cc.x - box.pose.x, dy = cc.y - box.pose.y;
        const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
        const bool inside = std::fabs(u) <= box.half_length && std::fabs(v) <= box.half_width;
        CHECK(out[static_cast<std::size_t>(ix) * 20 + iy] == (inside ? 5 : 0));
      }
  }

  SUBCASE("ground-truth futures land inside their own footprints") {
    const scene::SceneConfig cfg = small_cfg();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const scene::Scene s = scene::generate_scene(seed, cfg);
      const auto futures = scene::gt_agent_futures(s, cfg.t_pred);
      for (const auto& f : futures)
        for (const auto& pose : f.poses) {
          // The cell containing the center must raster to this agent when
          // rasterized alone.
          const int n = static_cast<int>(std::llround(cfg.far_m / cfg.occ_cell_m));
          const scene::OccupancyGridSpec spec{n, n, cfg.occ_cell_m};
          const double gx = (pose.x + spec.extent_x() / 2.0) / spec.cell_m;
          const double gy = (pose.y + spec.extent_y() / 2.0) / spec.cell_m;
          const int ix = static_cast<int>(std::floor(gx));
          const int iy = static_cast<int>(std::floor(gy));
          if (ix < 0 || iy < 0 || ix >= spec.nx || iy >= spec.ny) continue;
          const Vec2 cc = spec.cell_center(ix, iy);
          const double c = std::cos(pose.yaw), sn = std::sin(pose.yaw);
          const double dx = cc.x - pose.x, dy = cc.y - pose.y;
          const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
          CHECK(std::fabs(u) <= f.half_length + 1e-12);
          CHECK(std::fabs(v) <= f.half_width + 1e-12);
        }
    }
  }

  SUBCASE("occupancy JSON round-trips") {
    const scene::SceneConfig cfg = small_cfg();
    const scene::Scene s = scene::generate_scene(5, cfg);
    const auto occ = scene::gt_occupancy(s, cfg.t_pred);
    const auto j = scene::occupancy_to_json(occ);
    const auto back = scene::occupancy_from_json(j);
    CHECK(back.spec == occ.spec);
    CHECK(back.steps == occ.steps);
    CHECK(back.ids == occ.ids);
  }
}
