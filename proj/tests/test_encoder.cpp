#include <doctest.h>

#include <cmath>

#include "encoder/encoder.hpp"
#include "num/gradcheck.hpp"
#include "scene/render.hpp"
#include "test_helpers.hpp"

using namespace bevfuse;
using bevfuse::test::check_registry_grads;
using bevfuse::test::coords_for_prefix;
using bevfuse::test::sample_coords;
using scene::BevGrid;
using scene::Vec2;

namespace {

scene::SceneConfig tiny_scene_cfg() {
  scene::SceneConfig c;
  c.bev_nx = c.bev_ny = 6;
  c.bev_channels = 8;
  c.extent_m = 12.0;
  c.cam_count = 1;
  c.cam_width = 10;
  c.cam_height = 8;
  c.cam_channels = 8;
  c.max_agents = 3;
  c.noise_sigma = 0.05;
  return c;
}

enc::EncoderConfig tiny_encoder_cfg() {
  enc::EncoderConfig e;
  e.layers = 2;
  e.strict_layers = false;
  e.heads = 2;
  e.points = 2;
  e.n_ref = 2;
  e.ffn_hidden = 12;
  e.bev_nx = e.bev_ny = 6;
  e.channels = 8;
  e.extent_m = 12.0;
  return e;
}

BevGrid random_grid(num::Rng& rng, int nx, int ny, int c, double extent,
                    double lo = 0.0, double hi = 1.0) {
  BevGrid g(nx, ny, c, extent);
  for (double& v : g.data) v = rng.uniform(lo, hi);
  return g;
}

double grid_sum(const BevGrid& g) {
  double s = 0.0;
  for (double v : g.data) s += v;
  return s;
}

}  // namespace

TEST_CASE("align_history") {
  num::Rng rng(77);

  SUBCASE("identity motion is a bit-exact identity") {
    const BevGrid g = random_grid(rng, 8, 8, 4, 8.0, -1.0, 1.0);
    const BevGrid out = enc::align_history(g, {0.0, 0.0, 0.0});
    CHECK(out.data == g.data);
  }

  SUBCASE("integer-cell translation matches a brute-force shift") {
    const int nx = 8, ny = 8, c = 3;
    const BevGrid g = random_grid(rng, nx, ny, c, 8.0, -1.0, 1.0);  // res 1 m
    const int kx = 2, ky = -3;
    // Current ego sits at (kx, ky) in the previous frame; a feature fixed in
    // the world moves by (-kx, -ky) in grid coordinates.
    const BevGrid out = enc::align_history(g, {static_cast<double>(kx),
                                               static_cast<double>(ky), 0.0});
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy)
        for (int ch = 0; ch < c; ++ch) {
          const int sx = ix + kx, sy = iy + ky;
          const double expect =
              (sx >= 0 && sx < nx && sy >= 0 && sy < ny) ? g.cell(sx, sy)[ch] : 0.0;
          CHECK(out.cell(ix, iy)[ch] == expect);
        }
  }

  SUBCASE("a 180-degree rotation leaves a symmetric field unchanged") {
    const int nx = 8, ny = 8, c = 2;
    BevGrid g(nx, ny, c, 8.0);
    for (int ix = 0; ix < nx; ++ix)
      for (int iy = 0; iy < ny; ++iy)
        for (int ch = 0; ch < c; ++ch) {
          const double v = std::sin(0.7 * ix) + std::cos(0.3 * iy) + ch;
          g.cell(ix, iy)[ch] += v;
          g.cell(nx - 1 - ix, ny - 1 - iy)[ch] += v;
        }
    const BevGrid out = enc::align_history(g, {0.0, 0.0, M_PI});
    for (std::size_t i = 0; i < g.data.size(); ++i)
      CHECK(out.data[i] == doctest::Approx(g.data[i]).epsilon(1e-10));
  }

  SUBCASE("mass bound on random warps") {
    for (int trial = 0; trial < 100; ++trial) {
      const BevGrid g = random_grid(rng, 12, 12, 3, 12.0, 0.0, 1.0);
      const scene::Pose2 motion{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                                rng.uniform(-M_PI, M_PI)};
      const BevGrid out = enc::align_history(g, motion);
      CHECK(grid_sum(out) <= grid_sum(g) + 1e-9);
    }
  }

  SUBCASE("mass is preserved when the warped support stays in bounds") {
    for (int trial = 0; trial < 20; ++trial) {
      BevGrid g(12, 12, 2, 12.0);
      for (int ix = 5; ix <= 7; ++ix)
        for (int iy = 5; iy <= 7; ++iy)
          for (int ch = 0; ch < 2; ++ch)
            g.cell(ix, iy)[ch] = rng.uniform(0.0, 1.0);
      const scene::Pose2 motion{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                rng.uniform(-0.3, 0.3)};
      const BevGrid out = enc::align_history(g, motion);
      CHECK(grid_sum(out) == doctest::Approx(grid_sum(g)).epsilon(1e-12));
    }
  }

  SUBCASE("backward is the exact transpose") {
    // <A x, y> == <x, A^T y> for random x, y.
    const int nx = 6, ny = 6, c = 2;
    const scene::Pose2 motion{0.7, -1.1, 0.4};
    const BevGrid x = random_grid(rng, nx, ny, c, 6.0, -1.0, 1.0);
    const BevGrid y = random_grid(rng, nx, ny, c, 6.0, -1.0, 1.0);
    const BevGrid ax = enc::align_history(x, motion);
    BevGrid aty(nx, ny, c, 6.0);
    enc::align_history_backward(y, motion, aty);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      lhs += ax.data[i] * y.data[i];
      rhs += x.data[i] * aty.data[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("encoder construction rules") {
  num::ParamRegistry reg;
  enc::EncoderConfig cfg = tiny_encoder_cfg();
  SUBCASE("strict mode requires six layers") {
    cfg.strict_layers = true;
    cfg.layers = 4;
    CHECK_THROWS_AS(enc::make_encoder(reg, cfg), std::invalid_argument);
  }
  SUBCASE("pillar heights are an inclusive linspace") {
    cfg.n_ref = 3;
    cfg.z_min = 0.0;
    cfg.z_max = 2.0;
    const auto z = enc::pillar_heights(cfg);
    REQUIRE(z.size() == 3);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 1.0);
    CHECK(z[2] == 2.0);
    cfg.n_ref = 1;
    const auto z1 = enc::pillar_heights(cfg);
    CHECK(z1[0] == 1.0);
  }
}

TEST_CASE("encoder forward contracts") {
  const scene::SceneConfig scfg = tiny_scene_cfg();
  const enc::EncoderConfig ecfg = tiny_encoder_cfg();
  const scene::Scene s = scene::generate_scene(42, scfg);
  const enc::FrameInputs in = enc::make_frame_inputs(s, scfg.t_obs - 1);

  SUBCASE("zeroed layer parameters reduce to the query embeddings") {
    num::ParamRegistry reg;
    const auto ep = enc::make_encoder(reg, ecfg);
    reg.finalize(5);
    for (const auto& e : reg.entries()) {
      if (e.path.rfind("encoder.layer", 0) != 0) continue;
      for (std::int64_t i = 0; i < e.size; ++i)
        reg.values()[static_cast<std::size_t>(e.offset + i)] = 0.0;
    }
    const BevGrid out = enc::encode(reg, ep, in, nullptr, {}, nullptr);
    const double* q = reg.val(ep.bev_query);
    for (std::size_t i = 0; i < out.data.size(); ++i) CHECK(out.data[i] == q[i]);
  }

  SUBCASE("ablating any sublayer leaves a valid forward pass") {
    for (const char* tag : {"tsa_curr", "tsa_hist", "pca", "ica"}) {
      num::ParamRegistry reg;
      const auto ep = enc::make_encoder(reg, ecfg);
      reg.finalize(6);
      num::Rng rng(8);
      bevfuse::test::randomize_params(reg, rng, 0.3);
      for (const auto& e : reg.entries()) {
        const bool is_out = e.path.find(tag) != std::string::npos &&
                            (e.path.find(".w_out") != std::string::npos ||
                             e.path.find(".b_out") != std::string::npos);
        if (!is_out) continue;
        for (std::int64_t i = 0; i < e.size; ++i)
          reg.values()[static_cast<std::size_t>(e.offset + i)] = 0.0;
      }
      const BevGrid out = enc::encode(reg, ep, in, nullptr, {}, nullptr);
      for (double v : out.data) CHECK(std::isfinite(v));
    }
  }

  SUBCASE("constant LiDAR field gives position-independent PCA output") {
    // Offset projections are zero at init, so samples land on the reference
    // point; a constant field then yields identical outputs everywhere.
    num::ParamRegistry reg;
    enc::EncoderConfig ecfg1 = ecfg;
    ecfg1.layers = 1;
    ecfg1.order = enc::SublayerOrder::PcaIcaTsaFfn;  // PCA acts first
    const auto ep = enc::make_encoder(reg, ecfg1);
    reg.finalize(7);
    // Identical queries everywhere isolate the spatial dependence.
    {
      const auto& e = reg.entries()[reg.id("encoder.bev_query")];
      for (std::int64_t i = 0; i < e.size; ++i)
        reg.values()[static_cast<std::size_t>(e.offset + i)] =
            0.1 * static_cast<double>(i % ecfg1.channels);
    }
    enc::FrameInputs cin = in;
    for (int cell = 0; cell < ecfg1.cells(); ++cell)
      for (int ch = 0; ch < ecfg1.channels; ++ch)
        cin.lidar.data[static_cast<std::size_t>(cell) * ecfg1.channels + ch] =
            0.5 + 0.2 * ch;
    // Remove the camera branch so only PCA and per-cell sublayers remain.
    for (const auto& e : reg.entries()) {
      const bool ica_out = e.path.find("ica") != std::string::npos &&
                           (e.path.find(".w_out") != std::string::npos ||
                            e.path.find(".b_out") != std::string::npos);
      if (!ica_out) continue;
      for (std::int64_t i = 0; i < e.size; ++i)
        reg.values()[static_cast<std::size_t>(e.offset + i)] = 0.0;
    }
    const BevGrid out = enc::encode(reg, ep, cin, nullptr, {}, nullptr);
    const int c = ecfg1.channels;
    for (int cell = 1; cell < ecfg1.cells(); ++cell)
      for (int ch = 0; ch < c; ++ch)
        CHECK(out.data[static_cast<std::size_t>(cell) * c + ch] ==
              doctest::Approx(out.data[static_cast<std::size_t>(ch)]).epsilon(1e-12));
  }

  SUBCASE("LiDAR extent mismatch is an error") {
    num::ParamRegistry reg;
    const auto ep = enc::make_encoder(reg, ecfg);
    reg.finalize(9);
    enc::FrameInputs bad = in;
    bad.lidar.extent_m = 24.0;
    CHECK_THROWS_AS(enc::encode(reg, ep, bad, nullptr, {}, nullptr),
                    std::invalid_argument);
  }

  SUBCASE("forward is deterministic") {
    num::ParamRegistry reg;
    const auto ep = enc::make_encoder(reg, ecfg);
    reg.finalize(10);
    const BevGrid a = enc::encode(reg, ep, in, nullptr, {}, nullptr);
    const BevGrid b = enc::encode(reg, ep, in, nullptr, {}, nullptr);
    CHECK(a.data == b.data);
    for (double v : a.data) CHECK(std::isfinite(v));
  }

  SUBCASE("history influences the output only through the TSA branch") {
    num::ParamRegistry reg;
    const auto ep = enc::make_encoder(reg, ecfg);
    reg.finalize(12);
    num::Rng rng(13);
    bevfuse::test::randomize_params(reg, rng, 0.2);
    BevGrid prev = random_grid(rng, ecfg.bev_nx, ecfg.bev_ny, ecfg.channels,
                               ecfg.extent_m, -0.5, 0.5);
    const BevGrid with_hist = enc::encode(reg, ep, in, &prev, {}, nullptr);
    // Ablate the history branch output projection.
    for (const auto& e : reg.entries()) {
      const bool hist_out = e.path.find("tsa_hist") != std::string::npos &&
                            (e.path.find(".w_out") != std::string::npos ||
                             e.path.find(".b_out") != std::string::npos);
      if (!hist_out) continue;
      for (std::int64_t i = 0; i < e.size; ++i)
        reg.values()[static_cast<std::size_t>(e.offset + i)] = 0.0;
    }
    const BevGrid ablated_hist = enc::encode(reg, ep, in, &prev, {}, nullptr);
    const BevGrid ablated_none = enc::encode(reg, ep, in, nullptr, {}, nullptr);
    CHECK(ablated_hist.data == ablated_none.data);
    double diff = 0.0;
    for (std::size_t i = 0; i < with_hist.data.size(); ++i)
      diff += std::fabs(with_hist.data[i] - ablated_hist.data[i]);
    CHECK(diff > 1e-9);
  }
}

TEST_CASE("encoder gradients") {
  const scene::SceneConfig scfg = tiny_scene_cfg();
  const enc::EncoderConfig ecfg = tiny_encoder_cfg();
  const scene::Scene s = scene::generate_scene(17, scfg);
  const enc::FrameInputs in = enc::make_frame_inputs(s, scfg.t_obs - 1);

  num::ParamRegistry reg;
  const auto ep = enc::make_encoder(reg, ecfg);
  reg.finalize(15);
  num::Rng rng(19);
  bevfuse::test::randomize_params(reg, rng, 0.25);

  BevGrid prev = random_grid(rng, ecfg.bev_nx, ecfg.bev_ny, ecfg.channels,
                             ecfg.extent_m, -0.5, 0.5);
  const scene::Pose2 motion{0.8, -0.4, 0.15};

  std::vector<double> w(static_cast<std::size_t>(ecfg.cells()) * ecfg.channels);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);

  enc::FrameInputs inputs = in;
  const auto loss = [&] {
    const BevGrid out = enc::encode(reg, ep, inputs, &prev, motion, nullptr);
    double l = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) l += w[i] * out.data[i];
    return l;
  };

  enc::EncodeCache cache;
  enc::encode(reg, ep, inputs, &prev, motion, &cache);
  reg.zero_grads();
  BevGrid d_prev(ecfg.bev_nx, ecfg.bev_ny, ecfg.channels, ecfg.extent_m);
  BevGrid d_lidar(ecfg.bev_nx, ecfg.bev_ny, ecfg.channels, ecfg.extent_m);
  std::vector<scene::FeatureGrid> d_cams;
  for (const auto& f : inputs.cam_feats) d_cams.emplace_back(f.nx, f.ny, f.c);
  enc::EncodeInputGrads grads;
  grads.d_prev = &d_prev;
  grads.d_lidar = &d_lidar;
  grads.d_cams = &d_cams;
  enc::encode_backward(reg, ep, inputs, &prev, motion, cache, w, grads);

  SUBCASE("sampled parameter coordinates in every group") {
    std::vector<std::int64_t> coords;
    for (const char* group :
         {"encoder.bev_query", "encoder.layer0.tsa_curr", "encoder.layer0.tsa_hist",
          "encoder.layer0.pca", "encoder.layer0.ica", "encoder.layer0.ffn",
          "encoder.layer0.ln0", "encoder.layer1.tsa_curr", "encoder.layer1.ffn",
          "encoder.layer1.ln3"}) {
      const auto all = coords_for_prefix(reg, group);
      REQUIRE(!all.empty());
      num::Rng pick(num::hash_str(group));
      for (int i = 0; i < 6; ++i)
        coords.push_back(all[pick.below(all.size())]);
    }
    CHECK(check_registry_grads(reg, loss, coords) <= 1e-5);
  }

  SUBCASE("previous-grid gradient matches finite differences") {
    num::Rng pick(23);
    const auto coords = sample_coords(pick, static_cast<std::int64_t>(prev.data.size()), 30);
    std::vector<double> analytic(d_prev.data);
    const auto f = [&](std::span<const double>) { return loss(); };
    CHECK(num::grad_check_sampled(f, prev.data, analytic, 1e-5, coords) <= 1e-5);
  }

  SUBCASE("LiDAR gradient matches finite differences") {
    num::Rng pick(29);
    const auto coords =
        sample_coords(pick, static_cast<std::int64_t>(inputs.lidar.data.size()), 30);
    std::vector<double> analytic(d_lidar.data);
    const auto f = [&](std::span<const double>) { return loss(); };
    CHECK(num::grad_check_sampled(f, inputs.lidar.data, analytic, 1e-5, coords) <= 1e-5);
  }

  SUBCASE("camera-feature gradient matches finite differences") {
    num::Rng pick(31);
    auto& feats = inputs.cam_feats[0];
    const auto coords = sample_coords(pick, static_cast<std::int64_t>(feats.data.size()), 30);
    std::vector<double> analytic(d_cams[0].data);
    const auto f = [&](std::span<const double>) { return loss(); };
    CHECK(num::grad_check_sampled(f, feats.data, analytic, 1e-5, coords) <= 1e-5);
  }
}

TEST_CASE("encoder recurrence flows through returned grids only") {
  const scene::SceneConfig scfg = tiny_scene_cfg();
  const enc::EncoderConfig ecfg = tiny_encoder_cfg();
  const scene::Scene s = scene::generate_scene(55, scfg);

  num::ParamRegistry reg;
  const auto ep = enc::make_encoder(reg, ecfg);
  reg.finalize(33);
  num::Rng rng(34);
  bevfuse::test::randomize_params(reg, rng, 0.2);

  const enc::FrameInputs f0 = enc::make_frame_inputs(s, 0);
  const enc::FrameInputs f1 = enc::make_frame_inputs(s, 1);
  const scene::Pose2 motion = scene::relative_pose(s.ego[0], s.ego[1]);

  const BevGrid b0 = enc::encode(reg, ep, f0, nullptr, {}, nullptr);
  const BevGrid out_chain = enc::encode(reg, ep, f1, &b0, motion, nullptr);

  // Replacing frame-0 inputs while keeping its returned grid fixed must not
  // change the frame-1 output.
  BevGrid b0_copy = b0;
  const BevGrid out_replayed = enc::encode(reg, ep, f1, &b0_copy, motion, nullptr);
  CHECK(out_chain.data == out_replayed.data);
}
