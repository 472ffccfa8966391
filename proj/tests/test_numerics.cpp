#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "num/checkpoint.hpp"
#include "num/defattn.hpp"
#include "num/gradcheck.hpp"
#include "num/grid.hpp"
#include "num/mhsa.hpp"
#include "num/mlp.hpp"
#include "num/ops.hpp"
#include "num/params.hpp"
#include "num/rng.hpp"
#include "test_helpers.hpp"

using namespace bevfuse;
using bevfuse::test::check_registry_grads;
using bevfuse::test::coords_for_prefix;
using bevfuse::test::randomize_params;

TEST_CASE("softmax basics") {
  SUBCASE("symmetry") {
    const auto s = num::softmax(std::vector<double>{0.0, 0.0});
    CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("shift invariance is exact for exactly-representable shifts") {
    const std::vector<double> x{1.0, 2.0, 3.0};
    std::vector<double> y{1.0 + 8.0, 2.0 + 8.0, 3.0 + 8.0};
    const auto a = num::softmax(x);
    const auto b = num::softmax(y);
    for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
  }
  SUBCASE("independent high-precision evaluation") {
    const auto s = num::softmax(std::vector<double>{1.0, 2.0, 3.0});
    CHECK(s[0] == doctest::Approx(0.0900305731703804579980221).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(0.2447284710547976524729596).epsilon(1e-14));
    CHECK(s[2] == doctest::Approx(0.6652409557748218895290183).epsilon(1e-14));
  }
  SUBCASE("normalization and positivity on random inputs") {
    num::Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> v(1 + rng.below(9));
      for (double& x : v) x = rng.uniform(-30.0, 30.0);
      const auto s = num::softmax(v);
      double sum = 0.0;
      for (double x : s) {
        CHECK(x >= 0.0);
        sum += x;
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(num::softmax(std::vector<double>{}), std::invalid_argument);
  }
  SUBCASE("non-finite input is an error") {
    CHECK_THROWS_AS(num::softmax(std::vector<double>{1.0, std::nan("")}),
                    std::invalid_argument);
  }
}

TEST_CASE("bilinear sampling") {
  num::Rng rng(3);
  const int nx = 5, ny = 4, c = 3;
  std::vector<double> data(static_cast<std::size_t>(nx) * ny * c);
  for (double& v : data) v = rng.uniform(-1.0, 1.0);
  const num::GridView g{data.data(), nx, ny, c};

  SUBCASE("integer coordinates return the cell exactly") {
    std::vector<double> out(c);
    num::bilinear_sample(g, 2.0, 3.0, out.data());
    for (int ch = 0; ch < c; ++ch) CHECK(out[ch] == g.cell(2, 3)[ch]);
  }
  SUBCASE("midpoint on one axis averages two cells") {
    std::vector<double> out(c);
    num::bilinear_sample(g, 1.5, 2.0, out.data());
    for (int ch = 0; ch < c; ++ch)
      CHECK(out[ch] == doctest::Approx(0.5 * (g.cell(1, 2)[ch] + g.cell(2, 2)[ch]))
                           .epsilon(1e-15));
  }
  SUBCASE("out of bounds returns zero") {
    std::vector<double> out(c, 1.0);
    num::bilinear_sample(g, -1.0, -1.0, out.data());
    for (int ch = 0; ch < c; ++ch) CHECK(out[ch] == 0.0);
    std::fill(out.begin(), out.end(), 1.0);
    num::bilinear_sample(g, 4.0001, 1.0, out.data());
    for (int ch = 0; ch < c; ++ch) CHECK(out[ch] == 0.0);
  }
  SUBCASE("exactly linear in the grid values") {
    std::vector<double> a(data.size()), b(data.size()), mix(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      a[i] = rng.uniform(-1.0, 1.0);
      b[i] = rng.uniform(-1.0, 1.0);
      mix[i] = 0.3 * a[i] + 0.7 * b[i];
    }
    const num::GridView ga{a.data(), nx, ny, c}, gb{b.data(), nx, ny, c},
        gm{mix.data(), nx, ny, c};
    for (int trial = 0; trial < 20; ++trial) {
      const double gx = rng.uniform(0.0, nx - 1.0);
      const double gy = rng.uniform(0.0, ny - 1.0);
      std::vector<double> sa(c), sb(c), sm(c);
      num::bilinear_sample(ga, gx, gy, sa.data());
      num::bilinear_sample(gb, gx, gy, sb.data());
      num::bilinear_sample(gm, gx, gy, sm.data());
      for (int ch = 0; ch < c; ++ch)
        CHECK(sm[ch] == doctest::Approx(0.3 * sa[ch] + 0.7 * sb[ch]).epsilon(1e-12));
    }
  }
}

TEST_CASE("grad_check on closed forms") {
  SUBCASE("quadratic") {
    std::vector<double> x{3.0};
    const std::vector<double> analytic{6.0};
    const auto f = [](std::span<const double> v) { return v[0] * v[0]; };
    CHECK(num::grad_check(f, x, analytic, 1e-4) <= 1e-9);
  }
  SUBCASE("linear is exact for any eps") {
    std::vector<double> x{1.0, -2.0};
    const std::vector<double> analytic{2.5, -4.0};
    const auto f = [](std::span<const double> v) { return 2.5 * v[0] - 4.0 * v[1]; };
    CHECK(num::grad_check(f, x, analytic, 1e-5) <= 1e-10);
    CHECK(num::grad_check(f, x, analytic, 1e-8) <= 1e-6);
  }
  SUBCASE("eps outside the sanctioned range is rejected") {
    std::vector<double> x{1.0};
    const std::vector<double> analytic{1.0};
    const auto f = [](std::span<const double> v) { return v[0]; };
    CHECK_THROWS_AS(num::grad_check(f, x, analytic, 1e-3), std::invalid_argument);
  }
}

TEST_CASE("mlp forward and gradients") {
  num::ParamRegistry reg;
  const auto mlp = num::make_mlp(reg, "mlp", {3, 8, 2}, num::Act::Tanh);
  reg.finalize(11);

  SUBCASE("gradient matches finite differences") {
    num::Rng rng(5);
    randomize_params(reg, rng);
    const std::vector<double> x{0.3, -0.8, 0.5};
    const std::vector<double> w{1.0, -2.0};
    const auto loss = [&] {
      std::vector<double> y(2);
      num::mlp_forward(reg, mlp, x.data(), y.data());
      return w[0] * y[0] + w[1] * y[1];
    };
    reg.zero_grads();
    loss();
    num::mlp_backward(reg, mlp, x.data(), w.data(), nullptr);
    const auto coords = coords_for_prefix(reg, "mlp");
    CHECK(check_registry_grads(reg, loss, coords) <= 1e-5);
  }
  SUBCASE("input gradient matches finite differences") {
    num::Rng rng(6);
    randomize_params(reg, rng);
    std::vector<double> x{0.1, 0.2, -0.4};
    const std::vector<double> w{0.7, 0.9};
    const auto f = [&](std::span<const double> xs) {
      std::vector<double> y(2);
      num::mlp_forward(reg, mlp, xs.data(), y.data());
      return w[0] * y[0] + w[1] * y[1];
    };
    std::vector<double> d_x(3, 0.0);
    num::mlp_backward(reg, mlp, x.data(), w.data(), d_x.data());
    CHECK(num::grad_check(f, x, d_x, 1e-5) <= 1e-5);
  }
  SUBCASE("non-finite intermediate is an error") {
    const std::vector<double> x{1e308, 1e308, 1e308};
    for (double& v : reg.values()) v = 1e308;
    std::vector<double> y(2);
    CHECK_THROWS_AS(num::mlp_forward(reg, mlp, x.data(), y.data()),
                    std::runtime_error);
  }
}

TEST_CASE("deformable attention") {
  const int c = 8, heads = 2, points = 3, nx = 6, ny = 5;
  num::ParamRegistry reg;
  const auto p = num::make_def_attn(reg, "attn", c, heads, points);
  reg.finalize(21);

  num::Rng rng(9);
  std::vector<double> grid(static_cast<std::size_t>(nx) * ny * c);
  for (double& v : grid) v = rng.uniform(-1.0, 1.0);
  const num::GridView gv{grid.data(), nx, ny, c};
  std::vector<double> query(c);
  for (double& v : query) v = rng.uniform(-1.0, 1.0);

  const auto span_of = [&](num::ParamRegistry& r, const char* path) {
    const auto& e = r.entries()[r.id(path)];
    return r.values().subspan(static_cast<std::size_t>(e.offset),
                              static_cast<std::size_t>(e.size));
  };

  SUBCASE("zero offsets and equal logits reduce to a projected sample") {
    for (double& v : span_of(reg, "attn.w_att")) v = 0.0;
    for (double& v : span_of(reg, "attn.b_att")) v = 0.0;
    std::vector<double> out(c);
    num::def_attn(reg, p, query.data(), 2.0, 3.0, gv, out.data());
    std::vector<double> s(c), u(c), expect(c);
    num::bilinear_sample(gv, 2.0, 3.0, s.data());
    num::linear(reg.val(p.w_val), reg.val(p.b_val), c, c, s.data(), u.data());
    num::linear(reg.val(p.w_out), reg.val(p.b_out), c, c, u.data(), expect.data());
    for (int ch = 0; ch < c; ++ch)
      CHECK(out[ch] == doctest::Approx(expect[ch]).epsilon(1e-12));
  }

  SUBCASE("one-hot attention selects a single sampling point") {
    randomize_params(reg, rng, 0.3);
    for (double& v : span_of(reg, "attn.w_att")) v = 0.0;
    {
      auto b = span_of(reg, "attn.b_att");
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = (i % points == 0) ? 60.0 : 0.0;
    }
    for (double& v : span_of(reg, "attn.w_off")) v = 0.0;
    {
      auto bo = span_of(reg, "attn.b_off");
      for (int h = 0; h < heads; ++h)
        for (int k = 0; k < points; ++k) {
          bo[2 * (h * points + k)] = k == 0 ? -1.0 : 1.0;
          bo[2 * (h * points + k) + 1] = k == 0 ? -2.0 : -1.0;
        }
    }
    std::vector<double> out_base(c);
    num::def_attn(reg, p, query.data(), 2.0, 3.0, gv, out_base.data());
    // Point 0 samples cell (1, 1); the ignored points sample (3, 2).
    std::vector<double> grid2 = grid;
    for (int ch = 0; ch < c; ++ch)
      grid2[(static_cast<std::size_t>(3) * ny + 2) * c + ch] += 10.0;
    const num::GridView gv2{grid2.data(), nx, ny, c};
    std::vector<double> out2(c);
    num::def_attn(reg, p, query.data(), 2.0, 3.0, gv2, out2.data());
    for (int ch = 0; ch < c; ++ch)
      CHECK(out2[ch] == doctest::Approx(out_base[ch]).epsilon(1e-9));
    std::vector<double> grid3 = grid;
    for (int ch = 0; ch < c; ++ch)
      grid3[(static_cast<std::size_t>(1) * ny + 1) * c + ch] += 10.0;
    const num::GridView gv3{grid3.data(), nx, ny, c};
    std::vector<double> out3(c);
    num::def_attn(reg, p, query.data(), 2.0, 3.0, gv3, out3.data());
    double diff = 0.0;
    for (int ch = 0; ch < c; ++ch) diff += std::fabs(out3[ch] - out_base[ch]);
    CHECK(diff > 1e-6);
  }

  SUBCASE("weights normalize per head (constant-field probe)") {
    randomize_params(reg, rng, 0.8);
    std::vector<double> cgrid(static_cast<std::size_t>(nx) * ny * c);
    for (int cell = 0; cell < nx * ny; ++cell)
      for (int ch = 0; ch < c; ++ch)
        cgrid[static_cast<std::size_t>(cell) * c + ch] = 0.5 + 0.1 * ch;
    const num::GridView cg{cgrid.data(), nx, ny, c};
    std::vector<double> s(c), u(c), expect(c), out(c);
    for (int ch = 0; ch < c; ++ch) s[ch] = 0.5 + 0.1 * ch;
    num::linear(reg.val(p.w_val), reg.val(p.b_val), c, c, s.data(), u.data());
    num::linear(reg.val(p.w_out), reg.val(p.b_out), c, c, u.data(), expect.data());
    num::def_attn(reg, p, query.data(), 2.5, 2.5, cg, out.data());
    for (int ch = 0; ch < c; ++ch)
      CHECK(out[ch] == doctest::Approx(expect[ch]).epsilon(1e-9));
  }

  SUBCASE("channel mismatch is an error") {
    std::vector<double> bad(static_cast<std::size_t>(nx) * ny * (c + 1), 0.0);
    const num::GridView bv{bad.data(), nx, ny, c + 1};
    std::vector<double> out(c);
    CHECK_THROWS_AS(num::def_attn(reg, p, query.data(), 1.0, 1.0, bv, out.data()),
                    std::invalid_argument);
  }

  SUBCASE("gradients match finite differences") {
    randomize_params(reg, rng, 0.4);
    std::vector<double> w(c);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    const double refx = 2.3, refy = 1.7;

    const auto loss = [&] {
      std::vector<double> out(c);
      num::def_attn(reg, p, query.data(), refx, refy, gv, out.data());
      double l = 0.0;
      for (int ch = 0; ch < c; ++ch) l += w[ch] * out[ch];
      return l;
    };
    reg.zero_grads();
    std::vector<double> d_query(c, 0.0), d_grid(grid.size(), 0.0);
    num::GridMut dg{d_grid.data(), nx, ny, c};
    num::def_attn_backward(reg, p, query.data(), refx, refy, gv, w.data(),
                           d_query.data(), &dg);

    const auto coords = coords_for_prefix(reg, "attn");
    CHECK(check_registry_grads(reg, loss, coords) <= 1e-5);

    const auto fq = [&](std::span<const double>) { return loss(); };
    CHECK(num::grad_check(fq, query, d_query, 1e-5) <= 1e-5);
    CHECK(num::grad_check(fq, grid, d_grid, 1e-5) <= 1e-5);
  }
}

TEST_CASE("multi-head self-attention") {
  const int c = 8, heads = 2;
  constexpr int n = 4;
  num::ParamRegistry reg;
  const auto p = num::make_mhsa(reg, "mhsa", c, heads);
  reg.finalize(31);
  num::Rng rng(13);
  randomize_params(reg, rng, 0.5);

  std::vector<double> x(static_cast<std::size_t>(n) * c);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);

  SUBCASE("channels not divisible by heads is an error") {
    num::ParamRegistry reg2;
    CHECK_THROWS_AS(num::make_mhsa(reg2, "bad", 6, 4), std::invalid_argument);
  }

  SUBCASE("singleton input reduces to projected value") {
    std::vector<double> y(c);
    num::mhsa(reg, p, x.data(), 1, y.data());
    std::vector<double> v(c), expect(c);
    num::linear(reg.val(p.w_v), reg.val(p.b_v), c, c, x.data(), v.data());
    num::linear(reg.val(p.w_o), reg.val(p.b_o), c, c, v.data(), expect.data());
    for (int ch = 0; ch < c; ++ch)
      CHECK(y[ch] == doctest::Approx(expect[ch]).epsilon(1e-12));
  }

  SUBCASE("permutation equivariance") {
    std::vector<double> y(static_cast<std::size_t>(n) * c);
    num::mhsa(reg, p, x.data(), n, y.data());
    const int perm[n] = {2, 0, 3, 1};
    std::vector<double> xp(x.size()), yp(y.size());
    for (int i = 0; i < n; ++i)
      std::copy(x.begin() + static_cast<std::size_t>(perm[i]) * c,
                x.begin() + static_cast<std::size_t>(perm[i] + 1) * c,
                xp.begin() + static_cast<std::size_t>(i) * c);
    num::mhsa(reg, p, xp.data(), n, yp.data());
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        CHECK(yp[static_cast<std::size_t>(i) * c + ch] ==
              doctest::Approx(y[static_cast<std::size_t>(perm[i]) * c + ch])
                  .epsilon(1e-12));
  }

  SUBCASE("gradients match finite differences") {
    std::vector<double> w(static_cast<std::size_t>(n) * c);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    const auto loss = [&] {
      std::vector<double> y(static_cast<std::size_t>(n) * c);
      num::mhsa(reg, p, x.data(), n, y.data());
      double l = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) l += w[i] * y[i];
      return l;
    };
    reg.zero_grads();
    std::vector<double> d_x(x.size(), 0.0);
    num::mhsa_backward(reg, p, x.data(), n, w.data(), d_x.data());
    const auto coords = coords_for_prefix(reg, "mhsa");
    CHECK(check_registry_grads(reg, loss, coords) <= 1e-5);
    const auto fx = [&](std::span<const double>) { return loss(); };
    CHECK(num::grad_check(fx, x, d_x, 1e-5) <= 1e-5);
  }
}

TEST_CASE("layer norm gradient") {
  const int c = 6;
  num::Rng rng(4);
  std::vector<double> gamma(c), beta(c), x(c), w(c);
  for (double& v : gamma) v = rng.uniform(0.5, 1.5);
  for (double& v : beta) v = rng.uniform(-0.5, 0.5);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  const auto f = [&](std::span<const double> xs) {
    std::vector<double> y(c);
    num::layer_norm(gamma.data(), beta.data(), c, xs.data(), y.data(), nullptr);
    double l = 0.0;
    for (int ch = 0; ch < c; ++ch) l += w[ch] * y[ch];
    return l;
  };
  std::vector<double> y(c), d_x(c, 0.0), d_gamma(c, 0.0), d_beta(c, 0.0);
  num::LayerNormCache cache;
  num::layer_norm(gamma.data(), beta.data(), c, x.data(), y.data(), &cache);
  num::layer_norm_backward(gamma.data(), c, x.data(), cache, w.data(), d_x.data(),
                           d_gamma.data(), d_beta.data());
  CHECK(num::grad_check(f, x, d_x, 1e-5) <= 1e-5);
}

TEST_CASE("parameter registry and checkpoints") {
  num::ParamRegistry reg;
  reg.add("a.w", {2, 3});
  reg.add("a.b", {3}, num::Init::Zero);
  reg.add("b.g", {4}, num::Init::One);
  reg.finalize(17);

  SUBCASE("initialization respects the fan-in bound") {
    const auto w = reg.get_values("a.w");
    for (double v : w) CHECK(std::fabs(v) <= 1.0 / std::sqrt(3.0));
    for (double v : reg.get_values("a.b")) CHECK(v == 0.0);
    for (double v : reg.get_values("b.g")) CHECK(v == 1.0);
  }

  SUBCASE("checkpoint JSON round-trips bit-exactly") {
    num::Rng rng(23);
    for (double& v : reg.values())
      v = rng.uniform(-1.0, 1.0) * std::exp(rng.uniform(-20.0, 20.0));
    const std::string text = num::params_to_json(reg).dump();
    num::ParamRegistry reg2;
    reg2.add("a.w", {2, 3});
    reg2.add("a.b", {3}, num::Init::Zero);
    reg2.add("b.g", {4}, num::Init::One);
    reg2.finalize(99);
    num::params_from_json(reg2, nlohmann::json::parse(text));
    for (std::int64_t i = 0; i < reg.total_size(); ++i)
      CHECK(reg.values()[static_cast<std::size_t>(i)] ==
            reg2.values()[static_cast<std::size_t>(i)]);
  }

  SUBCASE("masks and checksums track prefixes") {
    const auto mask = reg.mask_for_prefixes({"a."});
    const auto before = reg.checksum(mask);
    auto vals = reg.values();
    vals[static_cast<std::size_t>(reg.entries()[reg.id("b.g")].offset)] += 1.0;
    CHECK(reg.checksum(mask) == before);
    vals[static_cast<std::size_t>(reg.entries()[reg.id("a.w")].offset)] += 1.0;
    CHECK(reg.checksum(mask) != before);
  }

  SUBCASE("shape mismatch on load is an error") {
    auto j = num::params_to_json(reg);
    j["a.w"]["shape"] = std::vector<int>{3, 2};
    num::ParamRegistry reg2;
    reg2.add("a.w", {2, 3});
    reg2.add("a.b", {3});
    reg2.add("b.g", {4});
    reg2.finalize(1);
    CHECK_THROWS_AS(num::params_from_json(reg2, j), std::invalid_argument);
  }
}

TEST_CASE("rng determinism and serialization") {
  num::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const std::string s = a.serialize();
  num::Rng c;
  c.deserialize(s);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == c.uniform());
}
