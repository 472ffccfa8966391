#include "pnp/newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "num/grid.hpp"

namespace bevfuse::pnp {

using scene::Vec2;

namespace {

// In-place Cholesky; returns false when the matrix is not positive definite.
bool cholesky(std::vector<double>& a, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        sum -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (!(sum > 1e-300)) return false;
        a[static_cast<std::size_t>(i) * n + j] = std::sqrt(sum);
      } else {
        a[static_cast<std::size_t>(i) * n + j] = sum / a[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  return true;
}

void cholesky_solve(const std::vector<double>& l, int n, std::vector<double>& b) {
  for (int i = 0; i < n; ++i) {
    double sum = b[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) sum -= l[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = sum / l[static_cast<std::size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double sum = b[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < n; ++k) sum -= l[static_cast<std::size_t>(k) * n + i] * b[static_cast<std::size_t>(k)];
    b[static_cast<std::size_t>(i)] = sum / l[static_cast<std::size_t>(i) * n + i];
  }
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// 1-D squared distance transform (Felzenszwalb & Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  d.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int vk = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(vk)] + vk * vk)) /
          (2.0 * q - 2.0 * vk);
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int vk = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - vk) * (q - vk) + f[static_cast<std::size_t>(vk)];
  }
}

// Squared Euclidean distance (in cells) to the nearest seed cell.
std::vector<double> edt2(const std::vector<bool>& seed, int nx, int ny) {
  constexpr double kInf = 1e18;
  std::vector<double> d(static_cast<std::size_t>(nx) * ny);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = seed[i] ? 0.0 : kInf;
  std::vector<double> col(static_cast<std::size_t>(ny)), out;
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) col[static_cast<std::size_t>(iy)] = d[static_cast<std::size_t>(ix) * ny + iy];
    edt_1d(col, out);
    for (int iy = 0; iy < ny; ++iy) d[static_cast<std::size_t>(ix) * ny + iy] = out[static_cast<std::size_t>(iy)];
  }
  std::vector<double> row(static_cast<std::size_t>(nx));
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) row[static_cast<std::size_t>(ix)] = d[static_cast<std::size_t>(ix) * ny + iy];
    edt_1d(row, out);
    for (int ix = 0; ix < nx; ++ix) d[static_cast<std::size_t>(ix) * ny + iy] = out[static_cast<std::size_t>(ix)];
  }
  return d;
}

}  // namespace

NewtonResult newton_minimize(const Objective& f, std::span<const double> x0,
                             const NewtonOptions& opt) {
  const int n = static_cast<int>(x0.size());
  NewtonResult res;
  res.x.assign(x0.begin(), x0.end());
  std::vector<double> g(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n) * n);
  std::vector<double> gt(static_cast<std::size_t>(n)), ht(static_cast<std::size_t>(n) * n);
  res.j = f(res.x, g, h);
  if (!std::isfinite(res.j))
    throw std::runtime_error("newton: non-finite objective at start");
  res.j_history.push_back(res.j);

  std::vector<double> step(static_cast<std::size_t>(n)), x_try(static_cast<std::size_t>(n));
  for (int it = 0; it < opt.max_iter; ++it) {
    if (inf_norm(g) < opt.tol) {
      res.converged = true;
      break;
    }
    // Newton direction when the Hessian is PD, steepest descent otherwise.
    std::vector<double> l = h;
    if (cholesky(l, n)) {
      for (int i = 0; i < n; ++i) step[static_cast<std::size_t>(i)] = -g[static_cast<std::size_t>(i)];
      cholesky_solve(l, n, step);
    } else {
      for (int i = 0; i < n; ++i) step[static_cast<std::size_t>(i)] = -g[static_cast<std::size_t>(i)];
    }
    bool accepted = false;
    double lambda = 1.0;
    while (lambda >= 1e-12) {
      for (int i = 0; i < n; ++i)
        x_try[static_cast<std::size_t>(i)] = res.x[static_cast<std::size_t>(i)] + lambda * step[static_cast<std::size_t>(i)];
      const double j_try = f(x_try, gt, ht);
      if (!std::isfinite(j_try))
        throw std::runtime_error("newton: non-finite objective at trial point");
      if (j_try < res.j) {
        res.x = x_try;
        res.j = j_try;
        g = gt;
        h = ht;
        res.j_history.push_back(res.j);
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    ++res.iters;
    if (!accepted) break;  // no descent along this direction
  }
  return res;
}

PotentialField build_potential(const scene::OccupancySequence& occ,
                               double soften_cells) {
  if (!(soften_cells > 0.0))
    throw std::invalid_argument("potential: softening length must be positive");
  PotentialField pf;
  pf.spec = occ.spec;
  pf.steps = occ.steps;
  const int nx = occ.spec.nx, ny = occ.spec.ny;
  pf.phi.resize(static_cast<std::size_t>(occ.steps));
  for (int t = 0; t < occ.steps; ++t) {
    const auto& ids = occ.ids[static_cast<std::size_t>(t)];
    std::vector<bool> occupied(ids.size()), free_cells(ids.size());
    bool any = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      occupied[i] = ids[i] != 0;
      free_cells[i] = ids[i] == 0;
      any = any || occupied[i];
    }
    auto& phi = pf.phi[static_cast<std::size_t>(t)];
    phi.assign(ids.size(), 0.0);
    if (!any) continue;
    const auto d_occ = edt2(occupied, nx, ny);
    const auto d_free = edt2(free_cells, nx, ny);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (occupied[i]) {
        const double d = std::sqrt(d_free[i]);
        const double v = 1.0 + d / soften_cells;
        phi[i] = v * v;
      } else {
        const double d = std::sqrt(d_occ[i]);
        const double v = std::max(0.0, 1.0 - d / soften_cells);
        phi[i] = v * v;
      }
    }
  }
  return pf;
}

double PotentialField::eval(int t, Vec2 p, Vec2* grad, double* hess_xy) const {
  if (grad) *grad = {0.0, 0.0};
  if (hess_xy) *hess_xy = 0.0;
  const auto& phi = this->phi[static_cast<std::size_t>(t)];
  const double gx = (p.x + spec.extent_x() / 2.0) / spec.cell_m - 0.5;
  const double gy = (p.y + spec.extent_y() / 2.0) / spec.cell_m - 0.5;
  const num::BilinearTap tap = num::bilinear_tap(spec.nx, spec.ny, gx, gy);
  if (!tap.valid) return 0.0;
  const double f00 = phi[static_cast<std::size_t>(tap.i0) * spec.ny + tap.j0];
  const double f01 = phi[static_cast<std::size_t>(tap.i0) * spec.ny + tap.j1];
  const double f10 = phi[static_cast<std::size_t>(tap.i1) * spec.ny + tap.j0];
  const double f11 = phi[static_cast<std::size_t>(tap.i1) * spec.ny + tap.j1];
  const double fx = tap.fx, fy = tap.fy;
  const double v = (1 - fx) * (1 - fy) * f00 + (1 - fx) * fy * f01 +
                   fx * (1 - fy) * f10 + fx * fy * f11;
  if (grad) {
    const double inv = 1.0 / spec.cell_m;
    grad->x = ((1 - fy) * (f10 - f00) + fy * (f11 - f01)) * inv;
    grad->y = ((1 - fx) * (f01 - f00) + fx * (f11 - f10)) * inv;
  }
  if (hess_xy) *hess_xy = (f00 - f01 - f10 + f11) / (spec.cell_m * spec.cell_m);
  return v;
}

std::vector<Vec2> optimize_plan(std::span<const Vec2> anchor,
                                const scene::OccupancySequence& occ,
                                const NewtonOptions& opt, OptimizeLog* log) {
  const int steps = static_cast<int>(anchor.size());
  if (occ.steps < steps)
    throw std::invalid_argument("optimize_plan: occupancy shorter than plan");
  const PotentialField pf = build_potential(occ, opt.soften_cells);

  std::vector<Vec2> out(anchor.begin(), anchor.end());
  std::vector<std::vector<double>> histories;
  for (int t = 0; t < steps; ++t) {
    const Vec2 a = anchor[static_cast<std::size_t>(t)];
    const auto objective = [&](std::span<const double> x, std::span<double> g,
                               std::span<double> h) {
      Vec2 pg;
      double hxy = 0.0;
      const double v = pf.eval(t, {x[0], x[1]}, &pg, &hxy);
      const double dx = x[0] - a.x, dy = x[1] - a.y;
      g[0] = 2.0 * dx + opt.w_occ * pg.x;
      g[1] = 2.0 * dy + opt.w_occ * pg.y;
      h[0] = 2.0;
      h[1] = opt.w_occ * hxy;
      h[2] = opt.w_occ * hxy;
      h[3] = 2.0;
      return dx * dx + dy * dy + opt.w_occ * v;
    };
    const double x0[2] = {a.x, a.y};
    NewtonResult r = newton_minimize(objective, {x0, 2}, opt);
    if (r.iters > 0 && r.j_history.size() > 1) {
      out[static_cast<std::size_t>(t)] = {r.x[0], r.x[1]};
    }
    // A converged zero-iteration solve returns the anchor bit-exactly.
    histories.push_back(std::move(r.j_history));
    if (log) log->iters += r.iters;
  }

  if (log) {
    double base = 0.0;
    for (const auto& h : histories) base += h.front();
    log->j_total.push_back(base);
    for (const auto& h : histories)
      for (std::size_t k = 1; k < h.size(); ++k) {
        base -= h[k - 1] - h[k];
        log->j_total.push_back(base);
      }
  }
  return out;
}

}  // namespace bevfuse::pnp
