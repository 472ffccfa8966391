#include "num/grid.hpp"

#include <cstring>

namespace bevfuse::num {

void bilinear_sample(GridView g, double gx, double gy, double* out) {
  const BilinearTap t = bilinear_tap(g.nx, g.ny, gx, gy);
  if (!t.valid) {
    std::memset(out, 0, sizeof(double) * static_cast<std::size_t>(g.c));
    return;
  }
  const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
  const double w01 = (1.0 - t.fx) * t.fy;
  const double w10 = t.fx * (1.0 - t.fy);
  const double w11 = t.fx * t.fy;
  const double* g00 = g.cell(t.i0, t.j0);
  const double* g01 = g.cell(t.i0, t.j1);
  const double* g10 = g.cell(t.i1, t.j0);
  const double* g11 = g.cell(t.i1, t.j1);
  for (int ch = 0; ch < g.c; ++ch)
    out[ch] = w00 * g00[ch] + w01 * g01[ch] + w10 * g10[ch] + w11 * g11[ch];
}

void bilinear_backward_grid(GridMut d_grid, double gx, double gy,
                            const double* d_out) {
  const BilinearTap t = bilinear_tap(d_grid.nx, d_grid.ny, gx, gy);
  if (!t.valid) return;
  const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
  const double w01 = (1.0 - t.fx) * t.fy;
  const double w10 = t.fx * (1.0 - t.fy);
  const double w11 = t.fx * t.fy;
  double* g00 = d_grid.cell(t.i0, t.j0);
  double* g01 = d_grid.cell(t.i0, t.j1);
  double* g10 = d_grid.cell(t.i1, t.j0);
  double* g11 = d_grid.cell(t.i1, t.j1);
  for (int ch = 0; ch < d_grid.c; ++ch) {
    const double d = d_out[ch];
    g00[ch] += w00 * d;
    g01[ch] += w01 * d;
    g10[ch] += w10 * d;
    g11[ch] += w11 * d;
  }
}

void bilinear_backward_point(GridView g, double gx, double gy,
                             const double* d_out, double& d_gx, double& d_gy) {
  const BilinearTap t = bilinear_tap(g.nx, g.ny, gx, gy);
  if (!t.valid) return;
  const double* g00 = g.cell(t.i0, t.j0);
  const double* g01 = g.cell(t.i0, t.j1);
  const double* g10 = g.cell(t.i1, t.j0);
  const double* g11 = g.cell(t.i1, t.j1);
  for (int ch = 0; ch < g.c; ++ch) {
    const double d = d_out[ch];
    d_gx += d * ((1.0 - t.fy) * (g10[ch] - g00[ch]) + t.fy * (g11[ch] - g01[ch]));
    d_gy += d * ((1.0 - t.fx) * (g01[ch] - g00[ch]) + t.fx * (g11[ch] - g10[ch]));
  }
}

}  // namespace bevfuse::num
