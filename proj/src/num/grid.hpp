#pragma once

#include <cmath>

namespace bevfuse::num {

// Non-owning view of an (nx, ny, c) row-major feature grid.
struct GridView {
  const double* data = nullptr;
  int nx = 0;
  int ny = 0;
  int c = 0;

  const double* cell(int ix, int iy) const {
    return data + (static_cast<std::size_t>(ix) * ny + iy) * c;
  }
};

struct GridMut {
  double* data = nullptr;
  int nx = 0;
  int ny = 0;
  int c = 0;

  double* cell(int ix, int iy) {
    return data + (static_cast<std::size_t>(ix) * ny + iy) * c;
  }
  GridView view() const { return {data, nx, ny, c}; }
};

// The four cells and weights touched by one bilinear lookup. `valid` is false
// for points outside [0, nx-1] x [0, ny-1]; those sample as the zero vector.
struct BilinearTap {
  bool valid = false;
  int i0 = 0, i1 = 0, j0 = 0, j1 = 0;
  double fx = 0.0, fy = 0.0;
};

inline BilinearTap bilinear_tap(int nx, int ny, double gx, double gy) {
  BilinearTap t;
  if (!(gx >= 0.0 && gy >= 0.0 && gx <= nx - 1 && gy <= ny - 1)) return t;
  t.valid = true;
  if (nx == 1) {
    t.i0 = t.i1 = 0;
    t.fx = 0.0;
  } else {
    int i0 = static_cast<int>(std::floor(gx));
    if (i0 > nx - 2) i0 = nx - 2;
    t.i0 = i0;
    t.i1 = i0 + 1;
    t.fx = gx - i0;
  }
  if (ny == 1) {
    t.j0 = t.j1 = 0;
    t.fy = 0.0;
  } else {
    int j0 = static_cast<int>(std::floor(gy));
    if (j0 > ny - 2) j0 = ny - 2;
    t.j0 = j0;
    t.j1 = j0 + 1;
    t.fy = gy - j0;
  }
  return t;
}

// out[c] = bilinear interpolation of grid at (gx, gy); zero vector when the
// point lies outside the sampleable region.
void bilinear_sample(GridView g, double gx, double gy, double* out);

// Accumulates d_grid += w * d_out at the four tapped cells.
void bilinear_backward_grid(GridMut d_grid, double gx, double gy,
                            const double* d_out);

// Chain rule through the sample position:
// (d_gx, d_gy) += sum_c d_out[c] * d sample_c / d (gx, gy).
void bilinear_backward_point(GridView g, double gx, double gy,
                             const double* d_out, double& d_gx, double& d_gy);

}  // namespace bevfuse::num
