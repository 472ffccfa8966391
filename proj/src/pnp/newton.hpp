#pragma once

#include <functional>
#include <span>
#include <vector>

#include "scene/occupancy.hpp"

namespace bevfuse::pnp {

struct NewtonOptions {
  double w_occ = 1.0;
  double soften_cells = 1.0;
  double tol = 1e-8;
  int max_iter = 50;
};

// Objective callback: fills grad (n) and hess (n x n, row major), returns J.
using Objective = std::function<double(std::span<const double> x,
                                       std::span<double> grad,
                                       std::span<double> hess)>;

struct NewtonResult {
  std::vector<double> x;
  double j = 0.0;
  int iters = 0;
  bool converged = false;
  std::vector<double> j_history;  // J at start plus after every accepted step
};

// Damped Newton with Cholesky positive-definiteness check, gradient-descent
// fallback and halving line search. J is non-increasing across accepted
// steps. Throws on non-finite J.
NewtonResult newton_minimize(const Objective& f, std::span<const double> x0,
                             const NewtonOptions& opt);

// Smoothed occupancy penalty per future step. Occupied cells carry
// (1 + d_free/soften)^2 so the field keeps sloping outward inside blobs;
// free cells carry max(0, 1 - d_occ/soften)^2, which vanishes one softening
// length away from any occupied cell. Values between cell centers come from
// bilinear interpolation.
struct PotentialField {
  scene::OccupancyGridSpec spec;
  int steps = 0;
  std::vector<std::vector<double>> phi;

  // Value, gradient (per meter) and the mixed second derivative at an
  // ego-frame point. Outside the grid everything is zero.
  double eval(int t, scene::Vec2 p, scene::Vec2* grad, double* hess_xy) const;
};

PotentialField build_potential(const scene::OccupancySequence& occ,
                               double soften_cells);

struct OptimizeLog {
  std::vector<double> j_total;  // total J trace across accepted steps
  int iters = 0;
};

// Trajectory optimization: J(tau) = |tau - anchor|^2 + w_occ * sum_t
// potential_t(tau_t). The anchor term decouples waypoints, so each gets an
// exact 2x2 damped Newton solve. With an all-free occupancy the anchor is
// returned unchanged, bit for bit.
std::vector<scene::Vec2> optimize_plan(std::span<const scene::Vec2> anchor,
                                       const scene::OccupancySequence& occ,
                                       const NewtonOptions& opt,
                                       OptimizeLog* log = nullptr);

}  // namespace bevfuse::pnp
