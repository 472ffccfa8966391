#pragma once

#include <cstdint>
#include <functional>
#include <span>

namespace bevfuse::num {

// Compares an analytic gradient against central finite differences
// (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps), coordinate by coordinate, and
// returns the maximum relative error max|a - fd| / max(|a|, |fd|, 1e-4).
// x is restored after probing. eps must lie in [1e-8, 1e-4].
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<double> x, std::span<const double> analytic,
                  double eps);

// Same, probing only the listed coordinates.
double grad_check_sampled(const std::function<double(std::span<const double>)>& f,
                          std::span<double> x, std::span<const double> analytic,
                          double eps, std::span<const std::int64_t> coords);

}  // namespace bevfuse::num
