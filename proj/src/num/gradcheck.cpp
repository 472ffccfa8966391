#include "num/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace bevfuse::num {

double grad_check_sampled(const std::function<double(std::span<const double>)>& f,
                          std::span<double> x, std::span<const double> analytic,
                          double eps, std::span<const std::int64_t> coords) {
  if (!(eps >= 1e-8 && eps <= 1e-4))
    throw std::invalid_argument("grad_check: eps out of [1e-8, 1e-4]");
  if (x.size() != analytic.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  double worst = 0.0;
  for (std::int64_t i : coords) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double f_plus = f(x);
    x[i] = saved - eps;
    const double f_minus = f(x);
    x[i] = saved;
    const double fd = (f_plus - f_minus) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-4});
    worst = std::max(worst, std::fabs(a - fd) / denom);
  }
  return worst;
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<double> x, std::span<const double> analytic,
                  double eps) {
  std::vector<std::int64_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), 0);
  return grad_check_sampled(f, x, analytic, eps, coords);
}

}  // namespace bevfuse::num
