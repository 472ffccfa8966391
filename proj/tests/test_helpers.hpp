#pragma once

#include <functional>
#include <span>
#include <vector>

#include "num/gradcheck.hpp"
#include "num/params.hpp"
#include "num/rng.hpp"

namespace bevfuse::test {

// Randomizes every registry entry, including the zero-initialized ones, so
// gradient checks exercise generic parameter points.
inline void randomize_params(num::ParamRegistry& reg, num::Rng& rng,
                             double scale = 0.5) {
  for (double& v : reg.values()) v = rng.uniform(-scale, scale);
}

// Central-difference check of the registry gradient of `loss` over a sample
// of arena coordinates. `loss` must be a pure function of the arena values;
// the caller runs forward+backward once to fill grads before this call.
inline double check_registry_grads(num::ParamRegistry& reg,
                                   const std::function<double()>& loss,
                                   std::span<const std::int64_t> coords,
                                   double eps = 1e-5) {
  std::vector<double> analytic(reg.grads().begin(), reg.grads().end());
  auto values = reg.values();
  const auto f = [&](std::span<const double>) { return loss(); };
  return num::grad_check_sampled(f, values, analytic, eps, coords);
}

inline std::vector<std::int64_t> sample_coords(num::Rng& rng, std::int64_t n,
                                               int count) {
  std::vector<std::int64_t> out;
  for (int i = 0; i < count; ++i)
    out.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n))));
  return out;
}

// Every coordinate of every entry whose path starts with the prefix.
inline std::vector<std::int64_t> coords_for_prefix(const num::ParamRegistry& reg,
                                                   const std::string& prefix) {
  std::vector<std::int64_t> out;
  for (const auto& e : reg.entries()) {
    if (e.path.rfind(prefix, 0) != 0) continue;
    for (std::int64_t i = 0; i < e.size; ++i) out.push_back(e.offset + i);
  }
  return out;
}

}  // namespace bevfuse::test
