#pragma once

#include <string>
#include <vector>

#include "num/ops.hpp"
#include "num/params.hpp"

namespace bevfuse::num {

// Fully connected stack. Hidden layers use `act`, the last layer is linear.
struct MlpParams {
  std::vector<int> widths;  // at least {in, out}
  Act act = Act::Tanh;
  std::vector<ParamId> w, b;
};

// `zero_last` zero-initializes the final layer (weights and bias), useful
// for decoders that must start as the identity contribution.
MlpParams make_mlp(ParamRegistry& reg, const std::string& prefix,
                   std::vector<int> widths, Act act = Act::Tanh,
                   bool zero_last = false);

// Throws on non-finite intermediates.
void mlp_forward(const ParamRegistry& reg, const MlpParams& p, const double* x,
                 double* y);

// Accumulates d_x (nullable) and parameter gradients. Recomputes internals.
void mlp_backward(ParamRegistry& reg, const MlpParams& p, const double* x,
                  const double* d_y, double* d_x);

}  // namespace bevfuse::num
