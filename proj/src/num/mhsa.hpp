#pragma once

#include <string>

#include "num/params.hpp"

namespace bevfuse::num {

// Multi-head self-attention over a small set of feature vectors.
// Permutation-equivariant: permuting the inputs permutes the outputs.
struct MhsaParams {
  int channels = 0;
  int heads = 0;
  ParamId w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};

MhsaParams make_mhsa(ParamRegistry& reg, const std::string& prefix,
                     int channels, int heads);

// x and y are (n, channels) row-major. Throws when channels % heads != 0
// was violated at construction or n == 0.
void mhsa(const ParamRegistry& reg, const MhsaParams& p, const double* x,
          int n, double* y);

// Accumulates d_x and parameter gradients. Recomputes forward internals.
void mhsa_backward(ParamRegistry& reg, const MhsaParams& p, const double* x,
                   int n, const double* d_y, double* d_x);

}  // namespace bevfuse::num
