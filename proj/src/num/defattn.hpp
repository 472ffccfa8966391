#pragma once

#include <string>

#include "num/grid.hpp"
#include "num/params.hpp"

namespace bevfuse::num {

// Deformable attention: a query predicts, per head, a few sampling offsets
// around a reference point on a value grid plus softmax-normalized weights
// over those samples. Weighted per-head value projections are concatenated
// and passed through an output projection.
struct DefAttnParams {
  int channels = 0;
  int heads = 0;
  int points = 0;
  ParamId w_off, b_off;  // (2*heads*points, channels), zero-initialized
  ParamId w_att, b_att;  // (heads*points, channels)
  ParamId w_val, b_val;  // (channels, channels) split row-wise across heads
  ParamId w_out, b_out;  // (channels, channels)
};

// Registers parameters under `prefix + "."`. Offset projections start at
// zero so an untrained module samples exactly at the reference point.
DefAttnParams make_def_attn(ParamRegistry& reg, const std::string& prefix,
                            int channels, int heads, int points);

// out[channels] = DefAttn(query, (gx, gy), value). The reference point is in
// value-grid coordinates. Throws on channel mismatch.
void def_attn(const ParamRegistry& reg, const DefAttnParams& p,
              const double* query, double gx, double gy, GridView value,
              double* out);

// Accumulates d_query (length channels), optionally d_value (grid-shaped),
// optionally d_ref (gradient w.r.t. the reference point, length 2), and
// parameter gradients in the registry. Recomputes forward internals.
void def_attn_backward(ParamRegistry& reg, const DefAttnParams& p,
                       const double* query, double gx, double gy,
                       GridView value, const double* d_out, double* d_query,
                       GridMut* d_value, double* d_ref = nullptr);

}  // namespace bevfuse::num
