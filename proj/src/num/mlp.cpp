#include "num/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace bevfuse::num {

MlpParams make_mlp(ParamRegistry& reg, const std::string& prefix,
                   std::vector<int> widths, Act act, bool zero_last) {
  if (widths.size() < 2) throw std::invalid_argument("mlp: need at least in/out widths");
  MlpParams p;
  p.widths = std::move(widths);
  p.act = act;
  const std::size_t layers = p.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const bool last = l + 1 == layers;
    const Init init = (last && zero_last) ? Init::Zero : Init::UniformFanIn;
    p.w.push_back(reg.add(prefix + ".w" + std::to_string(l),
                          {p.widths[l + 1], p.widths[l]}, init));
    p.b.push_back(reg.add(prefix + ".b" + std::to_string(l), {p.widths[l + 1]},
                          Init::Zero));
  }
  return p;
}

namespace {

// Runs the stack, keeping pre-activations per layer. act_out holds the
// activated outputs (inputs to the next layer).
void run(const ParamRegistry& reg, const MlpParams& p, const double* x,
         std::vector<std::vector<double>>& pre,
         std::vector<std::vector<double>>& act_out) {
  const std::size_t layers = p.w.size();
  pre.resize(layers);
  act_out.resize(layers);
  const double* cur = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = p.widths[l], out = p.widths[l + 1];
    pre[l].resize(out);
    linear(reg.val(p.w[l]), reg.val(p.b[l]), out, in, cur, pre[l].data());
    for (double v : pre[l])
      if (!std::isfinite(v))
        throw std::runtime_error("mlp: non-finite intermediate");
    act_out[l].resize(out);
    const bool last = l + 1 == layers;
    for (int i = 0; i < out; ++i)
      act_out[l][i] = last ? pre[l][i] : act_forward(p.act, pre[l][i]);
    cur = act_out[l].data();
  }
}

}  // namespace

void mlp_forward(const ParamRegistry& reg, const MlpParams& p, const double* x,
                 double* y) {
  std::vector<std::vector<double>> pre, act;
  run(reg, p, x, pre, act);
  std::copy(act.back().begin(), act.back().end(), y);
}

void mlp_backward(ParamRegistry& reg, const MlpParams& p, const double* x,
                  const double* d_y, double* d_x) {
  std::vector<std::vector<double>> pre, act;
  run(reg, p, x, pre, act);
  const std::size_t layers = p.w.size();
  std::vector<double> d_cur(act.back().size());
  std::copy(d_y, d_y + d_cur.size(), d_cur.begin());
  for (std::size_t li = layers; li-- > 0;) {
    const int in = p.widths[li], out = p.widths[li + 1];
    const bool last = li + 1 == layers;
    if (!last)
      for (int i = 0; i < out; ++i)
        d_cur[i] *= act_derivative(p.act, pre[li][i]);
    const double* layer_in = li == 0 ? x : act[li - 1].data();
    std::vector<double> d_in(in, 0.0);
    linear_backward(reg.val(p.w[li]), out, in, layer_in, d_cur.data(),
                    d_in.data(), reg.grad(p.w[li]), reg.grad(p.b[li]));
    d_cur = std::move(d_in);
  }
  if (d_x)
    for (std::size_t i = 0; i < d_cur.size(); ++i) d_x[i] += d_cur[i];
}

}  // namespace bevfuse::num
