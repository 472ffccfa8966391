#include "num/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "num/tensor.hpp"

namespace bevfuse::num {

std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  softmax_inplace(out);
  return out;
}

void softmax_inplace(std::span<double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  require_finite(v, "softmax");
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

void softmax_backward(std::span<const double> a, std::span<const double> d_a,
                      std::span<double> d_logits) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * d_a[i];
  for (std::size_t i = 0; i < a.size(); ++i) d_logits[i] = a[i] * (d_a[i] - dot);
}

void linear(const double* w, const double* b, int out, int in, const double* x,
            double* y) {
  for (int o = 0; o < out; ++o) {
    const double* row = w + static_cast<std::size_t>(o) * in;
    double acc = b ? b[o] : 0.0;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

void linear_backward(const double* w, int out, int in, const double* x,
                     const double* d_y, double* d_x, double* d_w, double* d_b) {
  if (d_x) {
    for (int o = 0; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      const double g = d_y[o];
      for (int i = 0; i < in; ++i) d_x[i] += row[i] * g;
    }
  }
  if (d_w) {
    for (int o = 0; o < out; ++o) {
      double* row = d_w + static_cast<std::size_t>(o) * in;
      const double g = d_y[o];
      for (int i = 0; i < in; ++i) row[i] += g * x[i];
    }
  }
  if (d_b) {
    for (int o = 0; o < out; ++o) d_b[o] += d_y[o];
  }
}

double act_forward(Act a, double x) {
  switch (a) {
    case Act::Identity: return x;
    case Act::Tanh: return std::tanh(x);
    case Act::Relu: return x > 0.0 ? x : 0.0;
  }
  return x;
}

double act_derivative(Act a, double x) {
  switch (a) {
    case Act::Identity: return 1.0;
    case Act::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Act::Relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

void layer_norm(const double* gamma, const double* beta, int n, const double* x,
                double* y, LayerNormCache* cache) {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    var += d * d;
  }
  var /= n;
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  for (int i = 0; i < n; ++i) y[i] = gamma[i] * (x[i] - mean) * inv_std + beta[i];
  if (cache) {
    cache->mean = mean;
    cache->inv_std = inv_std;
  }
}

void layer_norm_backward(const double* gamma, int n, const double* x,
                         const LayerNormCache& cache, const double* d_y,
                         double* d_x, double* d_gamma, double* d_beta) {
  const double mean = cache.mean;
  const double inv_std = cache.inv_std;
  double sum_dxhat = 0.0;
  double sum_dxhat_xhat = 0.0;
  for (int i = 0; i < n; ++i) {
    const double xhat = (x[i] - mean) * inv_std;
    const double dxhat = d_y[i] * gamma[i];
    sum_dxhat += dxhat;
    sum_dxhat_xhat += dxhat * xhat;
    if (d_gamma) d_gamma[i] += d_y[i] * xhat;
    if (d_beta) d_beta[i] += d_y[i];
  }
  if (d_x) {
    for (int i = 0; i < n; ++i) {
      const double xhat = (x[i] - mean) * inv_std;
      const double dxhat = d_y[i] * gamma[i];
      d_x[i] += inv_std * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
    }
  }
}

}  // namespace bevfuse::num
