#pragma once

#include <span>
#include <vector>

namespace bevfuse::num {

// Numerically stable softmax. Throws std::invalid_argument on empty or
// non-finite input. Output sums to 1.
std::vector<double> softmax(std::span<const double> v);
void softmax_inplace(std::span<double> v);

// d_logits = a * (d_a - <d_a, a>) where a = softmax(logits).
void softmax_backward(std::span<const double> a, std::span<const double> d_a,
                      std::span<double> d_logits);

// y = W x + b. W is (out x in) row-major, b has length out.
void linear(const double* w, const double* b, int out, int in,
            const double* x, double* y);

// Accumulates d_x += W^T d_y, d_w += d_y x^T, d_b += d_y.
// Any gradient pointer may be null to skip that accumulation.
void linear_backward(const double* w, int out, int in, const double* x,
                     const double* d_y, double* d_x, double* d_w, double* d_b);

enum class Act { Identity, Tanh, Relu };

double act_forward(Act a, double x);
double act_derivative(Act a, double x);  // derivative at pre-activation x

// Layer normalization over a single feature vector.
// y = gamma * (x - mean) / sqrt(var + eps) + beta.
struct LayerNormCache {
  double mean = 0.0;
  double inv_std = 0.0;
};
void layer_norm(const double* gamma, const double* beta, int n, const double* x,
                double* y, LayerNormCache* cache);
// Accumulates d_x, d_gamma, d_beta given the forward input x and cache.
void layer_norm_backward(const double* gamma, int n, const double* x,
                         const LayerNormCache& cache, const double* d_y,
                         double* d_x, double* d_gamma, double* d_beta);

inline constexpr double kLayerNormEps = 1e-6;

}  // namespace bevfuse::num
