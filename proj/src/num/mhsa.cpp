#include "num/mhsa.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "num/ops.hpp"

namespace bevfuse::num {

MhsaParams make_mhsa(ParamRegistry& reg, const std::string& prefix,
                     int channels, int heads) {
  if (channels % heads != 0)
    throw std::invalid_argument("mhsa: channels not divisible by heads for " + prefix);
  MhsaParams p;
  p.channels = channels;
  p.heads = heads;
  p.w_q = reg.add(prefix + ".w_q", {channels, channels});
  p.b_q = reg.add(prefix + ".b_q", {channels}, Init::Zero);
  p.w_k = reg.add(prefix + ".w_k", {channels, channels});
  p.b_k = reg.add(prefix + ".b_k", {channels}, Init::Zero);
  p.w_v = reg.add(prefix + ".w_v", {channels, channels});
  p.b_v = reg.add(prefix + ".b_v", {channels}, Init::Zero);
  p.w_o = reg.add(prefix + ".w_o", {channels, channels});
  p.b_o = reg.add(prefix + ".b_o", {channels}, Init::Zero);
  return p;
}

namespace {

struct Proj {
  std::vector<double> q, k, v;  // each (n, c)
};

void project(const ParamRegistry& reg, const MhsaParams& p, const double* x,
             int n, Proj& pr) {
  const int c = p.channels;
  pr.q.resize(static_cast<std::size_t>(n) * c);
  pr.k.resize(static_cast<std::size_t>(n) * c);
  pr.v.resize(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * c;
    linear(reg.val(p.w_q), reg.val(p.b_q), c, c, xi, pr.q.data() + static_cast<std::size_t>(i) * c);
    linear(reg.val(p.w_k), reg.val(p.b_k), c, c, xi, pr.k.data() + static_cast<std::size_t>(i) * c);
    linear(reg.val(p.w_v), reg.val(p.b_v), c, c, xi, pr.v.data() + static_cast<std::size_t>(i) * c);
  }
}

// Attention weights for all heads: alpha[(h*n + i)*n + j].
void attention_weights(const Proj& pr, int n, int c, int heads,
                       std::vector<double>& alpha) {
  const int d = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  alpha.resize(static_cast<std::size_t>(heads) * n * n);
  std::vector<double> row(n);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      const double* qi = pr.q.data() + static_cast<std::size_t>(i) * c + h * d;
      for (int j = 0; j < n; ++j) {
        const double* kj = pr.k.data() + static_cast<std::size_t>(j) * c + h * d;
        double dot = 0.0;
        for (int r = 0; r < d; ++r) dot += qi[r] * kj[r];
        row[j] = dot * scale;
      }
      softmax_inplace(row);
      std::copy(row.begin(), row.end(),
                alpha.begin() + (static_cast<std::size_t>(h) * n + i) * n);
    }
  }
}

}  // namespace

void mhsa(const ParamRegistry& reg, const MhsaParams& p, const double* x,
          int n, double* y) {
  if (n <= 0) throw std::invalid_argument("mhsa: empty input set");
  const int c = p.channels, heads = p.heads, d = c / heads;
  Proj pr;
  project(reg, p, x, n, pr);
  std::vector<double> alpha;
  attention_weights(pr, n, c, heads, alpha);
  std::vector<double> o(static_cast<std::size_t>(n) * c, 0.0);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      double* oi = o.data() + static_cast<std::size_t>(i) * c + h * d;
      const double* arow = alpha.data() + (static_cast<std::size_t>(h) * n + i) * n;
      for (int j = 0; j < n; ++j) {
        const double* vj = pr.v.data() + static_cast<std::size_t>(j) * c + h * d;
        const double a = arow[j];
        for (int r = 0; r < d; ++r) oi[r] += a * vj[r];
      }
    }
  }
  for (int i = 0; i < n; ++i)
    linear(reg.val(p.w_o), reg.val(p.b_o), c, c,
           o.data() + static_cast<std::size_t>(i) * c,
           y + static_cast<std::size_t>(i) * c);
}

void mhsa_backward(ParamRegistry& reg, const MhsaParams& p, const double* x,
                   int n, const double* d_y, double* d_x) {
  if (n <= 0) throw std::invalid_argument("mhsa: empty input set");
  const int c = p.channels, heads = p.heads, d = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Proj pr;
  project(reg, p, x, n, pr);
  std::vector<double> alpha;
  attention_weights(pr, n, c, heads, alpha);
  std::vector<double> o(static_cast<std::size_t>(n) * c, 0.0);
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i) {
      double* oi = o.data() + static_cast<std::size_t>(i) * c + h * d;
      const double* arow = alpha.data() + (static_cast<std::size_t>(h) * n + i) * n;
      for (int j = 0; j < n; ++j) {
        const double* vj = pr.v.data() + static_cast<std::size_t>(j) * c + h * d;
        for (int r = 0; r < d; ++r) oi[r] += arow[j] * vj[r];
      }
    }

  std::vector<double> d_o(static_cast<std::size_t>(n) * c, 0.0);
  for (int i = 0; i < n; ++i)
    linear_backward(reg.val(p.w_o), c, c, o.data() + static_cast<std::size_t>(i) * c,
                    d_y + static_cast<std::size_t>(i) * c,
                    d_o.data() + static_cast<std::size_t>(i) * c,
                    reg.grad(p.w_o), reg.grad(p.b_o));

  std::vector<double> d_q(static_cast<std::size_t>(n) * c, 0.0);
  std::vector<double> d_k(static_cast<std::size_t>(n) * c, 0.0);
  std::vector<double> d_v(static_cast<std::size_t>(n) * c, 0.0);
  std::vector<double> d_arow(n), d_srow(n);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      const double* doi = d_o.data() + static_cast<std::size_t>(i) * c + h * d;
      const double* arow = alpha.data() + (static_cast<std::size_t>(h) * n + i) * n;
      for (int j = 0; j < n; ++j) {
        const double* vj = pr.v.data() + static_cast<std::size_t>(j) * c + h * d;
        double* dvj = d_v.data() + static_cast<std::size_t>(j) * c + h * d;
        double da = 0.0;
        for (int r = 0; r < d; ++r) {
          da += doi[r] * vj[r];
          dvj[r] += arow[j] * doi[r];
        }
        d_arow[j] = da;
      }
      softmax_backward({arow, static_cast<std::size_t>(n)},
                       {d_arow.data(), static_cast<std::size_t>(n)},
                       {d_srow.data(), static_cast<std::size_t>(n)});
      double* dqi = d_q.data() + static_cast<std::size_t>(i) * c + h * d;
      const double* qi = pr.q.data() + static_cast<std::size_t>(i) * c + h * d;
      for (int j = 0; j < n; ++j) {
        const double* kj = pr.k.data() + static_cast<std::size_t>(j) * c + h * d;
        double* dkj = d_k.data() + static_cast<std::size_t>(j) * c + h * d;
        const double ds = d_srow[j] * scale;
        for (int r = 0; r < d; ++r) {
          dqi[r] += ds * kj[r];
          dkj[r] += ds * qi[r];
        }
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * c;
    double* dxi = d_x + static_cast<std::size_t>(i) * c;
    linear_backward(reg.val(p.w_q), c, c, xi, d_q.data() + static_cast<std::size_t>(i) * c,
                    dxi, reg.grad(p.w_q), reg.grad(p.b_q));
    linear_backward(reg.val(p.w_k), c, c, xi, d_k.data() + static_cast<std::size_t>(i) * c,
                    dxi, reg.grad(p.w_k), reg.grad(p.b_k));
    linear_backward(reg.val(p.w_v), c, c, xi, d_v.data() + static_cast<std::size_t>(i) * c,
                    dxi, reg.grad(p.w_v), reg.grad(p.b_v));
  }
}

}  // namespace bevfuse::num
