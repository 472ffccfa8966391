#include "num/defattn.hpp"

#include <cstring>
#include <stdexcept>
#include <vector>

#include "num/ops.hpp"

namespace bevfuse::num {

DefAttnParams make_def_attn(ParamRegistry& reg, const std::string& prefix,
                            int channels, int heads, int points) {
  if (channels <= 0 || heads <= 0 || points <= 0)
    throw std::invalid_argument("def_attn: bad dims for " + prefix);
  if (channels % heads != 0)
    throw std::invalid_argument("def_attn: channels not divisible by heads for " + prefix);
  DefAttnParams p;
  p.channels = channels;
  p.heads = heads;
  p.points = points;
  const int hp = heads * points;
  p.w_off = reg.add(prefix + ".w_off", {2 * hp, channels}, Init::Zero);
  p.b_off = reg.add(prefix + ".b_off", {2 * hp}, Init::Zero);
  p.w_att = reg.add(prefix + ".w_att", {hp, channels});
  p.b_att = reg.add(prefix + ".b_att", {hp}, Init::Zero);
  p.w_val = reg.add(prefix + ".w_val", {channels, channels});
  p.b_val = reg.add(prefix + ".b_val", {channels}, Init::Zero);
  p.w_out = reg.add(prefix + ".w_out", {channels, channels});
  p.b_out = reg.add(prefix + ".b_out", {channels}, Init::Zero);
  return p;
}

namespace {

struct Scratch {
  std::vector<double> off, logit, attn, samples, cat, tmp;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

}  // namespace

void def_attn(const ParamRegistry& reg, const DefAttnParams& p,
              const double* query, double gx, double gy, GridView value,
              double* out) {
  const int c = p.channels, h = p.heads, pt = p.points;
  if (value.c != c)
    throw std::invalid_argument("def_attn: value grid channel mismatch");
  const int hp = h * pt, d = c / h;
  Scratch& s = scratch();
  s.off.resize(2 * hp);
  s.logit.resize(hp);
  s.attn.resize(hp);
  s.samples.resize(static_cast<std::size_t>(hp) * c);
  s.cat.assign(c, 0.0);

  linear(reg.val(p.w_off), reg.val(p.b_off), 2 * hp, c, query, s.off.data());
  linear(reg.val(p.w_att), reg.val(p.b_att), hp, c, query, s.logit.data());
  std::copy(s.logit.begin(), s.logit.end(), s.attn.begin());
  for (int i = 0; i < h; ++i)
    softmax_inplace({s.attn.data() + i * pt, static_cast<std::size_t>(pt)});

  const double* w_val = reg.val(p.w_val);
  const double* b_val = reg.val(p.b_val);
  for (int i = 0; i < h; ++i) {
    double* head_out = s.cat.data() + i * d;
    for (int k = 0; k < pt; ++k) {
      const int idx = i * pt + k;
      double* smp = s.samples.data() + static_cast<std::size_t>(idx) * c;
      bilinear_sample(value, gx + s.off[2 * idx], gy + s.off[2 * idx + 1], smp);
      const double a = s.attn[idx];
      for (int r = 0; r < d; ++r) {
        const double* row = w_val + static_cast<std::size_t>(i * d + r) * c;
        double acc = b_val[i * d + r];
        for (int ch = 0; ch < c; ++ch) acc += row[ch] * smp[ch];
        head_out[r] += a * acc;
      }
    }
  }
  linear(reg.val(p.w_out), reg.val(p.b_out), c, c, s.cat.data(), out);
}

void def_attn_backward(ParamRegistry& reg, const DefAttnParams& p,
                       const double* query, double gx, double gy,
                       GridView value, const double* d_out, double* d_query,
                       GridMut* d_value, double* d_ref) {
  const int c = p.channels, h = p.heads, pt = p.points;
  if (value.c != c)
    throw std::invalid_argument("def_attn: value grid channel mismatch");
  const int hp = h * pt, d = c / h;

  // Recompute forward internals.
  std::vector<double> off(2 * hp), logit(hp), attn(hp);
  std::vector<double> samples(static_cast<std::size_t>(hp) * c);
  std::vector<double> u(static_cast<std::size_t>(hp) * d);
  std::vector<double> cat(c, 0.0);
  linear(reg.val(p.w_off), reg.val(p.b_off), 2 * hp, c, query, off.data());
  linear(reg.val(p.w_att), reg.val(p.b_att), hp, c, query, logit.data());
  attn = logit;
  for (int i = 0; i < h; ++i)
    softmax_inplace({attn.data() + i * pt, static_cast<std::size_t>(pt)});
  const double* w_val = reg.val(p.w_val);
  const double* b_val = reg.val(p.b_val);
  for (int i = 0; i < h; ++i) {
    double* head_out = cat.data() + i * d;
    for (int k = 0; k < pt; ++k) {
      const int idx = i * pt + k;
      double* smp = samples.data() + static_cast<std::size_t>(idx) * c;
      bilinear_sample(value, gx + off[2 * idx], gy + off[2 * idx + 1], smp);
      double* u_hk = u.data() + static_cast<std::size_t>(idx) * d;
      for (int r = 0; r < d; ++r) {
        const double* row = w_val + static_cast<std::size_t>(i * d + r) * c;
        double acc = b_val[i * d + r];
        for (int ch = 0; ch < c; ++ch) acc += row[ch] * smp[ch];
        u_hk[r] = acc;
        head_out[r] += attn[idx] * acc;
      }
    }
  }

  // Output projection.
  std::vector<double> d_cat(c, 0.0);
  linear_backward(reg.val(p.w_out), c, c, cat.data(), d_out, d_cat.data(),
                  reg.grad(p.w_out), reg.grad(p.b_out));

  // Heads, samples, offsets.
  std::vector<double> d_attn(hp, 0.0), d_off(2 * hp, 0.0), d_logit(hp, 0.0);
  std::vector<double> d_s(c), d_u(d);
  double* g_w_val = reg.grad(p.w_val);
  double* g_b_val = reg.grad(p.b_val);
  for (int i = 0; i < h; ++i) {
    const double* d_head = d_cat.data() + i * d;
    for (int k = 0; k < pt; ++k) {
      const int idx = i * pt + k;
      const double* u_hk = u.data() + static_cast<std::size_t>(idx) * d;
      const double* smp = samples.data() + static_cast<std::size_t>(idx) * c;
      double da = 0.0;
      for (int r = 0; r < d; ++r) da += d_head[r] * u_hk[r];
      d_attn[idx] = da;
      const double a = attn[idx];
      for (int r = 0; r < d; ++r) d_u[r] = a * d_head[r];
      std::fill(d_s.begin(), d_s.end(), 0.0);
      for (int r = 0; r < d; ++r) {
        const double* row = w_val + static_cast<std::size_t>(i * d + r) * c;
        double* g_row = g_w_val + static_cast<std::size_t>(i * d + r) * c;
        const double g = d_u[r];
        for (int ch = 0; ch < c; ++ch) {
          d_s[ch] += row[ch] * g;
          g_row[ch] += g * smp[ch];
        }
        g_b_val[i * d + r] += g;
      }
      const double px = gx + off[2 * idx], py = gy + off[2 * idx + 1];
      if (d_value) bilinear_backward_grid(*d_value, px, py, d_s.data());
      double dpx = 0.0, dpy = 0.0;
      bilinear_backward_point(value, px, py, d_s.data(), dpx, dpy);
      d_off[2 * idx] += dpx;
      d_off[2 * idx + 1] += dpy;
      if (d_ref) {
        d_ref[0] += dpx;
        d_ref[1] += dpy;
      }
    }
    softmax_backward({attn.data() + i * pt, static_cast<std::size_t>(pt)},
                     {d_attn.data() + i * pt, static_cast<std::size_t>(pt)},
                     {d_logit.data() + i * pt, static_cast<std::size_t>(pt)});
  }

  linear_backward(reg.val(p.w_off), 2 * hp, c, query, d_off.data(), d_query,
                  reg.grad(p.w_off), reg.grad(p.b_off));
  linear_backward(reg.val(p.w_att), hp, c, query, d_logit.data(), d_query,
                  reg.grad(p.w_att), reg.grad(p.b_att));
}

}  // namespace bevfuse::num
