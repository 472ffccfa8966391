#include "encoder/encoder.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "num/ops.hpp"

namespace bevfuse::enc {

using num::GridMut;
using num::GridView;
using scene::BevGrid;
using scene::Pose2;
using scene::Vec2;

SublayerOrder order_from_name(const std::string& s) {
  if (s == "tsa_pca_ica_ffn") return SublayerOrder::TsaPcaIcaFfn;
  if (s == "pca_ica_tsa_ffn") return SublayerOrder::PcaIcaTsaFfn;
  throw std::invalid_argument("encoder: unknown sublayer order '" + s + "'");
}

const char* order_name(SublayerOrder o) {
  return o == SublayerOrder::TsaPcaIcaFfn ? "tsa_pca_ica_ffn" : "pca_ica_tsa_ffn";
}

namespace {

enum Sub { kTsa = 0, kPca = 1, kIca = 2, kFfn = 3 };

std::array<int, 4> sublayer_order(SublayerOrder o) {
  if (o == SublayerOrder::TsaPcaIcaFfn) return {kTsa, kPca, kIca, kFfn};
  return {kPca, kIca, kTsa, kFfn};
}

}  // namespace

EncoderParams make_encoder(num::ParamRegistry& reg, const EncoderConfig& cfg,
                           const std::string& prefix) {
  if (cfg.strict_layers && cfg.layers != 6)
    throw std::invalid_argument("encoder: strict mode requires 6 layers");
  if (cfg.layers < 1) throw std::invalid_argument("encoder: need at least one layer");
  if (cfg.n_ref < 1) throw std::invalid_argument("encoder: n_ref must be >= 1");
  EncoderParams ep;
  ep.cfg = cfg;
  ep.bev_query = reg.add(prefix + ".bev_query", {cfg.cells(), cfg.channels},
                         num::Init::UniformFanIn, cfg.channels);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    EncoderLayerParams layer;
    layer.tsa_curr = num::make_def_attn(reg, lp + ".tsa_curr", cfg.channels,
                                        cfg.heads, cfg.points);
    layer.tsa_hist = num::make_def_attn(reg, lp + ".tsa_hist", cfg.channels,
                                        cfg.heads, cfg.points);
    layer.pca = num::make_def_attn(reg, lp + ".pca", cfg.channels, cfg.heads,
                                   cfg.points);
    layer.ica = num::make_def_attn(reg, lp + ".ica", cfg.channels, cfg.heads,
                                   cfg.points);
    layer.ffn = num::make_mlp(reg, lp + ".ffn",
                              {cfg.channels, cfg.ffn_hidden, cfg.channels},
                              num::Act::Tanh);
    for (int k = 0; k < 4; ++k) {
      layer.ln_gamma[k] = reg.add(lp + ".ln" + std::to_string(k) + ".gamma",
                                  {cfg.channels}, num::Init::One);
      layer.ln_beta[k] = reg.add(lp + ".ln" + std::to_string(k) + ".beta",
                                 {cfg.channels}, num::Init::Zero);
    }
    ep.layers.push_back(std::move(layer));
  }
  return ep;
}

std::vector<double> pillar_heights(const EncoderConfig& cfg) {
  std::vector<double> z(static_cast<std::size_t>(cfg.n_ref));
  if (cfg.n_ref == 1) {
    z[0] = 0.5 * (cfg.z_min + cfg.z_max);
  } else {
    for (int j = 0; j < cfg.n_ref; ++j)
      z[static_cast<std::size_t>(j)] =
          cfg.z_min + (cfg.z_max - cfg.z_min) * j / (cfg.n_ref - 1);
  }
  return z;
}

FrameInputs make_frame_inputs(const scene::Scene& s, int t) {
  FrameInputs in;
  in.lidar = render_lidar_bev(s, t);
  auto frames = render_camera_features(s, t);
  for (auto& f : frames) {
    in.cams.push_back(f.cam_ego);
    in.cam_feats.push_back(std::move(f.features));
  }
  return in;
}

BevGrid align_history(const BevGrid& prev, const Pose2& motion) {
  BevGrid out(prev.nx, prev.ny, prev.c, prev.extent_m);
  if (motion.x == 0.0 && motion.y == 0.0 && motion.yaw == 0.0) {
    out.data = prev.data;  // identity warp is bit-exact
    return out;
  }
  GridMut dst = out.mut();
  for (int ix = 0; ix < prev.nx; ++ix) {
    for (int iy = 0; iy < prev.ny; ++iy) {
      const Vec2 y = prev.cell_center(ix, iy);          // previous ego frame
      const Vec2 x = motion.apply_inverse(y);           // current ego frame
      const Vec2 gp = out.to_grid(x);
      const num::BilinearTap t = num::bilinear_tap(out.nx, out.ny, gp.x, gp.y);
      if (!t.valid) continue;
      const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
      const double w01 = (1.0 - t.fx) * t.fy;
      const double w10 = t.fx * (1.0 - t.fy);
      const double w11 = t.fx * t.fy;
      const double* src = prev.cell(ix, iy);
      double* d00 = dst.cell(t.i0, t.j0);
      double* d01 = dst.cell(t.i0, t.j1);
      double* d10 = dst.cell(t.i1, t.j0);
      double* d11 = dst.cell(t.i1, t.j1);
      for (int ch = 0; ch < prev.c; ++ch) {
        const double v = src[ch];
        d00[ch] += w00 * v;
        d01[ch] += w01 * v;
        d10[ch] += w10 * v;
        d11[ch] += w11 * v;
      }
    }
  }
  return out;
}

void align_history_backward(const BevGrid& d_aligned, const Pose2& motion,
                            BevGrid& d_prev) {
  if (motion.x == 0.0 && motion.y == 0.0 && motion.yaw == 0.0) {
    for (std::size_t i = 0; i < d_prev.data.size(); ++i)
      d_prev.data[i] += d_aligned.data[i];
    return;
  }
  for (int ix = 0; ix < d_prev.nx; ++ix) {
    for (int iy = 0; iy < d_prev.ny; ++iy) {
      const Vec2 y = d_prev.cell_center(ix, iy);
      const Vec2 x = motion.apply_inverse(y);
      const Vec2 gp = d_aligned.to_grid(x);
      const num::BilinearTap t =
          num::bilinear_tap(d_aligned.nx, d_aligned.ny, gp.x, gp.y);
      if (!t.valid) continue;
      const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
      const double w01 = (1.0 - t.fx) * t.fy;
      const double w10 = t.fx * (1.0 - t.fy);
      const double w11 = t.fx * t.fy;
      const double* s00 = d_aligned.cell(t.i0, t.j0);
      const double* s01 = d_aligned.cell(t.i0, t.j1);
      const double* s10 = d_aligned.cell(t.i1, t.j0);
      const double* s11 = d_aligned.cell(t.i1, t.j1);
      double* dst = d_prev.cell(ix, iy);
      for (int ch = 0; ch < d_prev.c; ++ch)
        dst[ch] += w00 * s00[ch] + w01 * s01[ch] + w10 * s10[ch] + w11 * s11[ch];
    }
  }
}

namespace {

struct Geometry {
  std::vector<std::vector<std::array<double, 3>>> hits;
  std::vector<int> v_hit;
  std::vector<Vec2> pca_ref;
};

Geometry build_geometry(const EncoderConfig& cfg, const FrameInputs& in) {
  if (in.lidar.extent_m != cfg.extent_m)
    throw std::invalid_argument("encoder: LiDAR extent mismatch, no scale map defined");
  if (in.lidar.c != cfg.channels)
    throw std::invalid_argument("encoder: LiDAR channel mismatch");
  if (in.cam_feats.size() != in.cams.size())
    throw std::invalid_argument("encoder: camera feature/model count mismatch");
  for (const auto& f : in.cam_feats)
    if (f.c != cfg.channels)
      throw std::invalid_argument("encoder: camera channel mismatch");

  Geometry geo;
  const int cells = cfg.cells();
  geo.hits.resize(static_cast<std::size_t>(cells));
  geo.v_hit.assign(static_cast<std::size_t>(cells), 0);
  geo.pca_ref.resize(static_cast<std::size_t>(cells));
  const auto heights = pillar_heights(cfg);
  BevGrid ref(cfg.bev_nx, cfg.bev_ny, 1, cfg.extent_m);
  for (int ix = 0; ix < cfg.bev_nx; ++ix) {
    for (int iy = 0; iy < cfg.bev_ny; ++iy) {
      const int cell = ix * cfg.bev_ny + iy;
      const Vec2 center = ref.cell_center(ix, iy);
      geo.pca_ref[cell] = in.lidar.to_grid(center);
      auto& hits = geo.hits[static_cast<std::size_t>(cell)];
      for (std::size_t cam = 0; cam < in.cams.size(); ++cam) {
        bool cam_hit = false;
        for (double z : heights) {
          const auto px = scene::project_to_camera({center.x, center.y, z},
                                                   in.cams[cam]);
          if (!px) continue;
          cam_hit = true;
          hits.push_back({static_cast<double>(cam), px->x, px->y});
        }
        if (cam_hit) ++geo.v_hit[static_cast<std::size_t>(cell)];
      }
    }
  }
  return geo;
}

// Row-wise pre-norm of X; returns LN caches for backward.
void normalize_rows(const num::ParamRegistry& reg, num::ParamId gamma,
                    num::ParamId beta, const std::vector<double>& x, int cells,
                    int c, std::vector<double>& y,
                    std::vector<num::LayerNormCache>* caches) {
  y.resize(x.size());
  if (caches) caches->resize(static_cast<std::size_t>(cells));
  const double* g = reg.val(gamma);
  const double* b = reg.val(beta);
  for (int i = 0; i < cells; ++i)
    num::layer_norm(g, b, c, x.data() + static_cast<std::size_t>(i) * c,
                    y.data() + static_cast<std::size_t>(i) * c,
                    caches ? &(*caches)[static_cast<std::size_t>(i)] : nullptr);
}

}  // namespace

scene::BevGrid encode(const num::ParamRegistry& reg, const EncoderParams& ep,
                      const FrameInputs& in, const scene::BevGrid* prev_bev,
                      const Pose2& motion, EncodeCache* cache) {
  const EncoderConfig& cfg = ep.cfg;
  const int cells = cfg.cells(), c = cfg.channels;
  Geometry geo = build_geometry(cfg, in);

  BevGrid hist;
  const bool has_prev = prev_bev != nullptr;
  if (has_prev) {
    if (prev_bev->nx != cfg.bev_nx || prev_bev->ny != cfg.bev_ny ||
        prev_bev->c != c || prev_bev->extent_m != cfg.extent_m)
      throw std::invalid_argument("encoder: previous BEV grid dims mismatch");
    hist = align_history(*prev_bev, motion);
  }

  std::vector<double> x(reg.val(ep.bev_query),
                        reg.val(ep.bev_query) + static_cast<std::size_t>(cells) * c);
  std::vector<double> normed, sub_out(static_cast<std::size_t>(cells) * c);
  std::vector<double> tmp(static_cast<std::size_t>(c));

  if (cache) {
    cache->has_prev = has_prev;
    cache->hist = hist;
    cache->hits = geo.hits;
    cache->v_hit = geo.v_hit;
    cache->pca_ref = geo.pca_ref;
    cache->sub_inputs.assign(static_cast<std::size_t>(cfg.layers), {});
  }

  const auto order = sublayer_order(cfg.order);
  for (int l = 0; l < cfg.layers; ++l) {
    const EncoderLayerParams& lp = ep.layers[static_cast<std::size_t>(l)];
    for (int slot = 0; slot < 4; ++slot) {
      const int sub = order[static_cast<std::size_t>(slot)];
      if (cache)
        cache->sub_inputs[static_cast<std::size_t>(l)][static_cast<std::size_t>(slot)] = x;
      normalize_rows(reg, lp.ln_gamma[slot], lp.ln_beta[slot], x, cells, c,
                     normed, nullptr);
      const GridView normed_grid{normed.data(), cfg.bev_nx, cfg.bev_ny, c};
      const GridView hist_grid =
          has_prev ? hist.view() : normed_grid;  // first-frame bootstrap
      std::fill(sub_out.begin(), sub_out.end(), 0.0);

      for (int ix = 0; ix < cfg.bev_nx; ++ix) {
        for (int iy = 0; iy < cfg.bev_ny; ++iy) {
          const int cell = ix * cfg.bev_ny + iy;
          const double* q = normed.data() + static_cast<std::size_t>(cell) * c;
          double* out = sub_out.data() + static_cast<std::size_t>(cell) * c;
          switch (sub) {
            case kTsa: {
              num::def_attn(reg, lp.tsa_curr, q, ix, iy, normed_grid, tmp.data());
              num::def_attn(reg, lp.tsa_hist, q, ix, iy, hist_grid, out);
              for (int ch = 0; ch < c; ++ch) out[ch] += tmp[ch];
              break;
            }
            case kPca: {
              const Vec2 r = geo.pca_ref[static_cast<std::size_t>(cell)];
              num::def_attn(reg, lp.pca, q, r.x, r.y, in.lidar.view(), out);
              break;
            }
            case kIca: {
              const auto& hits = geo.hits[static_cast<std::size_t>(cell)];
              const int vh = geo.v_hit[static_cast<std::size_t>(cell)];
              if (vh == 0) break;  // contributes zero, residual passes through
              for (const auto& h : hits) {
                const int cam = static_cast<int>(h[0]);
                num::def_attn(reg, lp.ica, q, h[1], h[2],
                              in.cam_feats[static_cast<std::size_t>(cam)].view(),
                              tmp.data());
                for (int ch = 0; ch < c; ++ch) out[ch] += tmp[ch];
              }
              const double inv = 1.0 / vh;
              for (int ch = 0; ch < c; ++ch) out[ch] *= inv;
              break;
            }
            case kFfn:
              num::mlp_forward(reg, lp.ffn, q, out);
              break;
          }
        }
      }
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += sub_out[i];
    }
  }

  BevGrid out(cfg.bev_nx, cfg.bev_ny, c, cfg.extent_m);
  out.data = std::move(x);
  return out;
}

void encode_backward(num::ParamRegistry& reg, const EncoderParams& ep,
                     const FrameInputs& in, const scene::BevGrid* prev_bev,
                     const Pose2& motion, const EncodeCache& cache,
                     const std::vector<double>& d_out,
                     const EncodeInputGrads& grads) {
  const EncoderConfig& cfg = ep.cfg;
  const int cells = cfg.cells(), c = cfg.channels;
  if (d_out.size() != static_cast<std::size_t>(cells) * c)
    throw std::invalid_argument("encoder: output gradient size mismatch");
  const bool has_prev = cache.has_prev;

  std::vector<double> d_x = d_out;
  std::vector<double> d_hist;
  if (has_prev) d_hist.assign(static_cast<std::size_t>(cells) * c, 0.0);

  std::vector<double> normed, d_y(static_cast<std::size_t>(cells) * c);
  std::vector<double> d_scaled(static_cast<std::size_t>(c));
  std::vector<num::LayerNormCache> ln_caches;
  GridMut d_lidar_mut{};
  if (grads.d_lidar) d_lidar_mut = grads.d_lidar->mut();

  const auto order = sublayer_order(cfg.order);
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const EncoderLayerParams& lp = ep.layers[static_cast<std::size_t>(l)];
    for (int slot = 3; slot >= 0; --slot) {
      const int sub = order[static_cast<std::size_t>(slot)];
      const std::vector<double>& x_in =
          cache.sub_inputs[static_cast<std::size_t>(l)][static_cast<std::size_t>(slot)];
      normalize_rows(reg, lp.ln_gamma[slot], lp.ln_beta[slot], x_in, cells, c,
                     normed, &ln_caches);
      const GridView normed_grid{normed.data(), cfg.bev_nx, cfg.bev_ny, c};
      const GridView hist_grid = has_prev ? cache.hist.view() : normed_grid;
      std::fill(d_y.begin(), d_y.end(), 0.0);
      GridMut d_y_grid{d_y.data(), cfg.bev_nx, cfg.bev_ny, c};
      GridMut d_hist_grid{has_prev ? d_hist.data() : d_y.data(), cfg.bev_nx,
                          cfg.bev_ny, c};

      // d_x currently holds the gradient w.r.t. this sublayer's output sum;
      // the residual path passes it straight through, the branch path goes
      // through the sublayer and its pre-norm.
      for (int ix = 0; ix < cfg.bev_nx; ++ix) {
        for (int iy = 0; iy < cfg.bev_ny; ++iy) {
          const int cell = ix * cfg.bev_ny + iy;
          const double* q = normed.data() + static_cast<std::size_t>(cell) * c;
          const double* d_z = d_x.data() + static_cast<std::size_t>(cell) * c;
          double* d_q = d_y.data() + static_cast<std::size_t>(cell) * c;
          switch (sub) {
            case kTsa:
              num::def_attn_backward(reg, lp.tsa_curr, q, ix, iy, normed_grid,
                                     d_z, d_q, &d_y_grid);
              num::def_attn_backward(reg, lp.tsa_hist, q, ix, iy, hist_grid,
                                     d_z, d_q, &d_hist_grid);
              break;
            case kPca: {
              const Vec2 r = cache.pca_ref[static_cast<std::size_t>(cell)];
              num::def_attn_backward(reg, lp.pca, q, r.x, r.y, in.lidar.view(),
                                     d_z, d_q,
                                     grads.d_lidar ? &d_lidar_mut : nullptr);
              break;
            }
            case kIca: {
              const auto& hits = cache.hits[static_cast<std::size_t>(cell)];
              const int vh = cache.v_hit[static_cast<std::size_t>(cell)];
              if (vh == 0) break;
              const double inv = 1.0 / vh;
              for (int ch = 0; ch < c; ++ch) d_scaled[ch] = d_z[ch] * inv;
              for (const auto& h : hits) {
                const int cam = static_cast<int>(h[0]);
                GridMut* d_feat = nullptr;
                GridMut feat_mut{};
                if (grads.d_cams) {
                  feat_mut = (*grads.d_cams)[static_cast<std::size_t>(cam)].mut();
                  d_feat = &feat_mut;
                }
                num::def_attn_backward(
                    reg, lp.ica, q, h[1], h[2],
                    in.cam_feats[static_cast<std::size_t>(cam)].view(),
                    d_scaled.data(), d_q, d_feat);
              }
              break;
            }
            case kFfn:
              num::mlp_backward(reg, lp.ffn, q, d_z, d_q);
              break;
          }
        }
      }

      // Pre-norm backward: d_x += dLN(d_y).
      const double* gamma = reg.val(lp.ln_gamma[slot]);
      double* d_gamma = reg.grad(lp.ln_gamma[slot]);
      double* d_beta = reg.grad(lp.ln_beta[slot]);
      for (int cell = 0; cell < cells; ++cell) {
        num::layer_norm_backward(
            gamma, c, x_in.data() + static_cast<std::size_t>(cell) * c,
            ln_caches[static_cast<std::size_t>(cell)],
            d_y.data() + static_cast<std::size_t>(cell) * c,
            d_x.data() + static_cast<std::size_t>(cell) * c, d_gamma, d_beta);
      }
    }
  }

  // Remaining gradient lands on the learnable BEV queries.
  double* d_query = reg.grad(ep.bev_query);
  for (std::size_t i = 0; i < d_x.size(); ++i) d_query[i] += d_x[i];

  if (has_prev && grads.d_prev) {
    BevGrid d_hist_grid(cfg.bev_nx, cfg.bev_ny, c, cfg.extent_m);
    d_hist_grid.data = std::move(d_hist);
    align_history_backward(d_hist_grid, motion, *grads.d_prev);
  }
}

}  // namespace bevfuse::enc
