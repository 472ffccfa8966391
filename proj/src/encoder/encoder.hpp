#pragma once

#include <optional>
#include <string>
#include <vector>

#include "num/defattn.hpp"
#include "num/mlp.hpp"
#include "num/params.hpp"
#include "scene/render.hpp"

namespace bevfuse::enc {

enum class SublayerOrder { TsaPcaIcaFfn, PcaIcaTsaFfn };

SublayerOrder order_from_name(const std::string& s);
const char* order_name(SublayerOrder o);

struct EncoderConfig {
  int layers = 6;
  int heads = 4;
  int points = 4;
  int n_ref = 4;          // pillar reference points per BEV cell
  double z_min = 0.0;
  double z_max = 2.0;
  int ffn_hidden = 32;
  SublayerOrder order = SublayerOrder::TsaPcaIcaFfn;
  bool strict_layers = true;  // require the 6-layer stack
  int bev_nx = 32;
  int bev_ny = 32;
  int channels = 16;
  double extent_m = 32.0;

  int cells() const { return bev_nx * bev_ny; }
};

// One fusion layer: temporal self-attention (two branches with separate
// parameters), points cross-attention, image cross-attention, feed-forward,
// each on a pre-normalized residual branch.
struct EncoderLayerParams {
  num::DefAttnParams tsa_curr, tsa_hist, pca, ica;
  num::MlpParams ffn;
  num::ParamId ln_gamma[4], ln_beta[4];
};

struct EncoderParams {
  EncoderConfig cfg;
  num::ParamId bev_query;  // (cells, channels) learnable embeddings
  std::vector<EncoderLayerParams> layers;
};

EncoderParams make_encoder(num::ParamRegistry& reg, const EncoderConfig& cfg,
                           const std::string& prefix = "encoder");

// Pillar sampling heights, inclusive linspace over [z_min, z_max].
std::vector<double> pillar_heights(const EncoderConfig& cfg);

// Sensor features for one frame, all in that frame's ego coordinates.
struct FrameInputs {
  scene::BevGrid lidar;
  std::vector<scene::FeatureGrid> cam_feats;
  std::vector<scene::CameraModel> cams;  // ego-frame extrinsics
};

FrameInputs make_frame_inputs(const scene::Scene& s, int t);

// Warps the previous frame's BEV grid into the current ego frame.
// `motion` is the current ego pose expressed in the previous ego frame.
// Conservative splatting: the total of a non-negative field never grows and
// is preserved exactly while the warped support stays in bounds.
scene::BevGrid align_history(const scene::BevGrid& prev,
                             const scene::Pose2& motion);
// Transpose of align_history; accumulates into d_prev.
void align_history_backward(const scene::BevGrid& d_aligned,
                            const scene::Pose2& motion, scene::BevGrid& d_prev);

struct EncodeCache {
  bool has_prev = false;
  scene::BevGrid hist;  // aligned previous BEV (valid when has_prev)
  // Pillar projections, fixed per frame: per cell a list of (cam, u, v).
  std::vector<std::vector<std::array<double, 3>>> hits;
  std::vector<int> v_hit;
  std::vector<scene::Vec2> pca_ref;  // LiDAR-grid coords per cell
  // Input snapshot of every sublayer, [layer][sublayer] -> cells*channels.
  std::vector<std::array<std::vector<double>, 4>> sub_inputs;
};

// Full fusion forward pass; returns the fused BEV grid. Feed the result
// back as prev_bev for the next frame to run the recurrent chain.
scene::BevGrid encode(const num::ParamRegistry& reg, const EncoderParams& ep,
                      const FrameInputs& in, const scene::BevGrid* prev_bev,
                      const scene::Pose2& motion, EncodeCache* cache);

struct EncodeInputGrads {
  scene::BevGrid* d_prev = nullptr;                   // previous-frame grid
  scene::BevGrid* d_lidar = nullptr;                  // LiDAR features
  std::vector<scene::FeatureGrid>* d_cams = nullptr;  // camera features
};

// Accumulates parameter gradients and optional input gradients for one
// frame, given the gradient of a scalar loss w.r.t. the fused grid.
void encode_backward(num::ParamRegistry& reg, const EncoderParams& ep,
                     const FrameInputs& in, const scene::BevGrid* prev_bev,
                     const scene::Pose2& motion, const EncodeCache& cache,
                     const std::vector<double>& d_out,
                     const EncodeInputGrads& grads);

}  // namespace bevfuse::enc
