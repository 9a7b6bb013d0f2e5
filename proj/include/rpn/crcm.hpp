#pragma once

#include "rpn/transforms.hpp"

namespace rpn {

enum class ScalabilityMode { kSpatial, kQuality };

// Mask behavior: inference is a deterministic argmax; training uses fresh
// Gumbel samples, soft during warm-up and hard straight-through afterwards.
enum class MaskMode { kInference, kSoft, kHardST };

struct MaskContext {
  MaskMode mode = MaskMode::kInference;
  Rng* rng = nullptr;
  // Test hooks: when set, used instead of fresh draws.
  const TensorR* frozen_channel = nullptr;  // (2,c)
  const TensorR* frozen_spatial = nullptr;  // (N,2,h,w)
};

// Global context attention: softmax pooling over all positions followed by
// a bottleneck channel transform added back onto the input.
struct GcaParams {
  int channels = 0;
  int bottleneck = 0;
  Parameter *score_w = nullptr, *score_b = nullptr;
  Parameter *w1 = nullptr, *b1 = nullptr;
  Parameter *ln_scale = nullptr, *ln_shift = nullptr;
  Parameter *w2 = nullptr, *b2 = nullptr;
};

GcaParams make_gca_params(ParamStore& store, const std::string& prefix,
                          int channels, int reduction, Rng& rng);
Var gca(const Var& x, const GcaParams& p);

// Softmax attention weights of the gca pooling step, exposed for tests.
Var gca_attention(const Var& x, const GcaParams& p);

struct IebParams {
  Parameter *up_w = nullptr, *up_b = nullptr;  // resampler, c -> c/2
  GcaParams gca;
  Parameter *fuse_w = nullptr, *fuse_b = nullptr;  // 1x1, c -> c/2
};

struct SpatialMaskHead {
  std::vector<Parameter*> w, b;  // four conv layers ending in 2 channels
};

struct RrbParams {
  Parameter *down_w = nullptr, *down_b = nullptr;  // resampler, c/2 -> c
  Parameter* channel_logits = nullptr;             // V: (2,c)
  SpatialMaskHead spatial;
  std::vector<Parameter*> sm_w, sm_b;  // three SMConv kernels, c -> c
  Parameter *integrate_w = nullptr, *integrate_b = nullptr;  // 1x1, 3c -> c
  GcaParams gca;
  Parameter *fuse_w = nullptr, *fuse_b = nullptr;  // 1x1, 2c -> c
};

struct CrcmParams {
  ScalabilityMode mode = ScalabilityMode::kSpatial;
  int in_channels = 0;
  int out_channels = 0;
  int iterations = 0;  // K; block pattern is IEB-(RRB-IEB)^K
  Real tau = Real(2) / 3;
  Parameter *stem_w = nullptr, *stem_b = nullptr;  // seeds the 2x track
  std::vector<IebParams> iebs;                     // K+1
  std::vector<RrbParams> rrbs;                     // K
  Parameter *proj_w = nullptr, *proj_b = nullptr;  // terminal 1x1 to C_l
};

IebParams make_ieb_params(ParamStore& store, const std::string& prefix,
                          ScalabilityMode mode, int channels, int reduction,
                          Rng& rng);
RrbParams make_rrb_params(ParamStore& store, const std::string& prefix,
                          ScalabilityMode mode, int channels, int reduction,
                          Rng& rng);
CrcmParams make_crcm_params(ParamStore& store, const std::string& prefix,
                            ScalabilityMode mode, int in_channels,
                            int out_channels, int iterations, int reduction,
                            Real tau, Rng& rng);

// Binary channel mask from two-category logits V (2,c); returns (c).
Var gumbel_channel_mask(const Var& v, Real tau, const MaskContext& ctx);
// Binary spatial mask from the four-layer logit head; returns (N,1,h,w).
Var gumbel_spatial_mask(const Var& x, const SpatialMaskHead& head, Real tau,
                        const MaskContext& ctx);

// Sparse mask convolution: spatial mask gates input positions, channel mask
// gates output channels. csm: (c_out), ssm: (N,1,h,w).
Var smconv(const Var& x, const Var& csm, const Var& ssm, const Var& kernel,
           const Var& bias, const Conv2dSpec& spec);

Var ieb_forward(const Var& y_ieb_prev, const Var& y_rrb_prev,
                const IebParams& p, ScalabilityMode mode);
Var rrb_forward(const Var& y_ieb, const Var& y_rrb_prev, const RrbParams& p,
                ScalabilityMode mode, Real tau, const MaskContext& ctx);

// Resolution field from the previous level's quantized latent. Spatial mode
// doubles the spatial dims; quality mode preserves them.
Var crcm_forward(const Var& y_hat_prev, const CrcmParams& p,
                 const MaskContext& ctx);

}  // namespace rpn
