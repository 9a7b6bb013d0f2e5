#pragma once

#include "rpn/ops.hpp"
#include "rpn/random.hpp"

namespace rpn {

// Generalized divisive normalization over channels at each position:
//   y[i] = x[i] / sqrt(beta[i] + sum_j gamma[i,j] x[j]^2)
// beta: (C), gamma: (C,C); both already reparameterized to valid ranges.
Var gdn(const Var& x, const Var& beta, const Var& gamma);
// One-step inverse form: x[i] = y[i] * sqrt(beta[i] + sum_j gamma[i,j] y[j]^2).
Var igdn(const Var& y, const Var& beta, const Var& gamma);

// Raw parameters stay unconstrained; effective values are beta = raw^2+1e-6
// (positive) and gamma = raw^2 (non-negative).
struct GdnStage {
  Parameter* beta_raw = nullptr;
  Parameter* gamma_raw = nullptr;
  Var beta() const { return add_scalar(square(leaf_var(*beta_raw)), 1e-6); }
  Var gamma() const { return square(leaf_var(*gamma_raw)); }
};

// Four 5x5 stride-2 convolution stages with GDN after the first three, and
// the mirrored deconvolution/IGDN stack.
struct TransformParams {
  int channels = 0;
  std::vector<Parameter*> analysis_w, analysis_b;
  std::vector<GdnStage> analysis_gdn;
  std::vector<Parameter*> synthesis_w, synthesis_b;
  std::vector<GdnStage> synthesis_igdn;
};

TransformParams make_transform_params(ParamStore& store,
                                      const std::string& prefix, int channels,
                                      Rng& rng);

// (N,3,H,W) with H,W divisible by 16 -> (N,C,H/16,W/16).
Var analysis_transform(const Var& x, const TransformParams& p);
// (N,C,h,w) -> (N,3,16h,16w); no clamping here, evaluation clamps on output.
Var synthesis_transform(const Var& y, const TransformParams& p);

Var conv_stage(const Var& x, Parameter& w, Parameter& b, int stride, int pad,
               int dilation = 1);
Var deconv_stage(const Var& x, Parameter& w, Parameter& b, int stride, int pad,
                 int out_pad);

// Zero-mean scaled-variance weight init, zero bias.
Parameter& add_conv_weight(ParamStore& store, const std::string& name,
                           int c_out, int c_in, int k, Rng& rng);
Parameter& add_deconv_weight(ParamStore& store, const std::string& name,
                             int c_in, int c_out, int k, Rng& rng);

}  // namespace rpn
