#pragma once

#include "rpn/transforms.hpp"

namespace rpn {

// Maps the decoded latent of level l+1 to a per-pixel log-variance map at
// level-l image resolution: three 3x3 conv stages, learned stride-2
// upsampling to the target scale, then a 1-channel projection. Outputs are
// clamped to [-10, 10] before any exponentiation downstream.
struct UncertaintyHeadParams {
  int in_channels = 0;
  int features = 0;
  int upsample_stages = 0;
  std::vector<Parameter*> conv_w, conv_b;
  std::vector<Parameter*> up_w, up_b;
  Parameter *proj_w = nullptr, *proj_b = nullptr;
};

UncertaintyHeadParams make_uncertainty_head(ParamStore& store,
                                            const std::string& prefix,
                                            int in_channels,
                                            int upsample_stages, Rng& rng);

// (N,C,h,w) -> (N,1,h*2^stages,w*2^stages), values in [-10,10].
Var estimate_uncertainty(const Var& y_hat_next,
                         const UncertaintyHeadParams& p);

// Aleatoric regression objective, averaged over pixels:
//   exp(-(u + ln 2)) * e + 1.5 * u
// where e is the channel-mean squared error per pixel. Gradients reach both
// the reconstruction and u.
Var loss_uncertainty(const Var& x_hat, const Var& x_ref, const Var& u);

// Distortion reweighted by the uncertainty map: u is detached, min-max
// normalized to [0,1] per image (constant maps normalize to ones), so no
// gradient reaches the uncertainty head.
Var loss_uncertainty_guided(const Var& x_hat, const Var& x_ref, const Var& u);

// u_l = head_l(latents[l+1]) for l = L-2 .. 0; result indexed by l.
std::vector<Var> reverse_pyramid_pass(
    const std::vector<Var>& latents,
    const std::vector<UncertaintyHeadParams>& heads);

}  // namespace rpn
