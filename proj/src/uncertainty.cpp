#include "rpn/uncertainty.hpp"

#include <cmath>

namespace rpn {

namespace {
const Real kLn2 = std::log(Real(2));
constexpr Real kUClamp = 10;

// Channel-mean squared error per pixel: (N,1,H,W).
Var pixel_error(const Var& x_hat, const Var& x_ref) {
  check_shape(x_hat->value.shape() == x_ref->value.shape(),
              "loss: reconstruction/reference shape mismatch");
  return mean_axes(square(sub(x_hat, x_ref)), {1}, true);
}
}  // namespace

UncertaintyHeadParams make_uncertainty_head(ParamStore& store,
                                            const std::string& prefix,
                                            int in_channels,
                                            int upsample_stages, Rng& rng) {
  check_config(in_channels >= 1 && upsample_stages >= 0,
               "bad uncertainty head config");
  UncertaintyHeadParams p;
  p.in_channels = in_channels;
  p.features = std::max(4, in_channels / 2);
  p.upsample_stages = upsample_stages;
  int c = in_channels;
  for (int i = 0; i < 3; ++i) {
    const std::string stage = prefix + ".conv" + std::to_string(i);
    p.conv_w.push_back(
        &add_conv_weight(store, stage + ".w", p.features, c, 3, rng));
    p.conv_b.push_back(&store.add(stage + ".b", TensorR(Shape{p.features})));
    c = p.features;
  }
  for (int i = 0; i < upsample_stages; ++i) {
    const std::string stage = prefix + ".up" + std::to_string(i);
    p.up_w.push_back(
        &add_deconv_weight(store, stage + ".w", p.features, p.features, 3, rng));
    p.up_b.push_back(&store.add(stage + ".b", TensorR(Shape{p.features})));
  }
  p.proj_w = &add_conv_weight(store, prefix + ".proj.w", 1, p.features, 1, rng);
  p.proj_b = &store.add(prefix + ".proj.b", TensorR(Shape{1}));
  return p;
}

Var estimate_uncertainty(const Var& y_hat_next,
                         const UncertaintyHeadParams& p) {
  check_shape(y_hat_next->value.rank() == 4 &&
                  y_hat_next->value.dim(1) == p.in_channels,
              "uncertainty head: channel mismatch");
  Var h = y_hat_next;
  for (size_t i = 0; i < p.conv_w.size(); ++i)
    h = relu(conv2d(h, leaf_var(*p.conv_w[i]), leaf_var(*p.conv_b[i]),
                    {.stride = 1, .pad = 1}));
  for (size_t i = 0; i < p.up_w.size(); ++i)
    h = relu(conv_transpose2d(h, leaf_var(*p.up_w[i]), leaf_var(*p.up_b[i]),
                              {.stride = 2, .pad = 1, .out_pad = 1}));
  Var u = conv2d(h, leaf_var(*p.proj_w), leaf_var(*p.proj_b),
                 {.stride = 1, .pad = 0});
  return clamp(u, -kUClamp, kUClamp);
}

Var loss_uncertainty(const Var& x_hat, const Var& x_ref, const Var& u) {
  Var e = pixel_error(x_hat, x_ref);
  check_shape(u->value.shape() == e->value.shape(),
              "loss_uncertainty: map shape mismatch");
  Var uc = clamp(u, -kUClamp, kUClamp);
  Var weight = rpn::exp(neg(add_scalar(uc, kLn2)));  // 1/(2*delta)
  Var per_pixel = add(mul(weight, e), mul_scalar(uc, 1.5));
  return mean(per_pixel);
}

Var loss_uncertainty_guided(const Var& x_hat, const Var& x_ref, const Var& u) {
  Var e = pixel_error(x_hat, x_ref);
  check_shape(u->value.shape() == e->value.shape(),
              "loss_uncertainty_guided: map shape mismatch");
  // Detached per-image min-max normalization of the map.
  const TensorR& uv = u->value;
  TensorR w(uv.shape());
  const int N = uv.dim(0);
  const int64_t plane = uv.size() / N;
  for (int n = 0; n < N; ++n) {
    const Real* src = uv.data() + n * plane;
    Real lo = src[0], hi = src[0];
    for (int64_t i = 0; i < plane; ++i) {
      lo = std::min(lo, src[i]);
      hi = std::max(hi, src[i]);
    }
    Real* dst = w.data() + n * plane;
    if (hi - lo < 1e-12) {
      for (int64_t i = 0; i < plane; ++i) dst[i] = 1;
    } else {
      for (int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - lo) / (hi - lo);
    }
  }
  return mean(mul(constant(std::move(w)), e));
}

std::vector<Var> reverse_pyramid_pass(
    const std::vector<Var>& latents,
    const std::vector<UncertaintyHeadParams>& heads) {
  check_config(heads.size() + 1 == latents.size(),
               "reverse pass needs one head per adjacent level pair");
  const int levels = static_cast<int>(latents.size());
  std::vector<Var> maps(static_cast<size_t>(std::max(0, levels - 1)));
  for (int l = levels - 2; l >= 0; --l)
    maps[static_cast<size_t>(l)] = estimate_uncertainty(
        latents[static_cast<size_t>(l) + 1], heads[static_cast<size_t>(l)]);
  return maps;
}

}  // namespace rpn
