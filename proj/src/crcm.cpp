#include "rpn/crcm.hpp"

namespace rpn {

namespace {

Var conv1x1(const Var& x, Parameter& w, Parameter& b) {
  return conv2d(x, leaf_var(w), leaf_var(b), {.stride = 1, .pad = 0});
}

// LayerNorm over the channel axis of an (N,C,1,1) context vector.
Var layer_norm_channels(const Var& x, Parameter& scale, Parameter& shift) {
  const int c = x->value.dim(1);
  Var mu = mean_axes(x, {1}, true);
  Var centered = sub(x, mu);
  Var var = mean_axes(square(centered), {1}, true);
  Var normed = div(centered, rpn::sqrt(add_scalar(var, 1e-5)));
  Var s = reshape(leaf_var(scale), {1, c, 1, 1});
  Var t = reshape(leaf_var(shift), {1, c, 1, 1});
  return add(mul(normed, s), t);
}

}  // namespace

GcaParams make_gca_params(ParamStore& store, const std::string& prefix,
                          int channels, int reduction, Rng& rng) {
  GcaParams p;
  p.channels = channels;
  p.bottleneck = std::max(1, channels / reduction);
  p.score_w = &add_conv_weight(store, prefix + ".score.w", 1, channels, 1, rng);
  p.score_b = &store.add(prefix + ".score.b", TensorR(Shape{1}));
  p.w1 = &add_conv_weight(store, prefix + ".w1", p.bottleneck, channels, 1, rng);
  p.b1 = &store.add(prefix + ".b1", TensorR(Shape{p.bottleneck}));
  p.ln_scale = &store.add(prefix + ".ln_scale", TensorR::ones({p.bottleneck}));
  p.ln_shift = &store.add(prefix + ".ln_shift", TensorR(Shape{p.bottleneck}));
  p.w2 = &add_conv_weight(store, prefix + ".w2", channels, p.bottleneck, 1, rng);
  p.b2 = &store.add(prefix + ".b2", TensorR(Shape{channels}));
  return p;
}

Var gca_attention(const Var& x, const GcaParams& p) {
  Var score = conv1x1(x, *p.score_w, *p.score_b);  // (N,1,h,w)
  return softmax(score, {2, 3});
}

Var gca(const Var& x, const GcaParams& p) {
  check_shape(x->value.dim(1) == p.channels, "gca: channel mismatch");
  Var attn = gca_attention(x, p);
  Var context = sum_axes(mul(x, attn), {2, 3}, true);  // (N,C,1,1)
  Var t = conv1x1(context, *p.w1, *p.b1);
  Var n = layer_norm_channels(t, *p.ln_scale, *p.ln_shift);
  Var u = conv1x1(relu(n), *p.w2, *p.b2);  // (N,C,1,1)
  return add(x, u);
}

namespace {

SpatialMaskHead make_spatial_head(ParamStore& store, const std::string& prefix,
                                  int channels, Rng& rng) {
  SpatialMaskHead h;
  const int mid = std::max(1, channels / 2);
  const int chans[5] = {channels, mid, mid, mid, 2};
  for (int i = 0; i < 4; ++i) {
    const int k = i == 3 ? 1 : 3;
    h.w.push_back(&add_conv_weight(store,
                                   prefix + ".conv" + std::to_string(i) + ".w",
                                   chans[i + 1], chans[i], k, rng));
    h.b.push_back(&store.add(prefix + ".conv" + std::to_string(i) + ".b",
                             TensorR(Shape{chans[i + 1]})));
  }
  return h;
}

}  // namespace

IebParams make_ieb_params(ParamStore& store, const std::string& prefix,
                          ScalabilityMode mode, int c, int reduction,
                          Rng& rng) {
  IebParams p;
  const int half = c / 2;
  if (mode == ScalabilityMode::kSpatial)
    p.up_w = &add_deconv_weight(store, prefix + ".up.w", c, half, 3, rng);
  else
    p.up_w = &add_conv_weight(store, prefix + ".up.w", half, c, 3, rng);
  p.up_b = &store.add(prefix + ".up.b", TensorR(Shape{half}));
  p.gca = make_gca_params(store, prefix + ".gca", half, reduction, rng);
  p.fuse_w = &add_conv_weight(store, prefix + ".fuse.w", half, c, 1, rng);
  p.fuse_b = &store.add(prefix + ".fuse.b", TensorR(Shape{half}));
  return p;
}

RrbParams make_rrb_params(ParamStore& store, const std::string& prefix,
                          ScalabilityMode mode, int c, int reduction,
                          Rng& rng) {
  RrbParams p;
  const int half = c / 2;
  p.down_w = &add_conv_weight(store, prefix + ".down.w", c, half, 3, rng);
  p.down_b = &store.add(prefix + ".down.b", TensorR(Shape{c}));
  (void)mode;  // stride differs at call time only
  p.channel_logits = &store.add(prefix + ".channel_logits",
                                TensorR::random_normal({2, c}, rng, 0.5));
  p.spatial = make_spatial_head(store, prefix + ".spatial", c, rng);
  const int ks[3] = {1, 3, 3};
  for (int i = 0; i < 3; ++i) {
    p.sm_w.push_back(&add_conv_weight(
        store, prefix + ".sm" + std::to_string(i) + ".w", c, c, ks[i], rng));
    p.sm_b.push_back(&store.add(prefix + ".sm" + std::to_string(i) + ".b",
                                TensorR(Shape{c})));
  }
  p.integrate_w =
      &add_conv_weight(store, prefix + ".integrate.w", c, 3 * c, 1, rng);
  p.integrate_b = &store.add(prefix + ".integrate.b", TensorR(Shape{c}));
  p.gca = make_gca_params(store, prefix + ".gca", c, reduction, rng);
  p.fuse_w = &add_conv_weight(store, prefix + ".fuse.w", c, 2 * c, 1, rng);
  p.fuse_b = &store.add(prefix + ".fuse.b", TensorR(Shape{c}));
  return p;
}

CrcmParams make_crcm_params(ParamStore& store, const std::string& prefix,
                            ScalabilityMode mode, int in_channels,
                            int out_channels, int iterations, int reduction,
                            Real tau, Rng& rng) {
  check_config(iterations >= 1, "crcm needs at least one iteration");
  check_config(in_channels % 2 == 0 && in_channels >= 2,
               "crcm input channels must be even");
  check_config(tau > 0, "mask temperature must be positive");
  CrcmParams p;
  p.mode = mode;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.iterations = iterations;
  p.tau = tau;
  const int half = in_channels / 2;
  if (mode == ScalabilityMode::kSpatial)
    p.stem_w =
        &add_deconv_weight(store, prefix + ".stem.w", in_channels, half, 3, rng);
  else
    p.stem_w =
        &add_conv_weight(store, prefix + ".stem.w", half, in_channels, 3, rng);
  p.stem_b = &store.add(prefix + ".stem.b", TensorR(Shape{half}));
  for (int i = 0; i <= iterations; ++i)
    p.iebs.push_back(make_ieb_params(store,
                                     prefix + ".ieb" + std::to_string(i), mode,
                                     in_channels, reduction, rng));
  for (int i = 0; i < iterations; ++i)
    p.rrbs.push_back(make_rrb_params(store,
                                     prefix + ".rrb" + std::to_string(i), mode,
                                     in_channels, reduction, rng));
  p.proj_w = &add_conv_weight(store, prefix + ".proj.w", out_channels, half, 1,
                              rng);
  p.proj_b = &store.add(prefix + ".proj.b", TensorR(Shape{out_channels}));
  return p;
}

namespace {

Var two_category_mask(const Var& keep_logit, const Var& drop_logit, Real tau,
                      const MaskContext& ctx, const TensorR* frozen,
                      const Shape& sample_shape) {
  if (ctx.mode == MaskMode::kInference) {
    // Deterministic argmax; ties keep the channel/position.
    TensorR m(keep_logit->value.shape());
    for (int64_t i = 0; i < m.size(); ++i)
      m[i] = keep_logit->value[i] >= drop_logit->value[i] ? 1 : 0;
    return constant(std::move(m));
  }
  TensorR g0, g1;
  if (frozen) {
    check_shape(frozen->shape() == sample_shape, "frozen samples shape");
    g0 = TensorR(keep_logit->value.shape());
    g1 = TensorR(keep_logit->value.shape());
    const int64_t n = g0.size();
    for (int64_t i = 0; i < n; ++i) {
      g0[i] = (*frozen)[i];
      g1[i] = (*frozen)[n + i];
    }
  } else {
    check_config(ctx.rng != nullptr, "training-mode masks need an rng");
    g0 = TensorR(keep_logit->value.shape());
    g1 = TensorR(keep_logit->value.shape());
    for (int64_t i = 0; i < g0.size(); ++i) g0[i] = ctx.rng->gumbel();
    for (int64_t i = 0; i < g1.size(); ++i) g1[i] = ctx.rng->gumbel();
  }
  // Two-category Gumbel softmax collapses to a sigmoid of the perturbed
  // logit difference.
  Var diff = sub(add(keep_logit, constant(std::move(g0))),
                 add(drop_logit, constant(std::move(g1))));
  Var soft = sigmoid(mul_scalar(diff, Real(1) / tau));
  if (ctx.mode == MaskMode::kHardST) return straight_through_binary(soft);
  return soft;
}

}  // namespace

Var gumbel_channel_mask(const Var& v, Real tau, const MaskContext& ctx) {
  check_config(tau > 0, "mask temperature must be positive");
  check_shape(v->value.rank() == 2 && v->value.dim(0) == 2,
              "channel logits must be (2,c)");
  const int c = v->value.dim(1);
  Var keep = reshape(slice(v, 0, 0, 1), {c});
  Var drop = reshape(slice(v, 0, 1, 1), {c});
  return two_category_mask(keep, drop, tau, ctx, ctx.frozen_channel,
                           Shape{2, c});
}

Var gumbel_spatial_mask(const Var& x, const SpatialMaskHead& head, Real tau,
                        const MaskContext& ctx) {
  check_config(tau > 0, "mask temperature must be positive");
  Var h = x;
  for (size_t i = 0; i < head.w.size(); ++i) {
    const int k = head.w[i]->value.dim(2);
    h = conv2d(h, leaf_var(*head.w[i]), leaf_var(*head.b[i]),
               {.stride = 1, .pad = k / 2});
    if (i + 1 < head.w.size()) h = relu(h);
  }
  check_shape(h->value.dim(1) == 2, "spatial logit head must emit 2 channels");
  Var keep = slice(h, 1, 0, 1);
  Var drop = slice(h, 1, 1, 1);
  return two_category_mask(keep, drop, tau, ctx, ctx.frozen_spatial,
                           h->value.shape());
}

Var smconv(const Var& x, const Var& csm, const Var& ssm, const Var& kernel,
           const Var& bias, const Conv2dSpec& spec) {
  check_shape(csm->value.size() == kernel->value.dim(0),
              "smconv: channel mask must match output channels");
  check_shape(ssm->value.rank() == 4 && ssm->value.dim(1) == 1 &&
                  ssm->value.dim(2) == x->value.dim(2) &&
                  ssm->value.dim(3) == x->value.dim(3),
              "smconv: spatial mask must match input dims");
  Var gated = mul(x, ssm);
  Var out = conv2d(gated, kernel, bias, spec);
  Var cs = reshape(csm, {1, kernel->value.dim(0), 1, 1});
  return mul(out, cs);
}

Var ieb_forward(const Var& y_ieb_prev, const Var& y_rrb_prev,
                const IebParams& p, ScalabilityMode mode) {
  Var up = mode == ScalabilityMode::kSpatial
               ? conv_transpose2d(y_rrb_prev, leaf_var(*p.up_w),
                                  leaf_var(*p.up_b),
                                  {.stride = 2, .pad = 1, .out_pad = 1})
               : conv2d(y_rrb_prev, leaf_var(*p.up_w), leaf_var(*p.up_b),
                        {.stride = 1, .pad = 1});
  check_shape(up->value.dim(2) == y_ieb_prev->value.dim(2) &&
                  up->value.dim(3) == y_ieb_prev->value.dim(3),
              "ieb: resampled dims do not match the high-resolution track");
  Var enriched = gca(up, p.gca);
  Var fused = concat({enriched, y_ieb_prev}, 1);
  return conv1x1(fused, *p.fuse_w, *p.fuse_b);
}

Var rrb_forward(const Var& y_ieb, const Var& y_rrb_prev, const RrbParams& p,
                ScalabilityMode mode, Real tau, const MaskContext& ctx) {
  Var down = mode == ScalabilityMode::kSpatial
                 ? conv2d(y_ieb, leaf_var(*p.down_w), leaf_var(*p.down_b),
                          {.stride = 2, .pad = 1})
                 : conv2d(y_ieb, leaf_var(*p.down_w), leaf_var(*p.down_b),
                          {.stride = 1, .pad = 1});
  check_shape(down->value.dim(2) == y_rrb_prev->value.dim(2) &&
                  down->value.dim(3) == y_rrb_prev->value.dim(3),
              "rrb: resampled dims do not match the low-resolution track");
  Var csm = gumbel_channel_mask(leaf_var(*p.channel_logits), tau, ctx);
  Var ssm = gumbel_spatial_mask(down, p.spatial, tau, ctx);
  const Conv2dSpec specs[3] = {{.stride = 1, .pad = 0},
                               {.stride = 1, .pad = 1},
                               {.stride = 1, .pad = 2, .dilation = 2}};
  std::vector<Var> branches;
  for (int i = 0; i < 3; ++i)
    branches.push_back(smconv(down, csm, ssm,
                              leaf_var(*p.sm_w[static_cast<size_t>(i)]),
                              leaf_var(*p.sm_b[static_cast<size_t>(i)]),
                              specs[i]));
  Var integrated = conv1x1(concat(branches, 1), *p.integrate_w, *p.integrate_b);
  Var attended = add(down, gca(integrated, p.gca));
  Var fused = concat({attended, y_rrb_prev}, 1);
  return conv1x1(fused, *p.fuse_w, *p.fuse_b);
}

Var crcm_forward(const Var& y_hat_prev, const CrcmParams& p,
                 const MaskContext& ctx) {
  check_shape(y_hat_prev->value.rank() == 4 &&
                  y_hat_prev->value.dim(1) == p.in_channels,
              "crcm: channel mismatch");
  Var hi = p.mode == ScalabilityMode::kSpatial
               ? conv_transpose2d(y_hat_prev, leaf_var(*p.stem_w),
                                  leaf_var(*p.stem_b),
                                  {.stride = 2, .pad = 1, .out_pad = 1})
               : conv2d(y_hat_prev, leaf_var(*p.stem_w), leaf_var(*p.stem_b),
                        {.stride = 1, .pad = 1});
  Var lo = y_hat_prev;
  hi = ieb_forward(hi, lo, p.iebs[0], p.mode);
  for (int k = 0; k < p.iterations; ++k) {
    lo = rrb_forward(hi, lo, p.rrbs[static_cast<size_t>(k)], p.mode, p.tau, ctx);
    hi = ieb_forward(hi, lo, p.iebs[static_cast<size_t>(k) + 1], p.mode);
  }
  return conv1x1(hi, *p.proj_w, *p.proj_b);
}

}  // namespace rpn
