#include "rpn/transforms.hpp"

#include <cmath>

namespace rpn {

namespace {

Var gdn_denominator(const Var& x, const Var& beta, const Var& gamma) {
  const int c = x->value.dim(1);
  check_shape(beta->value.size() == c,
              "gdn: beta length must match channel count");
  check_shape(gamma->value.rank() == 2 && gamma->value.dim(0) == c &&
                  gamma->value.dim(1) == c,
              "gdn: gamma must be (C,C)");
  Var gw = reshape(gamma, {c, c, 1, 1});
  Var denom = conv2d(square(x), gw, beta, {.stride = 1, .pad = 0});
  return rpn::sqrt(denom);
}

}  // namespace

Var gdn(const Var& x, const Var& beta, const Var& gamma) {
  return div(x, gdn_denominator(x, beta, gamma));
}

Var igdn(const Var& y, const Var& beta, const Var& gamma) {
  return mul(y, gdn_denominator(y, beta, gamma));
}

Parameter& add_conv_weight(ParamStore& store, const std::string& name,
                           int c_out, int c_in, int k, Rng& rng) {
  const Real std = std::sqrt(Real(1) / (c_in * k * k));
  return store.add(name,
                   TensorR::random_normal({c_out, c_in, k, k}, rng, std));
}

Parameter& add_deconv_weight(ParamStore& store, const std::string& name,
                             int c_in, int c_out, int k, Rng& rng) {
  const Real std = std::sqrt(Real(1) / (c_in * k * k));
  return store.add(name,
                   TensorR::random_normal({c_in, c_out, k, k}, rng, std));
}

namespace {

GdnStage add_gdn_stage(ParamStore& store, const std::string& prefix, int c) {
  GdnStage s;
  s.beta_raw = &store.add(prefix + ".beta", TensorR::ones({c}));
  TensorR g(Shape{c, c});
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j)
      g[static_cast<int64_t>(i) * c + j] =
          i == j ? std::sqrt(Real(0.1)) : Real(1e-2);
  s.gamma_raw = &store.add(prefix + ".gamma", std::move(g));
  return s;
}

}  // namespace

TransformParams make_transform_params(ParamStore& store,
                                      const std::string& prefix, int channels,
                                      Rng& rng) {
  check_config(channels >= 1, "transform needs at least one channel");
  TransformParams p;
  p.channels = channels;
  for (int i = 0; i < 4; ++i) {
    const int cin = i == 0 ? 3 : channels;
    const std::string stage = prefix + ".analysis.conv" + std::to_string(i);
    p.analysis_w.push_back(
        &add_conv_weight(store, stage + ".w", channels, cin, 5, rng));
    p.analysis_b.push_back(&store.add(stage + ".b", TensorR(Shape{channels})));
    if (i < 3)
      p.analysis_gdn.push_back(
          add_gdn_stage(store, prefix + ".analysis.gdn" + std::to_string(i),
                        channels));
  }
  for (int i = 0; i < 4; ++i) {
    const int cout = i == 3 ? 3 : channels;
    const std::string stage = prefix + ".synthesis.deconv" + std::to_string(i);
    p.synthesis_w.push_back(
        &add_deconv_weight(store, stage + ".w", channels, cout, 5, rng));
    p.synthesis_b.push_back(&store.add(stage + ".b", TensorR(Shape{cout})));
    if (i < 3)
      p.synthesis_igdn.push_back(
          add_gdn_stage(store, prefix + ".synthesis.igdn" + std::to_string(i),
                        channels));
  }
  return p;
}

Var conv_stage(const Var& x, Parameter& w, Parameter& b, int stride, int pad,
               int dilation) {
  return conv2d(x, leaf_var(w), leaf_var(b),
                {.stride = stride, .pad = pad, .dilation = dilation});
}

Var deconv_stage(const Var& x, Parameter& w, Parameter& b, int stride, int pad,
                 int out_pad) {
  return conv_transpose2d(x, leaf_var(w), leaf_var(b),
                          {.stride = stride, .pad = pad, .out_pad = out_pad});
}

Var analysis_transform(const Var& x, const TransformParams& p) {
  check_shape(x->value.rank() == 4 && x->value.dim(1) == 3,
              "analysis expects (N,3,H,W)");
  check_shape(x->value.dim(2) % 16 == 0 && x->value.dim(3) % 16 == 0,
              "analysis input dims must be multiples of 16; pad first");
  Var h = x;
  for (int i = 0; i < 4; ++i) {
    h = conv_stage(h, *p.analysis_w[static_cast<size_t>(i)],
                   *p.analysis_b[static_cast<size_t>(i)], 2, 2);
    if (i < 3) {
      const auto& g = p.analysis_gdn[static_cast<size_t>(i)];
      h = gdn(h, g.beta(), g.gamma());
    }
  }
  return h;
}

Var synthesis_transform(const Var& y, const TransformParams& p) {
  check_shape(y->value.rank() == 4 && y->value.dim(1) == p.channels,
              "synthesis expects (N,C,h,w)");
  Var h = y;
  for (int i = 0; i < 4; ++i) {
    h = deconv_stage(h, *p.synthesis_w[static_cast<size_t>(i)],
                     *p.synthesis_b[static_cast<size_t>(i)], 2, 2, 1);
    if (i < 3) {
      const auto& g = p.synthesis_igdn[static_cast<size_t>(i)];
      h = igdn(h, g.beta(), g.gamma());
    }
  }
  return h;
}

}  // namespace rpn
