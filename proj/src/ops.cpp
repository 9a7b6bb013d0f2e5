#include "rpn/ops.hpp"

#include <array>
#include <cmath>

namespace rpn {

namespace {

using MatRM =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

// Strides of `s` aligned to broadcast result `out`; broadcast axes get 0.
std::vector<int64_t> aligned_strides(const Shape& s, const Shape& out) {
  const int rs = static_cast<int>(s.size());
  const int ro = static_cast<int>(out.size());
  auto own = row_major_strides(s);
  std::vector<int64_t> st(static_cast<size_t>(ro), 0);
  for (int i = 0; i < rs; ++i) {
    const int oi = i + (ro - rs);
    st[static_cast<size_t>(oi)] =
        (s[static_cast<size_t>(i)] == 1 && out[static_cast<size_t>(oi)] != 1)
            ? 0
            : own[static_cast<size_t>(i)];
  }
  return st;
}

template <typename F>
TensorR broadcast_binary(const TensorR& a, const TensorR& b, F&& f) {
  if (a.same_shape(b)) {
    TensorR out(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  if (b.size() == 1) {
    TensorR out(a.shape());
    const Real bv = b[0];
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out[i] = f(a[i], bv);
    return out;
  }
  if (a.size() == 1) {
    TensorR out(b.shape());
    const Real av = a[0];
    const int64_t n = b.size();
    for (int64_t i = 0; i < n; ++i) out[i] = f(av, b[i]);
    return out;
  }
  const Shape os = broadcast_shape(a.shape(), b.shape());
  TensorR out(os);
  const int r = static_cast<int>(os.size());
  const auto sa = aligned_strides(a.shape(), os);
  const auto sb = aligned_strides(b.shape(), os);
  std::vector<int64_t> coord(static_cast<size_t>(r), 0);
  int64_t ia = 0, ib = 0;
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) {
    out[i] = f(a[ia], b[ib]);
    for (int ax = r - 1; ax >= 0; --ax) {
      coord[static_cast<size_t>(ax)]++;
      ia += sa[static_cast<size_t>(ax)];
      ib += sb[static_cast<size_t>(ax)];
      if (coord[static_cast<size_t>(ax)] < os[static_cast<size_t>(ax)]) break;
      ia -= sa[static_cast<size_t>(ax)] * os[static_cast<size_t>(ax)];
      ib -= sb[static_cast<size_t>(ax)] * os[static_cast<size_t>(ax)];
      coord[static_cast<size_t>(ax)] = 0;
    }
  }
  return out;
}

template <typename FVal, typename FGradA, typename FGradB>
Var binary_op(const Var& a, const Var& b, FVal fval, FGradA fga, FGradB fgb) {
  TensorR value = broadcast_binary(a->value, b->value, fval);
  return make_node(std::move(value), {a, b},
                   [a, b, fga, fgb](Node& self) {
                     if (a->requires_grad) {
                       TensorR ga = broadcast_binary(a->value, b->value, fga);
                       TensorR gg = broadcast_binary(self.grad, ga,
                                                     [](Real g, Real d) { return g * d; });
                       a->accumulate(reduce_to_shape(gg, a->value.shape()));
                     }
                     if (b->requires_grad) {
                       TensorR gb = broadcast_binary(a->value, b->value, fgb);
                       TensorR gg = broadcast_binary(self.grad, gb,
                                                     [](Real g, Real d) { return g * d; });
                       b->accumulate(reduce_to_shape(gg, b->value.shape()));
                     }
                   });
}

template <typename FVal, typename FGrad>
Var unary_op(const Var& a, FVal fval, FGrad fgrad) {
  TensorR value(a->value.shape());
  const int64_t n = a->value.size();
  for (int64_t i = 0; i < n; ++i) value[i] = fval(a->value[i]);
  return make_node(std::move(value), {a}, [a, fgrad](Node& self) {
    TensorR g(a->value.shape());
    const int64_t m = a->value.size();
    for (int64_t i = 0; i < m; ++i)
      g[i] = self.grad[i] * fgrad(a->value[i], self.value[i]);
    a->accumulate(g);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x + y; },
      [](Real, Real) { return Real(1); }, [](Real, Real) { return Real(1); });
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x - y; },
      [](Real, Real) { return Real(1); }, [](Real, Real) { return Real(-1); });
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x * y; },
      [](Real, Real y) { return y; }, [](Real x, Real) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x / y; },
      [](Real, Real y) { return Real(1) / y; },
      [](Real x, Real y) { return -x / (y * y); });
}

Var add_scalar(const Var& a, Real c) {
  return unary_op(
      a, [c](Real x) { return x + c; }, [](Real, Real) { return Real(1); });
}

Var mul_scalar(const Var& a, Real c) {
  return unary_op(
      a, [c](Real x) { return x * c; }, [c](Real, Real) { return c; });
}

Var neg(const Var& a) { return mul_scalar(a, -1); }

Var exp(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::exp(x); },
      [](Real, Real y) { return y; });
}

Var log(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::log(x); },
      [](Real x, Real) { return Real(1) / x; });
}

Var sqrt(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::sqrt(x); },
      [](Real, Real y) { return Real(0.5) / y; });
}

Var tanh(const Var& a) {
  return unary_op(
      a, [](Real x) { return std::tanh(x); },
      [](Real, Real y) { return Real(1) - y * y; });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a,
      [](Real x) {
        return x >= 0 ? Real(1) / (Real(1) + std::exp(-x))
                      : std::exp(x) / (Real(1) + std::exp(x));
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Var relu(const Var& a) {
  return unary_op(
      a, [](Real x) { return x > 0 ? x : Real(0); },
      [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Var softplus(const Var& a) {
  return unary_op(
      a,
      [](Real x) {
        if (x > 30) return x;
        if (x < -30) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](Real x, Real) {
        return x >= 0 ? Real(1) / (Real(1) + std::exp(-x))
                      : std::exp(x) / (Real(1) + std::exp(x));
      });
}

Var square(const Var& a) {
  return unary_op(
      a, [](Real x) { return x * x; },
      [](Real x, Real) { return 2 * x; });
}

Var clamp(const Var& a, Real lo, Real hi) {
  return unary_op(
      a, [lo, hi](Real x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](Real x, Real) { return (x >= lo && x <= hi) ? Real(1) : Real(0); });
}

Var clamp_min(const Var& a, Real lo) {
  return unary_op(
      a, [lo](Real x) { return x < lo ? lo : x; },
      [lo](Real x, Real) { return x >= lo ? Real(1) : Real(0); });
}

Var sum(const Var& a) {
  TensorR v = TensorR::scalar(a->value.arr().sum());
  return make_node(std::move(v), {a}, [a](Node& self) {
    TensorR g = TensorR::full(a->value.shape(), self.grad[0]);
    a->accumulate(g);
  });
}

Var mean(const Var& a) {
  const Real inv = Real(1) / static_cast<Real>(a->value.size());
  TensorR v = TensorR::scalar(a->value.arr().sum() * inv);
  return make_node(std::move(v), {a}, [a, inv](Node& self) {
    TensorR g = TensorR::full(a->value.shape(), self.grad[0] * inv);
    a->accumulate(g);
  });
}

namespace {
Shape reduced_shape(const Shape& s, const std::vector<int>& axes, bool keepdims) {
  std::vector<bool> red(s.size(), false);
  for (int ax : axes) {
    check_shape(ax >= 0 && ax < static_cast<int>(s.size()), "bad reduce axis");
    red[static_cast<size_t>(ax)] = true;
  }
  Shape out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (red[i]) {
      if (keepdims) out.push_back(1);
    } else {
      out.push_back(s[i]);
    }
  }
  if (out.empty()) out.push_back(1);
  return out;
}
}  // namespace

Var sum_axes(const Var& a, const std::vector<int>& axes, bool keepdims) {
  const Shape& s = a->value.shape();
  Shape keep = reduced_shape(s, axes, true);
  TensorR acc = reduce_to_shape(a->value, keep);
  Shape out = reduced_shape(s, axes, keepdims);
  TensorR v = acc.reshaped(out);
  return make_node(std::move(v), {a}, [a, keep](Node& self) {
    TensorR g = self.grad.reshaped(keep);
    TensorR full = broadcast_binary(TensorR(a->value.shape()), g,
                                    [](Real, Real y) { return y; });
    a->accumulate(full);
  });
}

Var mean_axes(const Var& a, const std::vector<int>& axes, bool keepdims) {
  int64_t k = 1;
  for (int ax : axes) k *= a->value.dim(ax);
  return mul_scalar(sum_axes(a, axes, keepdims), Real(1) / static_cast<Real>(k));
}

Var reshape(const Var& a, Shape shape) {
  TensorR v = a->value.reshaped(shape);
  Shape orig = a->value.shape();
  return make_node(std::move(v), {a}, [a, orig](Node& self) {
    a->accumulate(self.grad.reshaped(orig));
  });
}

Var permute4(const Var& a, const std::array<int, 4>& perm) {
  check_shape(a->value.rank() == 4, "permute4 needs rank-4 input");
  const Shape& s = a->value.shape();
  Shape os{s[static_cast<size_t>(perm[0])], s[static_cast<size_t>(perm[1])],
           s[static_cast<size_t>(perm[2])], s[static_cast<size_t>(perm[3])]};
  auto apply = [](const TensorR& in, const std::array<int, 4>& p) {
    const Shape& is = in.shape();
    Shape outs{is[static_cast<size_t>(p[0])], is[static_cast<size_t>(p[1])],
               is[static_cast<size_t>(p[2])], is[static_cast<size_t>(p[3])]};
    TensorR out(outs);
    const auto ist = row_major_strides(is);
    int64_t idx[4];
    for (idx[0] = 0; idx[0] < outs[0]; ++idx[0])
      for (idx[1] = 0; idx[1] < outs[1]; ++idx[1])
        for (idx[2] = 0; idx[2] < outs[2]; ++idx[2])
          for (idx[3] = 0; idx[3] < outs[3]; ++idx[3]) {
            const int64_t src = idx[0] * ist[static_cast<size_t>(p[0])] +
                                idx[1] * ist[static_cast<size_t>(p[1])] +
                                idx[2] * ist[static_cast<size_t>(p[2])] +
                                idx[3] * ist[static_cast<size_t>(p[3])];
            const int64_t dst =
                ((idx[0] * outs[1] + idx[1]) * outs[2] + idx[2]) * outs[3] +
                idx[3];
            out[dst] = in[src];
          }
    return out;
  };
  TensorR v = apply(a->value, perm);
  // Inverse permutation for the backward pass.
  std::array<int, 4> inv{};
  for (int i = 0; i < 4; ++i) inv[static_cast<size_t>(perm[static_cast<size_t>(i)])] = i;
  return make_node(std::move(v), {a}, [a, inv, apply](Node& self) {
    a->accumulate(apply(self.grad, inv));
  });
}

Var concat(const std::vector<Var>& xs, int axis) {
  check_shape(!xs.empty(), "concat: empty input list");
  const Shape& s0 = xs[0]->value.shape();
  const int r = static_cast<int>(s0.size());
  check_shape(axis >= 0 && axis < r, "concat: bad axis");
  int total = 0;
  for (const auto& x : xs) {
    const Shape& s = x->value.shape();
    check_shape(static_cast<int>(s.size()) == r, "concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      check_shape(i == axis || s[static_cast<size_t>(i)] == s0[static_cast<size_t>(i)],
                  "concat: shape mismatch");
    total += s[static_cast<size_t>(axis)];
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = total;
  TensorR v(os);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= s0[static_cast<size_t>(i)];
  int64_t off = 0;
  std::vector<int64_t> offsets;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const int64_t span = x->value.dim(axis) * inner;
    for (int64_t o = 0; o < outer; ++o) {
      const Real* src = x->value.data() + o * span;
      Real* dst = v.data() + o * (static_cast<int64_t>(total) * inner) + off;
      std::copy(src, src + span, dst);
    }
    off += span;
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_node(
      std::move(v), parents,
      [xs, offsets, outer, inner, total](Node& self) {
        for (size_t k = 0; k < xs.size(); ++k) {
          if (!xs[k]->requires_grad) continue;
          TensorR g(xs[k]->value.shape());
          const int64_t seg = g.size() / outer;
          for (int64_t o = 0; o < outer; ++o) {
            const Real* src =
                self.grad.data() + o * (static_cast<int64_t>(total) * inner) +
                offsets[k];
            std::copy(src, src + seg, g.data() + o * seg);
          }
          xs[k]->accumulate(g);
        }
      });
}

Var slice(const Var& a, int axis, int start, int len) {
  const Shape& s = a->value.shape();
  const int r = static_cast<int>(s.size());
  check_shape(axis >= 0 && axis < r, "slice: bad axis");
  check_shape(start >= 0 && len > 0 && start + len <= s[static_cast<size_t>(axis)],
              "slice: out of range");
  Shape os = s;
  os[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= s[static_cast<size_t>(i)];
  const int64_t in_span = static_cast<int64_t>(s[static_cast<size_t>(axis)]) * inner;
  const int64_t out_span = static_cast<int64_t>(len) * inner;
  TensorR v(os);
  for (int64_t o = 0; o < outer; ++o) {
    const Real* src = a->value.data() + o * in_span + start * inner;
    std::copy(src, src + out_span, v.data() + o * out_span);
  }
  return make_node(std::move(v), {a},
                   [a, outer, inner, in_span, out_span, start](Node& self) {
                     TensorR g(a->value.shape());
                     for (int64_t o = 0; o < outer; ++o) {
                       const Real* src = self.grad.data() + o * out_span;
                       Real* dst = g.data() + o * in_span + start * inner;
                       for (int64_t i = 0; i < out_span; ++i) dst[i] += src[i];
                     }
                     a->accumulate(g);
                   });
}

Var softmax(const Var& a, const std::vector<int>& axes) {
  // Max over the softmax axes is treated as a constant shift; its gradient
  // contribution cancels exactly.
  Shape keep = reduced_shape(a->value.shape(), axes, true);
  TensorR mx(keep);
  mx.fill(-std::numeric_limits<Real>::infinity());
  {
    const Shape& s = a->value.shape();
    const int r = static_cast<int>(s.size());
    const auto st = aligned_strides(keep, s);
    std::vector<int64_t> coord(static_cast<size_t>(r), 0);
    int64_t ti = 0;
    for (int64_t i = 0; i < a->value.size(); ++i) {
      if (a->value[i] > mx[ti]) mx[ti] = a->value[i];
      for (int ax = r - 1; ax >= 0; --ax) {
        coord[static_cast<size_t>(ax)]++;
        ti += st[static_cast<size_t>(ax)];
        if (coord[static_cast<size_t>(ax)] < s[static_cast<size_t>(ax)]) break;
        ti -= st[static_cast<size_t>(ax)] * s[static_cast<size_t>(ax)];
        coord[static_cast<size_t>(ax)] = 0;
      }
    }
  }
  Var shifted = sub(a, constant(std::move(mx)));
  Var e = rpn::exp(shifted);
  Var denom = sum_axes(e, axes, true);
  return div(e, denom);
}

Var bmm(const Var& a, const Var& b) {
  check_shape(a->value.rank() == 3 && b->value.rank() == 3, "bmm: rank-3 inputs");
  const int B = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2);
  check_shape(b->value.dim(0) == B && b->value.dim(1) == k,
              "bmm: inner dims mismatch");
  const int n = b->value.dim(2);
  TensorR v(Shape{B, m, n});
  for (int i = 0; i < B; ++i) {
    CMapRM A(a->value.data() + static_cast<int64_t>(i) * m * k, m, k);
    CMapRM Bm(b->value.data() + static_cast<int64_t>(i) * k * n, k, n);
    MapRM O(v.data() + static_cast<int64_t>(i) * m * n, m, n);
    O.noalias() = A * Bm;
  }
  return make_node(std::move(v), {a, b}, [a, b, B, m, k, n](Node& self) {
    if (a->requires_grad) {
      TensorR ga(a->value.shape());
      for (int i = 0; i < B; ++i) {
        CMapRM G(self.grad.data() + static_cast<int64_t>(i) * m * n, m, n);
        CMapRM Bm(b->value.data() + static_cast<int64_t>(i) * k * n, k, n);
        MapRM GA(ga.data() + static_cast<int64_t>(i) * m * k, m, k);
        GA.noalias() = G * Bm.transpose();
      }
      a->accumulate(ga);
    }
    if (b->requires_grad) {
      TensorR gb(b->value.shape());
      for (int i = 0; i < B; ++i) {
        CMapRM G(self.grad.data() + static_cast<int64_t>(i) * m * n, m, n);
        CMapRM A(a->value.data() + static_cast<int64_t>(i) * m * k, m, k);
        MapRM GB(gb.data() + static_cast<int64_t>(i) * k * n, k, n);
        GB.noalias() = A.transpose() * G;
      }
      b->accumulate(gb);
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

struct ConvDims {
  int C, H, W;        // source feature map
  int kh, kw;         // kernel
  int oh, ow;         // sliding grid
  int stride, pad, dilation;
};

// col is (C*kh*kw) x (oh*ow), row-major.
void im2col(const Real* src, const ConvDims& d, Real* col) {
  const int64_t plane = static_cast<int64_t>(d.H) * d.W;
  int64_t row = 0;
  for (int c = 0; c < d.C; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx, ++row) {
        Real* out = col + row * (static_cast<int64_t>(d.oh) * d.ow);
        for (int oy = 0; oy < d.oh; ++oy) {
          const int y = oy * d.stride - d.pad + ky * d.dilation;
          if (y < 0 || y >= d.H) {
            for (int ox = 0; ox < d.ow; ++ox) out[oy * d.ow + ox] = 0;
            continue;
          }
          const Real* sp = src + c * plane + static_cast<int64_t>(y) * d.W;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int x = ox * d.stride - d.pad + kx * d.dilation;
            out[oy * d.ow + ox] = (x >= 0 && x < d.W) ? sp[x] : 0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates into dst (C x H x W).
void col2im(const Real* col, const ConvDims& d, Real* dst) {
  const int64_t plane = static_cast<int64_t>(d.H) * d.W;
  int64_t row = 0;
  for (int c = 0; c < d.C; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx, ++row) {
        const Real* in = col + row * (static_cast<int64_t>(d.oh) * d.ow);
        for (int oy = 0; oy < d.oh; ++oy) {
          const int y = oy * d.stride - d.pad + ky * d.dilation;
          if (y < 0 || y >= d.H) continue;
          Real* dp = dst + c * plane + static_cast<int64_t>(y) * d.W;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int x = ox * d.stride - d.pad + kx * d.dilation;
            if (x >= 0 && x < d.W) dp[x] += in[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dSpec& spec) {
  check_shape(x->value.rank() == 4 && w->value.rank() == 4,
              "conv2d: rank-4 input and weight required");
  const int N = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2),
            W = x->value.dim(3);
  const int Cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  check_shape(w->value.dim(1) == Cin, "conv2d: channel mismatch");
  if (b) check_shape(b->value.size() == Cout, "conv2d: bias size mismatch");
  const int oh =
      (H + 2 * spec.pad - spec.dilation * (kh - 1) - 1) / spec.stride + 1;
  const int ow =
      (W + 2 * spec.pad - spec.dilation * (kw - 1) - 1) / spec.stride + 1;
  check_shape(oh > 0 && ow > 0, "conv2d: empty output");
  const ConvDims d{Cin, H,  W,         kh,       kw,
                   oh,  ow, spec.stride, spec.pad, spec.dilation};
  const int K = Cin * kh * kw;
  const int64_t P = static_cast<int64_t>(oh) * ow;

  TensorR v(Shape{N, Cout, oh, ow});
  {
    std::vector<Real> col(static_cast<size_t>(K) * P);
    CMapRM Wm(w->value.data(), Cout, K);
    for (int n = 0; n < N; ++n) {
      im2col(x->value.data() + static_cast<int64_t>(n) * Cin * H * W, d,
             col.data());
      CMapRM C(col.data(), K, P);
      MapRM O(v.data() + static_cast<int64_t>(n) * Cout * P, Cout, P);
      O.noalias() = Wm * C;
      if (b)
        for (int c = 0; c < Cout; ++c) O.row(c).array() += b->value[c];
    }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  return make_node(std::move(v), parents, [x, w, b, d, N, Cout, K, P](Node& self) {
    std::vector<Real> col(static_cast<size_t>(K) * P);
    TensorR gx = x->requires_grad ? TensorR(x->value.shape()) : TensorR();
    TensorR gw = w->requires_grad ? TensorR(w->value.shape()) : TensorR();
    const int Cin = d.C, H = d.H, W = d.W;
    for (int n = 0; n < N; ++n) {
      CMapRM G(self.grad.data() + static_cast<int64_t>(n) * Cout * P, Cout, P);
      if (w->requires_grad || x->requires_grad) {
        if (w->requires_grad) {
          im2col(x->value.data() + static_cast<int64_t>(n) * Cin * H * W, d,
                 col.data());
          CMapRM C(col.data(), K, P);
          MapRM GW(gw.data(), Cout, K);
          GW.noalias() += G * C.transpose();
        }
        if (x->requires_grad) {
          MapRM Cg(col.data(), K, P);
          CMapRM Wm(w->value.data(), Cout, K);
          Cg.noalias() = Wm.transpose() * G;
          col2im(col.data(), d,
                 gx.data() + static_cast<int64_t>(n) * Cin * H * W);
        }
      }
    }
    if (x->requires_grad) x->accumulate(gx);
    if (w->requires_grad) w->accumulate(gw);
    if (b && b->requires_grad) {
      TensorR gb(b->value.shape());
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cout; ++c) {
          const Real* g = self.grad.data() +
                          (static_cast<int64_t>(n) * Cout + c) * P;
          Real s = 0;
          for (int64_t i = 0; i < P; ++i) s += g[i];
          gb[c] += s;
        }
      b->accumulate(gb);
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b,
                     const Conv2dSpec& spec) {
  check_shape(x->value.rank() == 4 && w->value.rank() == 4,
              "conv_transpose2d: rank-4 input and weight required");
  const int N = x->value.dim(0), Cin = x->value.dim(1), h = x->value.dim(2),
            ww = x->value.dim(3);
  check_shape(w->value.dim(0) == Cin, "conv_transpose2d: channel mismatch");
  const int Cout = w->value.dim(1), kh = w->value.dim(2), kw = w->value.dim(3);
  if (b) check_shape(b->value.size() == Cout, "conv_transpose2d: bias size");
  const int OH =
      (h - 1) * spec.stride - 2 * spec.pad + spec.dilation * (kh - 1) + 1 +
      spec.out_pad;
  const int OW =
      (ww - 1) * spec.stride - 2 * spec.pad + spec.dilation * (kw - 1) + 1 +
      spec.out_pad;
  check_shape(OH > 0 && OW > 0, "conv_transpose2d: empty output");
  // The sliding grid lives on the input; col2im scatters into the output.
  const ConvDims d{Cout, OH, OW,          kh,       kw,
                   h,    ww, spec.stride, spec.pad, spec.dilation};
  const int K2 = Cout * kh * kw;
  const int64_t hw = static_cast<int64_t>(h) * ww;

  TensorR v(Shape{N, Cout, OH, OW});
  {
    std::vector<Real> col(static_cast<size_t>(K2) * hw);
    CMapRM W2(w->value.data(), Cin, K2);
    for (int n = 0; n < N; ++n) {
      CMapRM X(x->value.data() + static_cast<int64_t>(n) * Cin * hw, Cin, hw);
      MapRM C(col.data(), K2, hw);
      C.noalias() = W2.transpose() * X;
      Real* out = v.data() + static_cast<int64_t>(n) * Cout * OH * OW;
      col2im(col.data(), d, out);
      if (b) {
        const int64_t plane = static_cast<int64_t>(OH) * OW;
        for (int c = 0; c < Cout; ++c)
          for (int64_t i = 0; i < plane; ++i) out[c * plane + i] += b->value[c];
      }
    }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  return make_node(std::move(v), parents, [x, w, b, d, N, Cin, K2, hw](Node& self) {
    const int Cout = d.C, OH = d.H, OW = d.W;
    std::vector<Real> col(static_cast<size_t>(K2) * hw);
    TensorR gx = x->requires_grad ? TensorR(x->value.shape()) : TensorR();
    TensorR gw = w->requires_grad ? TensorR(w->value.shape()) : TensorR();
    for (int n = 0; n < N; ++n) {
      im2col(self.grad.data() + static_cast<int64_t>(n) * Cout * OH * OW, d,
             col.data());
      CMapRM Cg(col.data(), K2, hw);
      if (x->requires_grad) {
        CMapRM W2(w->value.data(), Cin, K2);
        MapRM GX(gx.data() + static_cast<int64_t>(n) * Cin * hw, Cin, hw);
        GX.noalias() = W2 * Cg;
      }
      if (w->requires_grad) {
        CMapRM X(x->value.data() + static_cast<int64_t>(n) * Cin * hw, Cin, hw);
        MapRM GW(gw.data(), Cin, K2);
        GW.noalias() += X * Cg.transpose();
      }
    }
    if (x->requires_grad) x->accumulate(gx);
    if (w->requires_grad) w->accumulate(gw);
    if (b && b->requires_grad) {
      TensorR gb(b->value.shape());
      const int64_t plane = static_cast<int64_t>(OH) * OW;
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < Cout; ++c) {
          const Real* g = self.grad.data() +
                          (static_cast<int64_t>(n) * Cout + c) * plane;
          Real s = 0;
          for (int64_t i = 0; i < plane; ++i) s += g[i];
          gb[c] += s;
        }
      b->accumulate(gb);
    }
  });
}

Var straight_through_binary(const Var& soft) {
  TensorR v(soft->value.shape());
  for (int64_t i = 0; i < v.size(); ++i)
    v[i] = soft->value[i] > Real(0.5) ? Real(1) : Real(0);
  return make_node(std::move(v), {soft},
                   [soft](Node& self) { soft->accumulate(self.grad); });
}

Var detach(const Var& a) { return constant(a->value); }

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator/(const Var& a, const Var& b) { return div(a, b); }
Var operator+(const Var& a, Real c) { return add_scalar(a, c); }
Var operator-(const Var& a, Real c) { return add_scalar(a, -c); }
Var operator*(const Var& a, Real c) { return mul_scalar(a, c); }
Var operator*(Real c, const Var& a) { return mul_scalar(a, c); }
Var operator-(const Var& a) { return neg(a); }

Var mse(const Var& pred, const Var& target) {
  return mean(square(sub(pred, target)));
}

}  // namespace rpn
