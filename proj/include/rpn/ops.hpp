#pragma once

#include <array>

#include "rpn/autograd.hpp"

namespace rpn {

// Elementwise with numpy-style broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& a, Real c);
Var mul_scalar(const Var& a, Real c);
Var neg(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
// Pass-through gradient inside [lo, hi], zero outside.
Var clamp(const Var& a, Real lo, Real hi);
Var clamp_min(const Var& a, Real lo);

Var sum(const Var& a);
Var mean(const Var& a);
Var sum_axes(const Var& a, const std::vector<int>& axes, bool keepdims);
Var mean_axes(const Var& a, const std::vector<int>& axes, bool keepdims);

Var reshape(const Var& a, Shape shape);
Var permute4(const Var& a, const std::array<int, 4>& perm);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(const Var& a, int axis, int start, int len);

// Numerically stable softmax over the given axes (max subtracted as a
// constant).
Var softmax(const Var& a, const std::vector<int>& axes);

// Batched matmul: (B, m, k) x (B, k, n) -> (B, m, n).
Var bmm(const Var& a, const Var& b);

struct Conv2dSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  int out_pad = 0;  // transpose only
};

// x: (N, Cin, H, W), w: (Cout, Cin, kh, kw), b: (Cout) or null.
Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dSpec& spec);
// x: (N, Cin, h, w), w: (Cin, Cout, kh, kw), b: (Cout) or null.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b,
                     const Conv2dSpec& spec);

// Forward emits hard {0,1} at threshold 0.5; backward is identity to the
// soft input.
Var straight_through_binary(const Var& soft);

// Cuts the graph: value-only copy.
Var detach(const Var& a);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator+(const Var& a, Real c);
Var operator-(const Var& a, Real c);
Var operator*(const Var& a, Real c);
Var operator*(Real c, const Var& a);
Var operator-(const Var& a);

Var mse(const Var& pred, const Var& target);

}  // namespace rpn
