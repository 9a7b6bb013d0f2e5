#pragma once

#include "rpn/image.hpp"

namespace rpn {

// 10*log10(peak^2/MSE) with pixels mapped to the 8-bit convention
// (peak defaults to 255). Identical images return +infinity.
double psnr(const Image& a, const Image& b, double peak = 255.0);

// Multi-scale SSIM on luma: 11x11 Gaussian (sigma 1.5), valid windows,
// 2x2 mean pooling between scales. Uses as many of the standard five
// scales as fit (min dim >= 11), renormalizing the standard exponents.
double ms_ssim(const Image& a, const Image& b);

struct RdPoint {
  int level = 0;
  double bpp = 0;
  double psnr = 0;
  double ms_ssim = 0;
};

struct RdCurve {
  std::string label;
  std::vector<RdPoint> points;  // ascending bpp
};

enum class BdMetric { kPsnr, kMsSsim };

// Bjontegaard delta rate of `test` against `anchor` in percent: a cubic
// fit of log10(rate) against quality, integrated over the shared quality
// range. MS-SSIM quality is mapped to -10*log10(1-s).
double bd_rate(const RdCurve& anchor, const RdCurve& test, BdMetric metric);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace rpn
