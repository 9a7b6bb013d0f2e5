#include "rpn/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rpn {

double psnr(const Image& a, const Image& b, double peak) {
  check_shape(a.height == b.height && a.width == b.width,
              "psnr: image dims differ");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = (a.data[i] - b.data[i]) * 255.0;
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

Plane luma_plane(const Image& img) {
  Plane p;
  p.h = img.height;
  p.w = img.width;
  p.v.resize(static_cast<size_t>(p.h) * p.w);
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x)
      p.v[static_cast<size_t>(y) * p.w + x] =
          255.0 * (0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                   0.114 * img.at(2, y, x));
  return p;
}

Plane half(const Plane& p) {
  Plane o;
  o.h = p.h / 2;
  o.w = p.w / 2;
  o.v.resize(static_cast<size_t>(o.h) * o.w);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x)
      o.v[static_cast<size_t>(y) * o.w + x] =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                  p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
  return o;
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(11);
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    k[static_cast<size_t>(i)] = std::exp(-d * d / (2 * 1.5 * 1.5));
    sum += k[static_cast<size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Gaussian-filtered plane over valid 11x11 windows (separable).
Plane blur_valid(const Plane& p, const std::vector<double>& k) {
  Plane mid;
  mid.h = p.h;
  mid.w = p.w - 10;
  mid.v.assign(static_cast<size_t>(mid.h) * mid.w, 0.0);
  for (int y = 0; y < mid.h; ++y)
    for (int x = 0; x < mid.w; ++x) {
      double acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[static_cast<size_t>(i)] * p.at(y, x + i);
      mid.v[static_cast<size_t>(y) * mid.w + x] = acc;
    }
  Plane out;
  out.h = p.h - 10;
  out.w = mid.w;
  out.v.assign(static_cast<size_t>(out.h) * out.w, 0.0);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[static_cast<size_t>(i)] * mid.at(y + i, x);
      out.v[static_cast<size_t>(y) * out.w + x] = acc;
    }
  return out;
}

Plane pointwise_mul(const Plane& a, const Plane& b) {
  Plane o = a;
  for (size_t i = 0; i < o.v.size(); ++i) o.v[i] *= b.v[i];
  return o;
}

// Returns {mean luminance term, mean contrast-structure term}.
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b) {
  static const std::vector<double> k = gaussian_kernel();
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);
  Plane mu_a = blur_valid(a, k);
  Plane mu_b = blur_valid(b, k);
  Plane aa = blur_valid(pointwise_mul(a, a), k);
  Plane bb = blur_valid(pointwise_mul(b, b), k);
  Plane ab = blur_valid(pointwise_mul(a, b), k);
  double lum = 0, cs = 0;
  for (size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma;
    const double vb = bb.v[i] - mb * mb;
    const double cab = ab.v[i] - ma * mb;
    lum += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    cs += (2 * cab + c2) / (va + vb + c2);
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {lum / n, cs / n};
}

}  // namespace

double ms_ssim(const Image& a, const Image& b) {
  check_shape(a.height == b.height && a.width == b.width,
              "ms_ssim: image dims differ");
  check_config(std::min(a.height, a.width) >= 11,
               "ms_ssim needs at least an 11x11 image");
  static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int scales = 1;
  for (int s = std::min(a.height, a.width); scales < 5 && s / 2 >= 11; ++scales)
    s /= 2;
  double wsum = 0;
  for (int i = 0; i < scales; ++i) wsum += kWeights[i];

  Plane pa = luma_plane(a), pb = luma_plane(b);
  double score = 1.0;
  for (int s = 0; s < scales; ++s) {
    auto [lum, cs] = ssim_terms(pa, pb);
    const double w = kWeights[s] / wsum;
    if (s + 1 == scales)
      score *= std::pow(std::max(0.0, lum * cs), w);
    else
      score *= std::pow(std::max(0.0, cs), w);
    if (s + 1 < scales) {
      pa = half(pa);
      pb = half(pb);
    }
  }
  return score;
}

namespace {

std::vector<double> quality_values(const RdCurve& c, BdMetric metric) {
  std::vector<double> q;
  for (const auto& p : c.points) {
    if (metric == BdMetric::kPsnr) {
      q.push_back(p.psnr);
    } else {
      check_config(p.ms_ssim < 1.0, "MS-SSIM of 1 cannot be mapped to dB");
      q.push_back(-10.0 * std::log10(1.0 - p.ms_ssim));
    }
  }
  return q;
}

struct CubicFit {
  // coefficients in the centered variable t = (q - mid) / span
  Eigen::Vector4d coef;
  double mid = 0, span = 1;

  double integral(double qa, double qb) const {
    auto F = [this](double q) {
      const double t = (q - mid) / span;
      return span * (coef[0] * t + coef[1] * t * t / 2 + coef[2] * t * t * t / 3 +
                     coef[3] * t * t * t * t / 4);
    };
    return F(qb) - F(qa);
  }
};

CubicFit fit_log_rate(const std::vector<double>& quality,
                      const std::vector<double>& log_rate) {
  const int n = static_cast<int>(quality.size());
  CubicFit fit;
  const auto [mn, mx] = std::minmax_element(quality.begin(), quality.end());
  fit.mid = (*mn + *mx) / 2;
  fit.span = std::max(1e-9, (*mx - *mn) / 2);
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double t = (quality[static_cast<size_t>(i)] - fit.mid) / fit.span;
    A(i, 0) = 1;
    A(i, 1) = t;
    A(i, 2) = t * t;
    A(i, 3) = t * t * t;
    y(i) = log_rate[static_cast<size_t>(i)];
  }
  fit.coef = A.colPivHouseholderQr().solve(y);
  return fit;
}

}  // namespace

double bd_rate(const RdCurve& anchor, const RdCurve& test, BdMetric metric) {
  check_config(anchor.points.size() >= 4 && test.points.size() >= 4,
               "bd_rate needs at least four points per curve");
  for (const RdCurve* c : {&anchor, &test}) {
    for (size_t i = 1; i < c->points.size(); ++i)
      check_config(c->points[i].bpp > c->points[i - 1].bpp,
                   "bd_rate: bpp must be strictly increasing");
  }
  auto qa = quality_values(anchor, metric);
  auto qt = quality_values(test, metric);
  for (const auto* q : {&qa, &qt})
    for (size_t i = 1; i < q->size(); ++i)
      check_config((*q)[i] > (*q)[i - 1],
                   "bd_rate: quality must increase with rate");
  std::vector<double> ra, rt;
  for (const auto& p : anchor.points) ra.push_back(std::log10(p.bpp));
  for (const auto& p : test.points) rt.push_back(std::log10(p.bpp));

  const double lo = std::max(qa.front(), qt.front());
  const double hi = std::min(qa.back(), qt.back());
  check_config(hi > lo, "bd_rate: no overlapping quality range");

  CubicFit fa = fit_log_rate(qa, ra);
  CubicFit ft = fit_log_rate(qt, rt);
  const double delta = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
  return 100.0 * (std::pow(10.0, delta) - 1.0);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  check_config(a.size() == b.size() && a.size() >= 2,
               "spearman needs two equally sized samples");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&v](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2 + 1;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(ra.size());
  mb /= static_cast<double>(rb.size());
  double num = 0, va = 0, vb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return 0;
  return num / std::sqrt(va * vb);
}

}  // namespace rpn
