#include "rpn/entropy.hpp"

#include <algorithm>
#include <cmath>

namespace rpn {

namespace {
constexpr int32_t kDefaultBound = 30;
constexpr int32_t kMaxBound = 4095;
constexpr double kLikelihoodFloor = 1e-9;
const double kLn2 = std::log(2.0);
}  // namespace

TensorR quantize(const TensorR& y, QuantizerMode mode, Rng* rng) {
  TensorR out(y.shape());
  if (mode == QuantizerMode::kEvalRound) {
    for (int64_t i = 0; i < y.size(); ++i) out[i] = std::round(y[i]);
  } else {
    check_config(rng != nullptr, "train-noise quantizer needs an rng");
    for (int64_t i = 0; i < y.size(); ++i)
      out[i] = y[i] + (rng->uniform() - 0.5);
  }
  return out;
}

Var quantize_noise(const Var& y, Rng& rng) {
  TensorR noise(y->value.shape());
  for (int64_t i = 0; i < noise.size(); ++i) noise[i] = rng.uniform() - 0.5;
  return add(y, constant(std::move(noise)));
}

// ---------------------------------------------------------------------------
// Quantized tables and symbol coding

CdfTable quantize_pmf(const std::vector<double>& pmf, int32_t lo) {
  const int s = static_cast<int>(pmf.size());
  check_config(s >= 1, "empty pmf");
  const int slots = s + 1;  // escape appended
  check_config(static_cast<uint32_t>(slots) <= kProbTotal,
               "pmf support too wide for 16-bit precision");
  std::vector<int64_t> counts(static_cast<size_t>(slots), 1);
  for (int i = 0; i < s; ++i) {
    check_config(pmf[static_cast<size_t>(i)] >= 0, "negative pmf entry");
    counts[static_cast<size_t>(i)] = std::max<int64_t>(
        1, std::llround(pmf[static_cast<size_t>(i)] * kProbTotal));
  }
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  while (total != kProbTotal) {
    // Push the imbalance onto the largest slot; repeats only when the
    // largest slot cannot absorb the whole deficit.
    size_t argmax = 0;
    for (size_t i = 1; i < counts.size(); ++i)
      if (counts[i] > counts[argmax]) argmax = i;
    if (total < kProbTotal) {
      counts[argmax] += kProbTotal - total;
      total = kProbTotal;
    } else {
      const int64_t take = std::min(counts[argmax] - 1, total - kProbTotal);
      check_config(take > 0, "pmf support too wide to normalize");
      counts[argmax] -= take;
      total -= take;
    }
  }
  CdfTable t;
  t.lo = lo;
  t.cum.resize(static_cast<size_t>(slots) + 1, 0);
  for (int i = 0; i < slots; ++i)
    t.cum[static_cast<size_t>(i) + 1] =
        t.cum[static_cast<size_t>(i)] +
        static_cast<uint32_t>(counts[static_cast<size_t>(i)]);
  return t;
}

namespace {

void encode_raw32(RangeEncoder& enc, uint32_t u) {
  enc.encode(u >> 16, 1);
  enc.encode(u & 0xFFFFu, 1);
}

uint32_t decode_raw32(RangeDecoder& dec) {
  const uint32_t hi = dec.decode_target();
  dec.consume(hi, 1);
  const uint32_t lo = dec.decode_target();
  dec.consume(lo, 1);
  return (hi << 16) | lo;
}

uint32_t zigzag(int32_t v) {
  return (static_cast<uint32_t>(v) << 1) ^ static_cast<uint32_t>(v >> 31);
}

int32_t unzigzag(uint32_t u) {
  return static_cast<int32_t>(u >> 1) ^ -static_cast<int32_t>(u & 1);
}

}  // namespace

void encode_values(RangeEncoder& enc, const int32_t* vals, size_t n,
                   const CdfTable& table) {
  const int s = table.support_size();
  for (size_t i = 0; i < n; ++i) {
    const int64_t k = static_cast<int64_t>(vals[i]) - table.lo;
    if (k >= 0 && k < s) {
      enc.encode(table.cum[static_cast<size_t>(k)],
                 table.cum[static_cast<size_t>(k) + 1] -
                     table.cum[static_cast<size_t>(k)]);
    } else {
      enc.encode(table.cum[static_cast<size_t>(s)],
                 table.cum[static_cast<size_t>(s) + 1] -
                     table.cum[static_cast<size_t>(s)]);
      encode_raw32(enc, zigzag(vals[i]));
    }
  }
}

std::vector<int32_t> decode_values(RangeDecoder& dec, size_t n,
                                   const CdfTable& table) {
  const int s = table.support_size();
  std::vector<int32_t> out(n);
  for (size_t i = 0; i < n; ++i) {
    const uint32_t target = dec.decode_target();
    const auto it =
        std::upper_bound(table.cum.begin(), table.cum.end(), target);
    const int slot = static_cast<int>(it - table.cum.begin()) - 1;
    check_format(slot >= 0 && slot <= s, "range decoder: bad slot");
    dec.consume(table.cum[static_cast<size_t>(slot)],
                table.cum[static_cast<size_t>(slot) + 1] -
                    table.cum[static_cast<size_t>(slot)]);
    out[i] = slot < s ? table.lo + slot
                      : unzigzag(decode_raw32(dec));
  }
  return out;
}

std::string encode_tensor(const TensorR& yhat,
                          const std::vector<CdfTable>& tables) {
  check_shape(yhat.rank() == 4, "encode_tensor needs (N,C,h,w)");
  const int N = yhat.dim(0), C = yhat.dim(1);
  const int64_t plane = static_cast<int64_t>(yhat.dim(2)) * yhat.dim(3);
  check_shape(static_cast<int>(tables.size()) == C,
              "one cdf table per channel required");
  RangeEncoder enc;
  std::vector<int32_t> vals(static_cast<size_t>(plane));
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Real* src = yhat.data() + (static_cast<int64_t>(n) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i)
        vals[static_cast<size_t>(i)] =
            static_cast<int32_t>(std::llround(src[i]));
      encode_values(enc, vals.data(), vals.size(), tables[static_cast<size_t>(c)]);
    }
  return enc.finish();
}

TensorR decode_tensor(const std::string& bytes, const Shape& shape,
                      const std::vector<CdfTable>& tables) {
  check_shape(shape.size() == 4, "decode_tensor needs (N,C,h,w)");
  const int N = shape[0], C = shape[1];
  const int64_t plane = static_cast<int64_t>(shape[2]) * shape[3];
  check_shape(static_cast<int>(tables.size()) == C,
              "one cdf table per channel required");
  RangeDecoder dec(bytes);
  TensorR out(shape);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      auto vals = decode_values(dec, static_cast<size_t>(plane),
                                tables[static_cast<size_t>(c)]);
      Real* dst = out.data() + (static_cast<int64_t>(n) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i)
        dst[i] = static_cast<Real>(vals[static_cast<size_t>(i)]);
    }
  return out;
}

// ---------------------------------------------------------------------------
// SymbolModel

std::vector<double> SymbolModel::pmf_row(int ch) const {
  const int32_t lo = support_lo(ch), hi = support_hi(ch);
  std::vector<double> row;
  row.reserve(static_cast<size_t>(hi - lo + 1));
  for (int32_t k = lo; k <= hi; ++k) row.push_back(pmf(ch, k));
  return row;
}

CdfTable SymbolModel::cdf_table(int ch) const {
  return quantize_pmf(pmf_row(ch), support_lo(ch));
}

// ---------------------------------------------------------------------------
// FactorizedPrior

FactorizedPrior::FactorizedPrior(ParamStore& store, const std::string& prefix,
                                 int channels, Rng& rng)
    : channels_(channels), dims_{1, 3, 3, 1} {
  const int stages = static_cast<int>(dims_.size()) - 1;
  const double scale = std::pow(10.0, 1.0 / stages);
  for (int k = 0; k < stages; ++k) {
    const int din = dims_[static_cast<size_t>(k)];
    const int dout = dims_[static_cast<size_t>(k) + 1];
    // softplus(raw) ~= 1/(scale*dout) at init, the usual spread-out start.
    const double raw = std::log(std::expm1(1.0 / (scale * dout)));
    TensorR m = TensorR::full({channels, dout, din}, raw);
    mats_.push_back(&store.add(prefix + ".h" + std::to_string(k), std::move(m)));
    TensorR b = TensorR::random_uniform({channels, dout, 1}, rng, -0.5, 0.5);
    biases_.push_back(
        &store.add(prefix + ".b" + std::to_string(k), std::move(b)));
    if (k + 1 < stages) {
      gains_.push_back(&store.add(prefix + ".a" + std::to_string(k),
                                  TensorR(Shape{channels, dout, 1})));
    }
  }
  TensorR bd(Shape{channels, 2});
  for (int c = 0; c < channels; ++c) {
    bd[c * 2] = -kDefaultBound;
    bd[c * 2 + 1] = kDefaultBound;
  }
  bounds_ = &store.add(prefix + ".bounds", std::move(bd));
  bounds_->trainable = false;
}

Var FactorizedPrior::logits_chain(const Var& x) const {
  Var h = x;
  const int stages = static_cast<int>(mats_.size());
  for (int k = 0; k < stages; ++k) {
    Var m = softplus(leaf_var(*mats_[static_cast<size_t>(k)]));
    h = add(bmm(m, h), leaf_var(*biases_[static_cast<size_t>(k)]));
    if (k + 1 < stages) {
      Var a = rpn::tanh(leaf_var(*gains_[static_cast<size_t>(k)]));
      h = add(h, mul(a, rpn::tanh(h)));
    }
  }
  return h;
}

Var FactorizedPrior::bits(const Var& y_noisy) const {
  check_shape(y_noisy->value.rank() == 4 && y_noisy->value.dim(1) == channels_,
              "prior bits: channel mismatch");
  const int N = y_noisy->value.dim(0);
  const int64_t m = static_cast<int64_t>(N) * y_noisy->value.dim(2) *
                    y_noisy->value.dim(3);
  Var flat = reshape(permute4(y_noisy, {1, 0, 2, 3}),
                     {channels_, 1, static_cast<int>(m)});
  Var upper = sigmoid(logits_chain(add_scalar(flat, 0.5)));
  Var lower = sigmoid(logits_chain(add_scalar(flat, -0.5)));
  Var p = clamp_min(sub(upper, lower), kLikelihoodFloor);
  return mul_scalar(sum(rpn::log(p)), -1.0 / kLn2);
}

std::vector<double> FactorizedPrior::cdf(
    int ch, const std::vector<double>& xs) const {
  NoGradGuard ng;
  TensorR q(Shape{1, 1, static_cast<int>(xs.size())});
  for (size_t i = 0; i < xs.size(); ++i) q[static_cast<int64_t>(i)] = xs[i];
  Var h = constant(std::move(q));
  const int stages = static_cast<int>(mats_.size());
  for (int k = 0; k < stages; ++k) {
    Var m = softplus(slice(leaf_var(*mats_[static_cast<size_t>(k)]), 0, ch, 1));
    Var b = slice(leaf_var(*biases_[static_cast<size_t>(k)]), 0, ch, 1);
    h = add(bmm(m, h), b);
    if (k + 1 < stages) {
      Var a = rpn::tanh(
          slice(leaf_var(*gains_[static_cast<size_t>(k)]), 0, ch, 1));
      h = add(h, mul(a, rpn::tanh(h)));
    }
  }
  Var s = sigmoid(h);
  std::vector<double> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) out[i] = s->value[static_cast<int64_t>(i)];
  return out;
}

int32_t FactorizedPrior::support_lo(int ch) const {
  return static_cast<int32_t>(bounds_->value[ch * 2]);
}

int32_t FactorizedPrior::support_hi(int ch) const {
  return static_cast<int32_t>(bounds_->value[ch * 2 + 1]);
}

double FactorizedPrior::pmf(int ch, int32_t k) const {
  const int32_t lo = support_lo(ch), hi = support_hi(ch);
  check_config(k >= lo && k <= hi, "pmf query outside support");
  auto c = cdf(ch, {k - 0.5, k + 0.5});
  double p;
  if (lo == hi)
    p = 1.0;
  else if (k == lo)
    p = c[1];
  else if (k == hi)
    p = 1.0 - c[0];
  else
    p = c[1] - c[0];
  return std::max(p, kLikelihoodFloor);
}

void FactorizedPrior::update_bounds(const TensorR& y) {
  check_shape(y.rank() == 4 && y.dim(1) == channels_,
              "update_bounds: channel mismatch");
  const int N = y.dim(0), C = y.dim(1);
  const int64_t plane = static_cast<int64_t>(y.dim(2)) * y.dim(3);
  for (int c = 0; c < C; ++c) {
    Real mn = bounds_->value[c * 2], mx = bounds_->value[c * 2 + 1];
    for (int n = 0; n < N; ++n) {
      const Real* src = y.data() + (static_cast<int64_t>(n) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        mn = std::min(mn, std::floor(src[i]) - 2);
        mx = std::max(mx, std::ceil(src[i]) + 2);
      }
    }
    bounds_->value[c * 2] = std::max<Real>(mn, -kMaxBound);
    bounds_->value[c * 2 + 1] = std::min<Real>(mx, kMaxBound);
  }
}

int64_t FactorizedPrior::parameter_count() const {
  int64_t n = bounds_->value.size();
  for (auto* p : mats_) n += p->value.size();
  for (auto* p : biases_) n += p->value.size();
  for (auto* p : gains_) n += p->value.size();
  return n;
}

// ---------------------------------------------------------------------------

double estimate_rate(const TensorR& yhat, const SymbolModel& model) {
  check_shape(yhat.rank() == 4 && yhat.dim(1) == model.channels(),
              "estimate_rate: channel mismatch");
  const int N = yhat.dim(0), C = yhat.dim(1);
  const int64_t plane = static_cast<int64_t>(yhat.dim(2)) * yhat.dim(3);
  double bits = 0;
  for (int c = 0; c < C; ++c) {
    const int32_t lo = model.support_lo(c), hi = model.support_hi(c);
    const auto row = model.pmf_row(c);
    std::vector<double> nbits(row.size());
    for (size_t i = 0; i < row.size(); ++i) nbits[i] = -std::log2(row[i]);
    for (int n = 0; n < N; ++n) {
      const Real* src = yhat.data() + (static_cast<int64_t>(n) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const int64_t k = std::llround(src[i]);
        if (k >= lo && k <= hi)
          bits += nbits[static_cast<size_t>(k - lo)];
        else
          bits += kProbBits + 32;  // escape estimate
      }
    }
  }
  return bits;
}

double ideal_bits(const std::vector<int32_t>& symbols,
                  const std::vector<double>& pmf, int32_t lo) {
  double bits = 0;
  for (int32_t s : symbols) {
    const int64_t k = static_cast<int64_t>(s) - lo;
    check_config(k >= 0 && k < static_cast<int64_t>(pmf.size()),
                 "symbol outside pmf");
    bits += -std::log2(pmf[static_cast<size_t>(k)]);
  }
  return bits;
}

RateReport accumulate_rates(const std::vector<double>& per_level_bits,
                            int orig_h, int orig_w) {
  RateReport r;
  const double px = static_cast<double>(orig_h) * orig_w;
  check_config(px > 0, "accumulate_rates: empty image");
  double acc = 0;
  for (double b : per_level_bits) {
    check_config(b >= 0, "negative per-level bits");
    acc += b;
    r.self_bits.push_back(b);
    r.cumulative_bits.push_back(acc);
    r.bpp.push_back(acc / px);
  }
  return r;
}

}  // namespace rpn
