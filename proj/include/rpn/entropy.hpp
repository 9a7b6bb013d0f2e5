#pragma once

#include <vector>

#include "rpn/ops.hpp"
#include "rpn/random.hpp"
#include "rpn/range_coder.hpp"

namespace rpn {

enum class QuantizerMode { kTrainNoise, kEvalRound };

// kTrainNoise adds i.i.d. uniform noise in [-0.5, 0.5); kEvalRound rounds
// half away from zero. rng may be null for kEvalRound.
TensorR quantize(const TensorR& y, QuantizerMode mode, Rng* rng);

// Differentiable training-time surrogate: y plus constant uniform noise.
Var quantize_noise(const Var& y, Rng& rng);

// Quantized cumulative frequency table for the range coder. Slots cover the
// contiguous support [lo, lo+S) plus one trailing escape slot; counts sum to
// kProbTotal with every slot >= 1.
struct CdfTable {
  int32_t lo = 0;
  std::vector<uint32_t> cum;  // size S+2: cum[0]=0 .. cum[S+1]=kProbTotal

  int support_size() const { return static_cast<int>(cum.size()) - 2; }
};

// pmf over the support (escape excluded; any missing mass is given to the
// escape slot, and every slot keeps at least one count).
CdfTable quantize_pmf(const std::vector<double>& pmf, int32_t lo);

// Values inside the support are coded directly; outliers cost one escape
// symbol plus 32 raw bits.
void encode_values(RangeEncoder& enc, const int32_t* vals, size_t n,
                   const CdfTable& table);
std::vector<int32_t> decode_values(RangeDecoder& dec, size_t n,
                                   const CdfTable& table);

// Convenience: whole-tensor round trip with per-channel tables.
std::string encode_tensor(const TensorR& yhat,
                          const std::vector<CdfTable>& tables);
TensorR decode_tensor(const std::string& bytes, const Shape& shape,
                      const std::vector<CdfTable>& tables);

// Minimal interface for things that expose an integer symbol distribution.
class SymbolModel {
 public:
  virtual ~SymbolModel() = default;
  virtual int channels() const = 0;
  virtual int32_t support_lo(int ch) const = 0;
  virtual int32_t support_hi(int ch) const = 0;
  // pmf over [lo, hi], tails folded into the edge symbols so the support
  // sums to one.
  virtual double pmf(int ch, int32_t k) const = 0;
  std::vector<double> pmf_row(int ch) const;
  CdfTable cdf_table(int ch) const;
};

// Learned univariate density per channel: a stack of monotone nonlinear
// stages ending in a sigmoid, so the CDF is monotone by construction.
class FactorizedPrior : public SymbolModel {
 public:
  FactorizedPrior() = default;
  FactorizedPrior(ParamStore& store, const std::string& prefix, int channels,
                  Rng& rng);

  int channels() const override { return channels_; }
  int32_t support_lo(int ch) const override;
  int32_t support_hi(int ch) const override;
  double pmf(int ch, int32_t k) const override;

  // CDF at arbitrary real points for one channel (value-only path).
  std::vector<double> cdf(int ch, const std::vector<double>& xs) const;

  // Total bits of a noisy tensor (N,C,h,w) under the continuous relaxation;
  // differentiable wrt both the tensor and the prior parameters.
  Var bits(const Var& y_noisy) const;

  // Expands per-channel integer bounds to cover y, with a +/-2 margin.
  void update_bounds(const TensorR& y);

  int64_t parameter_count() const;

 private:
  Var logits_chain(const Var& x) const;  // (C,1,M) -> (C,1,M)

  int channels_ = 0;
  std::vector<int> dims_;
  std::vector<Parameter*> mats_, biases_, gains_;
  Parameter* bounds_ = nullptr;  // (C,2) non-trainable, checkpointed state
};

// Bits of an integer-valued tensor under the model's integer pmf, matching
// what the range coder pays up to table quantization: support symbols use
// the model pmf, outliers use the escape estimate (16 + 32 bits).
double estimate_rate(const TensorR& yhat, const SymbolModel& model);

// Entropy in bits of symbols drawn by index from an explicit pmf.
double ideal_bits(const std::vector<int32_t>& symbols,
                  const std::vector<double>& pmf, int32_t lo);

struct RateReport {
  std::vector<double> self_bits;
  std::vector<double> cumulative_bits;
  std::vector<double> bpp;
};

// cumulative[l] = sum of per-level bits up to l; bpp relative to the
// original image dims.
RateReport accumulate_rates(const std::vector<double>& per_level_bits,
                            int orig_h, int orig_w);

}  // namespace rpn
