#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "rpn/common.hpp"

namespace rpn {

// 32-bit renormalizing range coder with carry propagation through a byte
// cache. Frequencies are 16-bit: cum/freq are relative to a fixed total of
// 1<<16. Renormalization emits the most significant byte first.
inline constexpr int kProbBits = 16;
inline constexpr uint32_t kProbTotal = 1u << kProbBits;

class RangeEncoder {
 public:
  void encode(uint32_t cum, uint32_t freq);
  // Flushes the final state; the encoder is spent afterwards.
  std::string finish();

 private:
  void shift_low();

  std::string out_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::string_view bytes) : bytes_(bytes) {}

  // Scaled value in [0, kProbTotal); locate the symbol whose [cum, cum+freq)
  // covers it, then call consume with that interval.
  uint32_t decode_target();
  void consume(uint32_t cum, uint32_t freq);

  size_t position() const { return pos_; }

 private:
  uint8_t next_byte();

  std::string_view bytes_;
  size_t pos_ = 0;
  uint64_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  bool primed_ = false;
};

}  // namespace rpn
