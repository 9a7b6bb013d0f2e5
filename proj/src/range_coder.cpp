#include "rpn/range_coder.hpp"

namespace rpn {

namespace {
constexpr uint32_t kTop = 1u << 24;
}

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    uint8_t byte = cache_;
    const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    do {
      out_.push_back(static_cast<char>(byte + carry));
      byte = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(static_cast<uint32_t>(low_) >> 24);
  }
  ++cache_size_;
  low_ = (static_cast<uint32_t>(low_)) << 8;
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq) {
  check_format(freq > 0 && cum + freq <= kProbTotal, "bad coder interval");
  range_ /= kProbTotal;
  low_ += static_cast<uint64_t>(cum) * range_;
  range_ *= freq;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

std::string RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= bytes_.size())
    throw FormatError("range decoder: stream truncated at byte " +
                      std::to_string(pos_));
  return static_cast<uint8_t>(bytes_[pos_++]);
}

uint32_t RangeDecoder::decode_target() {
  if (!primed_) {
    for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
    primed_ = true;
  }
  range_ /= kProbTotal;
  uint32_t t = static_cast<uint32_t>(code_ / range_);
  if (t >= kProbTotal) t = kProbTotal - 1;
  return t;
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
  code_ -= static_cast<uint64_t>(cum) * range_;
  range_ *= freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

}  // namespace rpn
