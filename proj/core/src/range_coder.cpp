#include "kmfv/range_coder.hpp"

#include "kmfv/errors.hpp"

namespace kmfv {

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
  if (freq == 0 || cum + freq > kCdfTotal) {
    throw InternalError("RangeEncoder: invalid cum/freq");
  }
  range_ /= kCdfTotal;
  low_ += cum * range_;
  range_ *= freq;
  while ((low_ ^ (low_ + range_)) < kRcTop ||
         (range_ < kRcBot && ((range_ = (0u - low_) & (kRcBot - 1)), true))) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeEncoder::encode_bit(int bit) {
  encode(bit ? kCdfTotal / 2 : 0, kCdfTotal / 2);
}

void RangeEncoder::encode_bypass_value(std::uint64_t v) {
  const std::uint64_t x = v + 1;
  int k = 0;
  while ((x >> (k + 1)) != 0) ++k;
  for (int i = 0; i < k; ++i) encode_bit(1);
  encode_bit(0);
  for (int i = k - 1; i >= 0; --i) encode_bit(static_cast<int>((x >> i) & 1));
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 4; ++i) {
    out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
    low_ <<= 8;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::uint8_t* data, std::size_t size)
    : data_(data), size_(size) {
  if (size < 4) throw DataError("range decoder: truncated payload");
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  // Reads past the flushed tail decode as zero; symbol counts and frequency
  // checks catch malformed streams.
  return pos_ < size_ ? data_[pos_++] : 0;
}

std::uint32_t RangeDecoder::decode_freq() {
  range_ /= kCdfTotal;
  const std::uint32_t f = (code_ - low_) / range_;
  if (f >= kCdfTotal) throw DataError("range decoder: corrupt payload");
  return f;
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
  low_ += cum * range_;
  range_ *= freq;
  while ((low_ ^ (low_ + range_)) < kRcTop ||
         (range_ < kRcBot && ((range_ = (0u - low_) & (kRcBot - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

int RangeDecoder::decode_bit() {
  const std::uint32_t f = decode_freq();
  const int bit = f >= kCdfTotal / 2 ? 1 : 0;
  consume(bit ? kCdfTotal / 2 : 0, kCdfTotal / 2);
  return bit;
}

std::uint64_t RangeDecoder::decode_bypass_value() {
  int k = 0;
  while (decode_bit() == 1) {
    if (++k > 63) throw DataError("range decoder: bypass length overflow");
  }
  std::uint64_t x = 1;
  for (int i = 0; i < k; ++i) {
    x = (x << 1) | static_cast<std::uint64_t>(decode_bit());
  }
  return x - 1;
}

} // namespace kmfv
