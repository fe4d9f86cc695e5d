#pragma once

#include <cstdint>
#include <vector>

namespace kmfv {

// Byte-oriented carry-less range coder (Subbotin style): 32-bit state,
// 16-bit total frequency, byte renormalization. decode(encode(s)) == s for
// any symbol stream; chunks terminate byte-aligned with a 4-byte flush.

constexpr std::uint32_t kRcTop = 1u << 24;
constexpr std::uint32_t kRcBot = 1u << 16;
constexpr std::uint32_t kCdfTotal = 1u << 16;

class RangeEncoder {
public:
  // cum/freq on the 16-bit CDF scale; freq >= 1, cum + freq <= 65536.
  void encode(std::uint32_t cum, std::uint32_t freq);
  void encode_bit(int bit);
  // Elias-gamma code for v >= 0 through the bit bypass.
  void encode_bypass_value(std::uint64_t v);
  std::vector<std::uint8_t> finish();

private:
  std::uint32_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
  explicit RangeDecoder(const std::uint8_t* data, std::size_t size);

  // Returns the CDF-scale offset of the next symbol; follow with consume().
  std::uint32_t decode_freq();
  void consume(std::uint32_t cum, std::uint32_t freq);
  int decode_bit();
  std::uint64_t decode_bypass_value();

private:
  std::uint8_t next_byte();

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::uint32_t low_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

} // namespace kmfv
