#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "h4vdm/errors.hpp"

namespace h4vdm::h264 {

// MSB-first bit reader over an RBSP byte buffer.
class BitReader {
 public:
  explicit BitReader(std::span<const uint8_t> data) : data_(data) {}

  size_t bit_pos() const { return pos_; }
  size_t bits_left() const { return data_.size() * 8 - pos_; }

  uint32_t read_bit() {
    if (pos_ >= data_.size() * 8) throw BitstreamExhausted("bit reader exhausted");
    uint32_t b = (data_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1u;
    ++pos_;
    return b;
  }

  uint32_t read_bits(int n) {
    uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | read_bit();
    return v;
  }

  void skip_bits(int n) {
    if (bits_left() < static_cast<size_t>(n)) throw BitstreamExhausted("bit reader exhausted");
    pos_ += n;
  }

  // Exp-Golomb ue(v): 2^n - 1 + read(n) after n leading zeros.
  uint32_t read_ue() {
    int zeros = 0;
    while (read_bit() == 0) {
      if (++zeros > 31) throw BitstreamExhausted("ue(v) prefix too long");
    }
    uint32_t suffix = zeros ? read_bits(zeros) : 0;
    return (1u << zeros) - 1 + suffix;
  }

  // Exp-Golomb se(v): codeNum k -> (-1)^(k+1) * ceil(k/2).
  int32_t read_se() {
    uint32_t k = read_ue();
    int32_t mag = static_cast<int32_t>((k + 1) / 2);
    return (k & 1) ? mag : -mag;
  }

 private:
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

inline uint32_t read_ue(BitReader& bits) { return bits.read_ue(); }
inline int32_t read_se(BitReader& bits) { return bits.read_se(); }

}  // namespace h4vdm::h264
