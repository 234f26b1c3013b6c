#pragma once

#include <cstdint>
#include <vector>

#include "ddcm/error.hpp"

namespace ddcm {

// Big-endian bit packing: the first bit written is the most significant bit
// of byte 0; multi-bit fields are written most significant bit first.
class BitWriter {
 public:
  void put(std::uint64_t value, unsigned width) {
    if (width > 64) throw InvalidArgument("bit field wider than 64");
    if (width < 64 && (value >> width) != 0) throw InvalidArgument("value does not fit bit field");
    for (unsigned b = width; b-- > 0;) push_bit(((value >> b) & 1u) != 0);
  }

  void push_bit(bool bit) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
    ++bits_;
  }

  std::uint64_t bit_count() const { return bits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t bits_ = 0;
};

class BitReader {
 public:
  BitReader(const std::vector<std::uint8_t>& bytes, std::uint64_t bit_count)
      : bytes_(bytes), bits_(bit_count) {
    if (bytes.size() * 8 < bit_count) throw TruncatedStream("payload shorter than its bit count");
  }

  std::uint64_t get(unsigned width) {
    if (width > 64) throw InvalidArgument("bit field wider than 64");
    if (bits_ - pos_ < width) throw TruncatedStream("payload ends inside a field");
    std::uint64_t v = 0;
    for (unsigned b = 0; b < width; ++b) {
      const bool bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
      v = (v << 1) | static_cast<std::uint64_t>(bit);
      ++pos_;
    }
    return v;
  }

  std::uint64_t remaining() const { return bits_ - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::uint64_t bits_;
  std::uint64_t pos_ = 0;
};

// ceil(log2(k)); 0 for k == 1.
inline unsigned bits_for(std::uint64_t k) {
  if (k == 0) throw InvalidArgument("alphabet size must be positive");
  unsigned bits = 0;
  while ((std::uint64_t{1} << bits) < k) ++bits;
  return bits;
}

}  // namespace ddcm
