#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace ddcm {

// ChaCha20 block function in the original 64-bit-counter / 64-bit-nonce
// layout: state words 12..13 hold the block counter (low word first),
// words 14..15 the nonce.
class ChaCha20 {
 public:
  using Key = std::array<std::uint8_t, 32>;

  explicit ChaCha20(const Key& key, std::uint64_t nonce = 0) {
    for (int w = 0; w < 8; ++w) key_[w] = load_le32(key.data() + 4 * w);
    nonce_[0] = static_cast<std::uint32_t>(nonce);
    nonce_[1] = static_cast<std::uint32_t>(nonce >> 32);
  }

  // 64-byte keystream block for the given counter, as 16 little-endian words.
  std::array<std::uint32_t, 16> block_words(std::uint64_t counter) const {
    std::array<std::uint32_t, 16> input{
        0x61707865u, 0x3320646eu, 0x79622d32u, 0x6b206574u,  // "expand 32-byte k"
        key_[0],     key_[1],     key_[2],     key_[3],
        key_[4],     key_[5],     key_[6],     key_[7],
        static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
        nonce_[0],   nonce_[1]};
    std::array<std::uint32_t, 16> x = input;
    for (int round = 0; round < 10; ++round) {
      quarter(x, 0, 4, 8, 12);
      quarter(x, 1, 5, 9, 13);
      quarter(x, 2, 6, 10, 14);
      quarter(x, 3, 7, 11, 15);
      quarter(x, 0, 5, 10, 15);
      quarter(x, 1, 6, 11, 12);
      quarter(x, 2, 7, 8, 13);
      quarter(x, 3, 4, 9, 14);
    }
    for (int w = 0; w < 16; ++w) x[w] += input[w];
    return x;
  }

  // Same block serialised to bytes (little-endian words).
  std::array<std::uint8_t, 64> block_bytes(std::uint64_t counter) const {
    const auto words = block_words(counter);
    std::array<std::uint8_t, 64> out{};
    for (int w = 0; w < 16; ++w) {
      for (int b = 0; b < 4; ++b) out[4 * w + b] = static_cast<std::uint8_t>(words[w] >> (8 * b));
    }
    return out;
  }

 private:
  static std::uint32_t load_le32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  static std::uint32_t rotl(std::uint32_t v, int c) { return (v << c) | (v >> (32 - c)); }

  static void quarter(std::array<std::uint32_t, 16>& x, int a, int b, int c, int d) {
    x[a] += x[b]; x[d] ^= x[a]; x[d] = rotl(x[d], 16);
    x[c] += x[d]; x[b] ^= x[c]; x[b] = rotl(x[b], 12);
    x[a] += x[b]; x[d] ^= x[a]; x[d] = rotl(x[d], 8);
    x[c] += x[d]; x[b] ^= x[c]; x[b] = rotl(x[b], 7);
  }

  std::array<std::uint32_t, 8> key_{};
  std::array<std::uint32_t, 2> nonce_{};
};

// Sequential 64-bit words from a ChaCha20 keystream starting at block 0.
// Word w of a block is bytes [8w, 8w+8) read little-endian.
class ChaChaWordStream {
 public:
  explicit ChaChaWordStream(const ChaCha20::Key& key, std::uint64_t nonce = 0)
      : cipher_(key, nonce) {}

  std::uint64_t next() {
    if (pos_ == 8) refill();
    return buffer_[pos_++];
  }

  // Uniform double in (0, 1): (word >> 11) * 2^-53, exact zero rejected.
  double next_open_unit() {
    for (;;) {
      const std::uint64_t bits = next() >> 11;
      if (bits != 0) return static_cast<double>(bits) * 0x1.0p-53;
    }
  }

 private:
  void refill() {
    const auto words = cipher_.block_words(counter_++);
    for (int w = 0; w < 8; ++w) {
      buffer_[w] = static_cast<std::uint64_t>(words[2 * w]) |
                   (static_cast<std::uint64_t>(words[2 * w + 1]) << 32);
    }
    pos_ = 0;
  }

  ChaCha20 cipher_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 8> buffer_{};
  int pos_ = 8;
};

}  // namespace ddcm
