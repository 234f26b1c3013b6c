#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "ddcm/chacha20.hpp"
#include "ddcm/error.hpp"
#include "ddcm/hash.hpp"
#include "ddcm/vec.hpp"

namespace ddcm {

// Seeded, portable random stream for index draws (Random rule, CCG/CCFG
// subsets, restoration's perceptual branch) and for experiment sampling.
// Keyed separately from codebook generation:
//   key = SHA-256("DDCM-stream" || seed_le64 || tag)
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::string_view tag = "select")
      : words_(make_key(seed, tag)) {}

  std::uint64_t next_u64() { return words_.next(); }

  // Uniform in [1, k] by rejection (no modulo bias).
  std::uint32_t uniform_index(std::uint32_t k) {
    if (k < 1) throw InvalidArgument("uniform_index needs k >= 1");
    if (k == 1) return 1;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % k + 1) % k;
    for (;;) {
      const std::uint64_t w = words_.next();
      if (w <= limit) return static_cast<std::uint32_t>(w % k) + 1;
    }
  }

  double uniform_open() { return words_.next_open_unit(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = words_.next_open_unit();
    const double u2 = words_.next_open_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vec normal_vector(std::size_t dim) {
    Vec out(dim);
    for (double& v : out) v = normal();
    return out;
  }

 private:
  static ChaCha20::Key make_key(std::uint64_t seed, std::string_view tag) {
    ByteWriter message;
    message.put_bytes("DDCM-stream");
    message.put_le(seed);
    message.put_bytes(tag);
    return sha256(message.bytes());
  }

  ChaChaWordStream words_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ddcm
