#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "ddcm/error.hpp"

namespace ddcm {

using Digest = std::array<std::uint8_t, 32>;

namespace detail {

// One digest context per thread, reused across calls; codebook generation
// hashes once per entry.
class Sha256Context {
 public:
  Sha256Context() : md_(EVP_MD_fetch(nullptr, "SHA256", nullptr)), ctx_(EVP_MD_CTX_new()) {
    if (md_ == nullptr || ctx_ == nullptr) throw Error("SHA-256 unavailable");
  }
  ~Sha256Context() {
    EVP_MD_CTX_free(ctx_);
    EVP_MD_free(md_);
  }
  Sha256Context(const Sha256Context&) = delete;
  Sha256Context& operator=(const Sha256Context&) = delete;

  Digest digest(std::span<const std::uint8_t> message) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_DigestInit_ex2(ctx_, md_, nullptr) != 1 || EVP_DigestUpdate(ctx_, message.data(), message.size()) != 1 ||
        EVP_DigestFinal_ex(ctx_, out.data(), &len) != 1 || len != out.size()) {
      throw Error("SHA-256 failed");
    }
    return out;
  }

 private:
  EVP_MD* md_;
  EVP_MD_CTX* ctx_;
};

}  // namespace detail

inline Digest sha256(std::span<const std::uint8_t> message) {
  thread_local detail::Sha256Context context;
  return context.digest(message);
}

// Little-endian byte sink used for hashing and for the binary formats.
class ByteWriter {
 public:
  template <typename UInt>
  void put_le(UInt value) {
    for (std::size_t b = 0; b < sizeof(UInt); ++b) {
      bytes_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * b)));
    }
  }
  void put_f64(double value) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof(bits));
    put_le(bits);
  }
  void put_f32(float value) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &value, sizeof(bits));
    put_le(bits);
  }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_bytes(std::span<const std::uint8_t> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Little-endian byte source; throws `Truncation` when reading past the end.
template <typename Truncation>
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename UInt>
  UInt get_le() {
    need(sizeof(UInt));
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(UInt); ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += sizeof(UInt);
    return static_cast<UInt>(v);
  }
  double get_f64() {
    const auto bits = get_le<std::uint64_t>();
    double v = 0;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  float get_f32() {
    const auto bits = get_le<std::uint32_t>();
    float v = 0;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Truncation("unexpected end of data");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// First 8 digest bytes, little-endian.
inline std::uint64_t truncated_hash64(std::span<const std::uint8_t> message) {
  const Digest d = sha256(message);
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(d[b]) << (8 * b);
  return v;
}

}  // namespace ddcm
