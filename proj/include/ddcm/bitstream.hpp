#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ddcm/bitio.hpp"
#include "ddcm/codec_config.hpp"
#include "ddcm/hash.hpp"

namespace ddcm {

inline constexpr char kStreamMagic[4] = {'D', 'D', 'C', 'M'};
inline constexpr std::uint16_t kStreamVersion = 1;

struct StreamHeader {
  std::uint16_t version = kStreamVersion;
  std::uint32_t dim = 0;
  CodecConfig config;
  std::uint64_t model_id = 0;

  friend bool operator==(const StreamHeader& a, const StreamHeader& b) {
    return a.version == b.version && a.dim == b.dim && a.model_id == b.model_id &&
           a.config.base_schedule == b.config.base_schedule && a.config.retained_steps == b.config.retained_steps &&
           a.config.k_schedule == b.config.k_schedule && a.config.pursuit_depth == b.config.pursuit_depth &&
           a.config.coefficient_count == b.config.coefficient_count && a.config.seed == b.config.seed;
  }
};

// Sealed header plus packed payload. payload holds ceil(payload_bit_count / 8)
// bytes; unused trailing bits of the last byte are zero.
struct BitStream {
  StreamHeader header;
  std::vector<std::uint8_t> payload;
  std::uint64_t payload_bit_count = 0;

  friend bool operator==(const BitStream&, const BitStream&) = default;
};

namespace detail {

inline void write_header_fields(ByteWriter& w, const StreamHeader& h) {
  const auto& c = h.config;
  w.put_bytes(std::string_view(kStreamMagic, 4));
  w.put_le(h.version);
  w.put_le(h.dim);
  w.put_le(static_cast<std::uint32_t>(c.base_schedule.steps));
  w.put_f64(c.base_schedule.beta_start);
  w.put_f64(c.base_schedule.beta_end);
  w.put_le(static_cast<std::uint32_t>(c.retained_steps.size()));
  for (int s : c.retained_steps) w.put_le(static_cast<std::uint32_t>(s));
  const auto& ks = c.k_schedule;
  w.put_le(static_cast<std::uint8_t>(ks.mode()));
  w.put_le(static_cast<std::uint32_t>(ks.steps()));
  switch (ks.mode()) {
    case KSchedule::Mode::kUniform:
      w.put_le(ks.nominal_k());
      break;
    case KSchedule::Mode::kAdapted:
      w.put_le(ks.nominal_k());
      w.put_le(static_cast<std::uint32_t>(ks.active_lo()));
      w.put_le(static_cast<std::uint32_t>(ks.active_hi()));
      break;
    case KSchedule::Mode::kExplicit:
      for (int i = 2; i <= ks.steps(); ++i) w.put_le(ks.size(i));
      break;
  }
  w.put_le(ks.init_size());
  w.put_le(c.pursuit_depth);
  w.put_le(c.coefficient_count);
  w.put_le(c.seed);
  w.put_le(h.model_id);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const BitStream& stream) {
  ByteWriter w;
  detail::write_header_fields(w, stream.header);
  w.put_le(stream.payload_bit_count);
  const std::uint64_t digest = truncated_hash64(w.bytes());
  w.put_le(digest);
  w.put_bytes(stream.payload);
  return w.take();
}

// Parses and validates a stream. Errors: CorruptStream (magic, checksum,
// inconsistent fields), UnsupportedVersion, TruncatedStream.
inline BitStream deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader<TruncatedStream> r(bytes);
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kStreamMagic)) throw CorruptStream("not a DDCM stream (bad magic)");
  BitStream s;
  auto& h = s.header;
  h.version = r.get_le<std::uint16_t>();
  if (h.version != kStreamVersion) {
    throw UnsupportedVersion("unsupported stream version " + std::to_string(h.version));
  }
  h.dim = r.get_le<std::uint32_t>();
  auto& c = h.config;
  c.base_schedule.steps = static_cast<int>(r.get_le<std::uint32_t>());
  c.base_schedule.beta_start = r.get_f64();
  c.base_schedule.beta_end = r.get_f64();
  const auto retained = r.get_le<std::uint32_t>();
  if (retained > r.remaining() / 4) throw TruncatedStream("retained-step list runs past end of stream");
  for (std::uint32_t j = 0; j < retained; ++j) c.retained_steps.push_back(static_cast<int>(r.get_le<std::uint32_t>()));

  const auto mode = r.get_le<std::uint8_t>();
  const int steps = static_cast<int>(r.get_le<std::uint32_t>());
  try {
    switch (mode) {
      case static_cast<std::uint8_t>(KSchedule::Mode::kUniform): {
        const auto k = r.get_le<std::uint32_t>();
        c.k_schedule = KSchedule::uniform(steps, k, r.get_le<std::uint32_t>());
        break;
      }
      case static_cast<std::uint8_t>(KSchedule::Mode::kAdapted): {
        const auto k = r.get_le<std::uint32_t>();
        const auto lo = static_cast<int>(r.get_le<std::uint32_t>());
        const auto hi = static_cast<int>(r.get_le<std::uint32_t>());
        c.k_schedule = KSchedule::adapted(steps, k, lo, hi, r.get_le<std::uint32_t>());
        break;
      }
      case static_cast<std::uint8_t>(KSchedule::Mode::kExplicit): {
        if (steps < 2 || static_cast<std::size_t>(steps) > r.remaining() / 4) {
          throw TruncatedStream("K schedule runs past end of stream");
        }
        std::vector<std::uint32_t> sizes;
        for (int i = 2; i <= steps; ++i) sizes.push_back(r.get_le<std::uint32_t>());
        sizes.push_back(r.get_le<std::uint32_t>());
        c.k_schedule = KSchedule::explicit_sizes(std::move(sizes));
        break;
      }
      default:
        throw CorruptStream("unknown K schedule mode");
    }
  } catch (const InvalidArgument& e) {
    throw CorruptStream(std::string("invalid K schedule: ") + e.what());
  }
  c.pursuit_depth = r.get_le<std::uint32_t>();
  c.coefficient_count = r.get_le<std::uint32_t>();
  c.seed = r.get_le<std::uint64_t>();
  h.model_id = r.get_le<std::uint64_t>();
  s.payload_bit_count = r.get_le<std::uint64_t>();
  const std::size_t digest_end = r.position();
  const auto digest = r.get_le<std::uint64_t>();
  if (digest != truncated_hash64(bytes.first(digest_end))) throw CorruptStream("header checksum mismatch");

  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw CorruptStream(std::string("inconsistent header: ") + e.what());
  }
  if (h.dim == 0) throw CorruptStream("zero signal dimension");
  if (s.payload_bit_count != payload_bits(c)) throw CorruptStream("payload length disagrees with configuration");
  const std::uint64_t need = (s.payload_bit_count + 7) / 8;
  if (r.remaining() < need) throw TruncatedStream("payload truncated");
  if (r.remaining() > need) throw CorruptStream("trailing bytes after payload");
  const auto body = r.get_bytes(need);
  s.payload.assign(body.begin(), body.end());
  return s;
}

inline void write_stream_file(const std::string& path, const BitStream& stream) {
  const auto bytes = serialize(stream);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline BitStream read_stream_file(const std::string& path) { return deserialize(read_file_bytes(path)); }

}  // namespace ddcm
