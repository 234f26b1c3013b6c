#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "ddcm/bitstream.hpp"
#include "ddcm/gmm.hpp"

namespace ddcm {

// Vector file: "DDCV", u32 dim, u32 count, then count * dim f64 LE values.
inline constexpr std::string_view kVectorMagic = "DDCV";

inline std::vector<std::uint8_t> encode_vectors(const std::vector<Vec>& vectors) {
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
  ByteWriter w;
  w.put_bytes(kVectorMagic);
  w.put_le(static_cast<std::uint32_t>(dim));
  w.put_le(static_cast<std::uint32_t>(vectors.size()));
  for (const auto& v : vectors) {
    require_same_dim(v.size(), dim, "vector file entry");
    for (double x : v) w.put_f64(x);
  }
  return w.take();
}

inline std::vector<Vec> decode_vectors(std::span<const std::uint8_t> bytes) {
  ByteReader<IoError> r(bytes);
  const auto magic = r.get_bytes(kVectorMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kVectorMagic.begin())) throw IoError("not a vector file");
  const auto dim = r.get_le<std::uint32_t>();
  const auto count = r.get_le<std::uint32_t>();
  if (r.remaining() != static_cast<std::size_t>(dim) * count * 8) throw IoError("vector file size does not match header");
  std::vector<Vec> out(count, Vec(dim));
  for (auto& v : out) {
    for (auto& x : v) x = r.get_f64();
  }
  return out;
}

inline void write_bytes_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to " + path + " failed");
}

inline void write_vectors(const std::string& path, const std::vector<Vec>& vectors) {
  write_bytes_file(path, encode_vectors(vectors));
}

inline std::vector<Vec> read_vectors(const std::string& path) { return decode_vectors(read_file_bytes(path)); }

// Model file: "DDCMMDL", u16 version, u8 kind, schedule descriptor, then the
// kind-specific parameters.
inline constexpr std::string_view kModelMagic = "DDCMMDL";
inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr std::uint8_t kModelKindGmm = 1;

inline std::vector<std::uint8_t> encode_gmm_model(const GmmParams& params, const ScheduleDescriptor& schedule) {
  params.validate();
  ByteWriter w;
  w.put_bytes(kModelMagic);
  w.put_le(kModelVersion);
  w.put_le(kModelKindGmm);
  w.put_le(static_cast<std::uint32_t>(schedule.steps));
  w.put_f64(schedule.beta_start);
  w.put_f64(schedule.beta_end);
  w.put_le(static_cast<std::uint32_t>(params.dim()));
  w.put_le(static_cast<std::uint32_t>(params.components()));
  w.put_le(static_cast<std::uint8_t>(params.labelled()));
  for (std::size_t c = 0; c < params.components(); ++c) {
    w.put_f64(params.weights[c]);
    if (params.labelled()) w.put_le(static_cast<std::int32_t>(params.labels[c]));
    for (double v : params.means[c]) w.put_f64(v);
    for (double v : params.variances[c]) w.put_f64(v);
  }
  return w.take();
}

inline GmmModel decode_gmm_model(std::span<const std::uint8_t> bytes) {
  ByteReader<IoError> r(bytes);
  const auto magic = r.get_bytes(kModelMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kModelMagic.begin())) throw IoError("not a model file");
  const auto version = r.get_le<std::uint16_t>();
  if (version != kModelVersion) throw UnsupportedVersion("model file version " + std::to_string(version));
  const auto kind = r.get_le<std::uint8_t>();
  if (kind != kModelKindGmm) throw IoError("unknown model kind " + std::to_string(kind));
  ScheduleDescriptor desc;
  desc.steps = static_cast<int>(r.get_le<std::uint32_t>());
  desc.beta_start = r.get_f64();
  desc.beta_end = r.get_f64();
  const auto dim = r.get_le<std::uint32_t>();
  const auto components = r.get_le<std::uint32_t>();
  const bool labelled = r.get_le<std::uint8_t>() != 0;
  const std::size_t per = 8 + (labelled ? 4 : 0) + 16 * static_cast<std::size_t>(dim);
  if (r.remaining() != per * components) throw IoError("model file size does not match header");
  GmmParams p;
  for (std::uint32_t c = 0; c < components; ++c) {
    p.weights.push_back(r.get_f64());
    if (labelled) p.labels.push_back(r.get_le<std::int32_t>());
    Vec mean(dim);
    Vec var(dim);
    for (auto& v : mean) v = r.get_f64();
    for (auto& v : var) v = r.get_f64();
    p.means.push_back(std::move(mean));
    p.variances.push_back(std::move(var));
  }
  return GmmModel(std::move(p), build_schedule(desc.steps, desc.beta_start, desc.beta_end));
}

inline void write_gmm_model(const std::string& path, const GmmModel& model) {
  write_bytes_file(path, encode_gmm_model(model.params(), model.schedule().descriptor()));
}

inline GmmModel read_gmm_model(const std::string& path) { return decode_gmm_model(read_file_bytes(path)); }

}  // namespace ddcm
