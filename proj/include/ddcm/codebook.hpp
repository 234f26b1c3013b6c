#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ddcm/chacha20.hpp"
#include "ddcm/error.hpp"
#include "ddcm/hash.hpp"
#include "ddcm/vec.hpp"

namespace ddcm {

// Codebook sizes K_i for i = 2..T+1. Step T+1 is the initialisation
// codebook; step 1 never draws noise and has no codebook.
class KSchedule {
 public:
  enum class Mode : std::uint8_t { kUniform = 0, kAdapted = 1, kExplicit = 2 };

  KSchedule() = default;

  // K on every step 2..T, K_init at T+1.
  static KSchedule uniform(int steps, std::uint32_t k, std::uint32_t k_init = 1) {
    KSchedule s(steps, Mode::kUniform);
    for (int i = 2; i <= steps; ++i) s.at(i) = k;
    s.at(steps + 1) = k_init;
    s.k_ = k;
    s.validate();
    return s;
  }

  // K on steps lo..hi (inclusive), 1 elsewhere.
  static KSchedule adapted(int steps, std::uint32_t k, int lo, int hi, std::uint32_t k_init = 1) {
    if (lo < 2 || hi > steps || lo > hi) throw InvalidArgument("active range outside [2, T]");
    KSchedule s(steps, Mode::kAdapted);
    for (int i = 2; i <= steps; ++i) s.at(i) = (i >= lo && i <= hi) ? k : 1;
    s.at(steps + 1) = k_init;
    s.k_ = k;
    s.lo_ = lo;
    s.hi_ = hi;
    s.validate();
    return s;
  }

  // sizes[j] is K for step j + 2, the last element is K_{T+1}.
  static KSchedule explicit_sizes(std::vector<std::uint32_t> sizes) {
    if (sizes.size() < 2) throw InvalidArgument("explicit K schedule needs T >= 2");
    KSchedule s(static_cast<int>(sizes.size()), Mode::kExplicit);
    s.sizes_ = std::move(sizes);
    s.validate();
    return s;
  }

  int steps() const { return steps_; }
  Mode mode() const { return mode_; }
  std::uint32_t nominal_k() const { return k_; }
  int active_lo() const { return lo_; }
  int active_hi() const { return hi_; }
  const std::vector<std::uint32_t>& sizes() const { return sizes_; }

  std::uint32_t size(int i) const {
    if (i < 2 || i > steps_ + 1) {
      throw InvalidArgument("no codebook at step " + std::to_string(i));
    }
    return sizes_[static_cast<std::size_t>(i - 2)];
  }
  std::uint32_t init_size() const { return size(steps_ + 1); }

  friend bool operator==(const KSchedule&, const KSchedule&) = default;

 private:
  KSchedule(int steps, Mode mode) : steps_(steps), mode_(mode) {
    if (steps < 2) throw InvalidArgument("K schedule needs T >= 2");
    sizes_.assign(static_cast<std::size_t>(steps), 1);
  }
  std::uint32_t& at(int i) { return sizes_[static_cast<std::size_t>(i - 2)]; }
  void validate() const {
    for (std::uint32_t k : sizes_) {
      if (k < 1) throw InvalidArgument("codebook size must be >= 1");
    }
  }

  int steps_ = 0;
  Mode mode_ = Mode::kUniform;
  std::uint32_t k_ = 1;
  int lo_ = 0;
  int hi_ = 0;
  std::vector<std::uint32_t> sizes_;
};

struct CodebookSpec {
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  KSchedule k_schedule;
};

// Addresses C_timestep(index); index is 1-based.
struct CodebookEntryId {
  int timestep = 0;
  std::uint32_t index = 0;
};

// Key = SHA-256(seed_le64 || timestep_le32 || index_le32).
inline ChaCha20::Key entry_key(std::uint64_t seed, std::uint32_t timestep, std::uint32_t index) {
  std::uint8_t message[16];
  for (int b = 0; b < 8; ++b) message[b] = static_cast<std::uint8_t>(seed >> (8 * b));
  for (int b = 0; b < 4; ++b) message[8 + b] = static_cast<std::uint8_t>(timestep >> (8 * b));
  for (int b = 0; b < 4; ++b) message[12 + b] = static_cast<std::uint8_t>(index >> (8 * b));
  return sha256(message);
}

// Writes the first out.size() standard normals of entry (timestep, index).
// Box-Muller over consecutive uniform pairs: r = sqrt(-2 ln u1),
// z = (r cos 2 pi u2, r sin 2 pi u2).
inline void fill_entry(std::uint64_t seed, std::uint32_t timestep, std::uint32_t index,
                       std::span<double> out) {
  ChaChaWordStream words(entry_key(seed, timestep, index));
  std::size_t j = 0;
  while (j < out.size()) {
    const double u1 = words.next_open_unit();
    const double u2 = words.next_open_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[j++] = radius * std::cos(angle);
    if (j < out.size()) out[j++] = radius * std::sin(angle);
  }
}

inline void check_entry_id(const CodebookSpec& spec, const CodebookEntryId& id) {
  const std::uint32_t k = spec.k_schedule.size(id.timestep);
  if (id.index < 1 || id.index > k) {
    throw InvalidArgument("codebook index " + std::to_string(id.index) + " outside [1, " +
                          std::to_string(k) + "] at step " + std::to_string(id.timestep));
  }
}

inline Vec codebook_entry(const CodebookSpec& spec, const CodebookEntryId& id) {
  check_entry_id(spec, id);
  Vec out(spec.dim);
  fill_entry(spec.seed, static_cast<std::uint32_t>(id.timestep), id.index, out);
  return out;
}

// Read-only view over the codebooks of one spec. Each step's entries are
// generated on first use and memoised as a K_i x d row-major block, so the
// argmax scans do not re-derive keys. Safe for concurrent readers.
class Codebook {
 public:
  explicit Codebook(CodebookSpec spec)
      : spec_(std::move(spec)),
        blocks_(static_cast<std::size_t>(spec_.k_schedule.steps())),
        once_(std::make_unique<std::once_flag[]>(blocks_.size())) {
    if (spec_.dim == 0) throw InvalidArgument("codebook dimension must be positive");
  }

  // Test fixture: explicit entries for some steps; other steps are derived.
  static Codebook with_fixture(CodebookSpec spec, const std::map<int, std::vector<Vec>>& tables) {
    Codebook book(std::move(spec));
    for (const auto& [step, rows] : tables) {
      if (rows.size() != book.size(step)) throw InvalidArgument("fixture size != K_i");
      std::vector<double> block;
      for (const Vec& row : rows) {
        require_same_dim(row.size(), book.dim(), "fixture entry");
        block.insert(block.end(), row.begin(), row.end());
      }
      const std::size_t slot = book.slot(step);
      std::call_once(book.once_[slot], [&] { book.blocks_[slot] = std::move(block); });
    }
    return book;
  }

  const CodebookSpec& spec() const { return spec_; }
  std::size_t dim() const { return spec_.dim; }
  std::uint32_t size(int i) const { return spec_.k_schedule.size(i); }

  std::span<const double> entry(int i, std::uint32_t k) const {
    if (k < 1 || k > size(i)) {
      throw InvalidArgument("codebook index " + std::to_string(k) + " outside [1, " +
                            std::to_string(size(i)) + "]");
    }
    const auto& block = materialise(i);
    return {block.data() + (k - 1) * dim(), dim()};
  }

  // All K_i entries of step i, row-major.
  std::span<const double> entries(int i) const { return materialise(i); }

 private:
  std::size_t slot(int i) const {
    size(i);  // bounds check
    return static_cast<std::size_t>(i - 2);
  }

  const std::vector<double>& materialise(int i) const {
    const std::size_t s = slot(i);
    std::call_once(once_[s], [&] {
      const std::uint32_t k = size(i);
      std::vector<double> block(static_cast<std::size_t>(k) * dim());
      for (std::uint32_t idx = 1; idx <= k; ++idx) {
        fill_entry(spec_.seed, static_cast<std::uint32_t>(i), idx,
                   std::span<double>(block.data() + (idx - 1) * dim(), dim()));
      }
      blocks_[s] = std::move(block);
    });
    return blocks_[s];
  }

  CodebookSpec spec_;
  mutable std::vector<std::vector<double>> blocks_;
  std::unique_ptr<std::once_flag[]> once_;
};

struct NormStats {
  double mean = 0.0;
  double relative_std = 0.0;
};

// Chi-square concentration of ||C_i(k)||^2 over entries 1..sample.
inline NormStats norm_concentration_stats(const CodebookSpec& spec, int i, std::uint32_t sample) {
  if (sample < 2) throw InvalidArgument("need at least two entries");
  if (sample > spec.k_schedule.size(i)) throw InvalidArgument("sample exceeds K_i");
  std::vector<double> norms;
  norms.reserve(sample);
  Vec buffer(spec.dim);
  for (std::uint32_t k = 1; k <= sample; ++k) {
    fill_entry(spec.seed, static_cast<std::uint32_t>(i), k, buffer);
    norms.push_back(squared_norm(buffer));
  }
  double mean = 0.0;
  for (double v : norms) mean += v;
  mean /= static_cast<double>(sample);
  double var = 0.0;
  for (double v : norms) var += (v - mean) * (v - mean);
  var /= static_cast<double>(sample - 1);
  return {mean, std::sqrt(var) / mean};
}

}  // namespace ddcm
