#pragma once

#include <cstdint>
#include <vector>

#include "ddcm/bitio.hpp"
#include "ddcm/codebook.hpp"
#include "ddcm/schedule.hpp"

namespace ddcm {

// Everything an encoder and decoder must agree on besides the score model.
struct CodecConfig {
  ScheduleDescriptor base_schedule;
  // Retained base steps when sub-sampling; empty keeps every base step.
  std::vector<int> retained_steps;
  // Codebook sizes over the sampler's steps 2..T'+1.
  KSchedule k_schedule;
  // Matching-pursuit depth and coefficient alphabet size (C used iff M > 1).
  std::uint32_t pursuit_depth = 1;
  std::uint32_t coefficient_count = 2;
  std::uint64_t seed = 0;

  int sampler_steps() const {
    return retained_steps.empty() ? base_schedule.steps : static_cast<int>(retained_steps.size());
  }

  Schedule sampler_schedule() const {
    const Schedule base = Schedule::linear(base_schedule.steps, base_schedule.beta_start, base_schedule.beta_end);
    if (retained_steps.empty()) return base;
    return subsample(base, retained_steps);
  }

  CodebookSpec codebook_spec(std::size_t dim) const { return {seed, dim, k_schedule}; }

  // Gamma: C evenly spaced values in (0, 1], gamma_c = c / C.
  std::vector<double> coefficients() const {
    std::vector<double> out(coefficient_count);
    for (std::uint32_t c = 1; c <= coefficient_count; ++c) {
      out[c - 1] = static_cast<double>(c) / static_cast<double>(coefficient_count);
    }
    return out;
  }

  void validate() const {
    if (pursuit_depth < 1) throw InvalidArgument("M must be >= 1");
    if (pursuit_depth > 1 && coefficient_count < 2) throw InvalidArgument("C must be >= 2 when M > 1");
    if (coefficient_count < 1) throw InvalidArgument("C must be >= 1");
    if (k_schedule.steps() != sampler_steps()) {
      throw InvalidArgument("K schedule covers " + std::to_string(k_schedule.steps()) + " steps, sampler has " +
                            std::to_string(sampler_steps()));
    }
    if (!retained_steps.empty()) {
      for (std::size_t j = 1; j < retained_steps.size(); ++j) {
        if (retained_steps[j] <= retained_steps[j - 1]) {
          throw InvalidArgument("retained steps must be strictly increasing in sampler order");
        }
      }
      if (retained_steps.front() < 1 || retained_steps.back() > base_schedule.steps) {
        throw InvalidArgument("retained step outside the base schedule");
      }
    }
  }
};

// Payload bits of one trajectory: ceil(log2 K_{T+1}) for the initial index,
// then per step with K_i > 1: ceil(log2 K_i) * M + ceil(log2 C) * (M - 1).
inline std::uint64_t payload_bits(const CodecConfig& config) {
  const auto& ks = config.k_schedule;
  const std::uint64_t m = config.pursuit_depth;
  const std::uint64_t coeff_bits = m > 1 ? bits_for(config.coefficient_count) : 0;
  std::uint64_t total = bits_for(ks.init_size());
  for (int i = 2; i <= ks.steps(); ++i) {
    const std::uint32_t k = ks.size(i);
    if (k > 1) total += bits_for(k) * m + coeff_bits * (m - 1);
  }
  return total;
}

struct Rate {
  std::uint64_t payload_bits = 0;
  double bpp = 0.0;
};

inline Rate rate_bits(const CodecConfig& config, double pixel_count) {
  if (!(pixel_count > 0.0)) throw InvalidArgument("pixel count must be positive");
  const std::uint64_t bits = payload_bits(config);
  return {bits, static_cast<double>(bits) / pixel_count};
}

}  // namespace ddcm
