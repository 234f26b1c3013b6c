#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ddcm/error.hpp"

namespace ddcm {

// Linear-beta VP schedule parameters. Enough to rebuild a base schedule
// bit-identically from a stream header.
struct ScheduleDescriptor {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;

  friend bool operator==(const ScheduleDescriptor&, const ScheduleDescriptor&) = default;
};

// Discretised VP diffusion. Steps are 1-indexed (i = 1..T); index i lives
// in slot i-1 of every array. Use the accessors, never the arrays directly.
//
// A schedule may be a sub-sampling of a longer base schedule; base_step(i)
// then names the timestep the score model is evaluated at.
class Schedule {
 public:
  Schedule() = default;

  int steps() const { return static_cast<int>(alpha_.size()); }

  double alpha(int i) const { return alpha_[slot(i)]; }
  double sigma(int i) const { return sigma_[slot(i)]; }
  double beta(int i) const { return 1.0 - alpha(i); }

  // alpha_bar(0) == 1 is the clean-data end of the chain.
  double alpha_bar(int i) const {
    if (i == 0) return 1.0;
    return alpha_bar_[slot(i)];
  }

  int base_step(int i) const {
    if (i == 0) return 0;
    return base_steps_[slot(i)];
  }

  const ScheduleDescriptor& descriptor() const { return descriptor_; }
  bool is_subsampled() const { return subsampled_; }
  // Retained base steps in sampler order (index 0 holds base_step(1)).
  const std::vector<int>& base_steps() const { return base_steps_; }

  friend bool operator==(const Schedule&, const Schedule&) = default;

  static Schedule linear(int steps, double beta_start, double beta_end);
  static Schedule from_alphas(std::vector<double> alpha, ScheduleDescriptor descriptor,
                              std::vector<int> base_steps, bool subsampled);

 private:
  std::size_t slot(int i) const {
    if (i < 1 || i > steps()) {
      throw InvalidArgument("step " + std::to_string(i) + " outside [1, " +
                            std::to_string(steps()) + "]");
    }
    return static_cast<std::size_t>(i - 1);
  }

  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
  std::vector<int> base_steps_;
  ScheduleDescriptor descriptor_;
  bool subsampled_ = false;
};

inline Schedule Schedule::from_alphas(std::vector<double> alpha, ScheduleDescriptor descriptor,
                                      std::vector<int> base_steps, bool subsampled) {
  Schedule s;
  s.alpha_ = std::move(alpha);
  s.alpha_bar_.resize(s.alpha_.size());
  s.sigma_.resize(s.alpha_.size());
  double running = 1.0;
  for (std::size_t k = 0; k < s.alpha_.size(); ++k) {
    const double a = s.alpha_[k];
    if (!(a > 0.0 && a <= 1.0) || !std::isfinite(a)) {
      throw InvalidArgument("alpha outside (0, 1]");
    }
    running *= a;
    s.alpha_bar_[k] = running;
    s.sigma_[k] = std::sqrt(1.0 - a);
  }
  if (!s.alpha_bar_.empty() && !(s.alpha_bar_.back() > 0.0)) {
    throw InvalidArgument("alpha_bar underflows to zero");
  }
  s.base_steps_ = std::move(base_steps);
  s.descriptor_ = descriptor;
  s.subsampled_ = subsampled;
  return s;
}

// beta_i linearly interpolated from beta_start (i = 1) to beta_end (i = T).
inline Schedule Schedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw InvalidArgument("schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> alpha(static_cast<std::size_t>(steps));
  std::vector<int> base(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) {
    const double frac = static_cast<double>(i - 1) / static_cast<double>(steps - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    alpha[static_cast<std::size_t>(i - 1)] = 1.0 - beta;
    base[static_cast<std::size_t>(i - 1)] = i;
  }
  return from_alphas(std::move(alpha), {steps, beta_start, beta_end}, std::move(base), false);
}

inline Schedule build_schedule(int steps, double beta_start, double beta_end) {
  return Schedule::linear(steps, beta_start, beta_end);
}

// The usual 1e-4..0.02 linear schedule rescaled so that a short chain still
// reaches alpha_bar_T ~ 0.
inline Schedule scaled_linear_schedule(int steps) {
  const double scale = 1000.0 / static_cast<double>(steps);
  return Schedule::linear(steps, std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999));
}

// Keeps the given base steps (any order; duplicates rejected) and rebuilds
// alpha'_j = alpha_bar(i_j) / alpha_bar(i_{j-1}) so that alpha_bar' matches
// the base schedule at every retained step.
inline Schedule subsample(const Schedule& base, std::vector<int> retained) {
  if (retained.empty()) throw InvalidArgument("empty retained-step set");
  std::sort(retained.begin(), retained.end());
  if (std::adjacent_find(retained.begin(), retained.end()) != retained.end()) {
    throw InvalidArgument("retained steps must be distinct");
  }
  if (retained.front() < 1 || retained.back() > base.steps()) {
    throw InvalidArgument("retained step outside base schedule");
  }
  std::vector<double> alpha(retained.size());
  int previous = 0;
  for (std::size_t j = 0; j < retained.size(); ++j) {
    alpha[j] = base.alpha_bar(retained[j]) / base.alpha_bar(previous);
    previous = retained[j];
  }
  const bool identity = static_cast<int>(retained.size()) == base.steps();
  if (identity) return base;
  return Schedule::from_alphas(std::move(alpha), base.descriptor(), std::move(retained), true);
}

// Naive timestep skipping: keeps `kept` evenly spaced steps ending at T.
inline std::vector<int> evenly_spaced_steps(int total, int kept) {
  if (kept < 1 || kept > total) throw InvalidArgument("kept steps outside [1, T]");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(kept));
  for (int j = 1; j <= kept; ++j) {
    // ceil(j * total / kept)
    out.push_back(static_cast<int>((static_cast<long long>(j) * total + kept - 1) / kept));
  }
  return out;
}

}  // namespace ddcm
