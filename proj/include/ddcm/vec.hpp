#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ddcm/error.hpp"

namespace ddcm {

using Vec = std::vector<double>;
using VecView = std::span<const double>;

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": dimension " + std::to_string(a) +
                            " != " + std::to_string(b));
  }
}

inline double dot(VecView a, VecView b) {
  require_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

inline double squared_norm(VecView a) {
  double acc = 0.0;
  for (double v : a) acc += v * v;
  return acc;
}

inline double squared_distance(VecView a, VecView b) {
  require_same_dim(a.size(), b.size(), "squared_distance");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

// Per-coordinate mean squared error.
inline double mse(VecView a, VecView b) {
  if (a.empty()) return 0.0;
  return squared_distance(a, b) / static_cast<double>(a.size());
}

inline Vec subtract(VecView a, VecView b) {
  require_same_dim(a.size(), b.size(), "subtract");
  Vec out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] - b[j];
  return out;
}

// out = a + scale * b
inline Vec add_scaled(VecView a, double scale, VecView b) {
  require_same_dim(a.size(), b.size(), "add_scaled");
  Vec out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] + scale * b[j];
  return out;
}

inline Vec scaled(VecView a, double scale) {
  Vec out(a.begin(), a.end());
  for (double& v : out) v *= scale;
  return out;
}

inline bool all_finite(VecView a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Population standard deviation (divisor n) around the vector's own mean.
inline double empirical_std(VecView a) {
  if (a.empty()) return 0.0;
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(a.size());
  double acc = 0.0;
  for (double v : a) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace ddcm
