#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ddcm/rng.hpp"
#include "ddcm/vec.hpp"

namespace ddcm {

inline constexpr std::uint32_t kDefaultProjections = 128;

// Exact 2-Wasserstein distance between two 1-D empirical distributions with
// uniform weights, by integrating the squared quantile difference.
inline double wasserstein2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<std::uint64_t>(a.size());
  const auto nb = static_cast<std::uint64_t>(b.size());
  // Quantile breakpoints i/na and j/nb, compared exactly as i*nb vs j*na.
  std::uint64_t i = 0;
  std::uint64_t j = 0;
  std::uint64_t prev = 0;
  const double denom = static_cast<double>(na * nb);
  double total = 0.0;
  while (i < na && j < nb) {
    const std::uint64_t ea = (i + 1) * nb;
    const std::uint64_t eb = (j + 1) * na;
    const std::uint64_t edge = std::min(ea, eb);
    const double diff = a[i] - b[j];
    total += diff * diff * static_cast<double>(edge - prev) / denom;
    prev = edge;
    if (ea == edge) ++i;
    if (eb == edge) ++j;
  }
  return std::sqrt(total);
}

// Mean over random unit directions of the 1-D W2 between the projections.
inline double sliced_wasserstein(const std::vector<Vec>& a, const std::vector<Vec>& b,
                                 std::uint32_t projections, std::uint64_t seed) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("sliced Wasserstein needs >= 2 samples per set");
  if (projections < 1) throw InvalidArgument("need at least one projection");
  const std::size_t d = a.front().size();
  for (const auto& v : a) require_same_dim(v.size(), d, "sample");
  for (const auto& v : b) require_same_dim(v.size(), d, "sample");

  RandomStream rng(seed, "sliced-wasserstein");
  std::vector<double> pa(a.size());
  std::vector<double> pb(b.size());
  double sum = 0.0;
  for (std::uint32_t p = 0; p < projections; ++p) {
    Vec dir;
    double norm = 0.0;
    do {
      dir = rng.normal_vector(d);
      norm = std::sqrt(squared_norm(dir));
    } while (!(norm > 0.0));
    for (auto& v : dir) v /= norm;
    for (std::size_t n = 0; n < a.size(); ++n) pa[n] = dot(a[n], dir);
    for (std::size_t n = 0; n < b.size(); ++n) pb[n] = dot(b[n], dir);
    sum += wasserstein2_1d(pa, pb);
  }
  return sum / projections;
}

inline double psnr(double mse_value, double range) {
  if (!(mse_value > 0.0)) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse_value);
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("no values");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace ddcm
