#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "ddcm/codebook.hpp"
#include "ddcm/diffusion.hpp"
#include "ddcm/linear_operator.hpp"
#include "ddcm/rng.hpp"

namespace ddcm {

enum class Branch : std::uint8_t { kDistortion, kPerception };

struct SelectionOutcome {
  std::uint32_t index = 1;
  // Loss (or negated score) of every evaluated candidate, in evaluation order.
  std::vector<double> losses;
  std::uint32_t evaluated = 0;
  std::optional<Branch> branch;
  // Restoration only: the two candidate indices.
  std::uint32_t distortion_index = 0;
  std::uint32_t perception_index = 0;
};

namespace detail {

// Running argmin where the first candidate to reach the minimum wins.
class ArgMin {
 public:
  void offer(std::uint32_t index, double loss) {
    ++evaluated_;
    if (!found_ || loss < best_loss_) {
      found_ = true;
      best_loss_ = loss;
      best_ = index;
    }
  }
  std::uint32_t best() const { return best_; }
  double best_loss() const { return best_loss_; }
  std::uint32_t evaluated() const { return evaluated_; }

 private:
  bool found_ = false;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::uint32_t best_ = 1;
  std::uint32_t evaluated_ = 0;
};

inline std::vector<std::uint32_t> draw_subset(RandomStream& rng, std::uint32_t k, std::uint32_t subset) {
  if (subset < 1 || subset > k) throw InvalidArgument("subset size must lie in [1, K]");
  std::vector<std::uint32_t> out(subset);
  for (auto& idx : out) idx = rng.uniform_index(k);
  return out;
}

inline void require_finite(VecView v, const char* what) {
  if (!all_finite(v)) throw NumericError(std::string(what) + " is not finite");
}

}  // namespace detail

// k ~ Unif{1..K}.
inline std::uint32_t select_random(std::uint32_t k, RandomStream& rng) { return rng.uniform_index(k); }

// argmax_k <C_i(k), residual>, lowest index on ties.
inline SelectionOutcome select_compression(VecView residual, const Codebook& book, int i,
                                           bool keep_losses = false) {
  require_same_dim(residual.size(), book.dim(), "compression residual");
  const std::uint32_t k = book.size(i);
  const auto entries = book.entries(i);
  const std::size_t d = book.dim();
  detail::ArgMin arg;
  SelectionOutcome out;
  if (keep_losses) out.losses.reserve(k);
  for (std::uint32_t idx = 0; idx < k; ++idx) {
    const double* row = entries.data() + idx * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += row[j] * residual[j];
    arg.offer(idx + 1, -acc);
    if (keep_losses) out.losses.push_back(-acc);
  }
  out.index = arg.best();
  out.evaluated = arg.evaluated();
  return out;
}

// L_P: argmin_k ||C_i(k) - sigma_i * grad||^2 over the whole codebook, or
// over `subset` uniform draws when diversity is requested.
inline SelectionOutcome select_posterior_loss(VecView grad, double sigma, const Codebook& book, int i,
                                              std::optional<std::uint32_t> subset = std::nullopt,
                                              RandomStream* rng = nullptr) {
  require_same_dim(grad.size(), book.dim(), "likelihood gradient");
  detail::require_finite(grad, "likelihood gradient");
  const Vec target = scaled(grad, sigma);
  const std::uint32_t k = book.size(i);
  detail::ArgMin arg;
  SelectionOutcome out;
  auto offer = [&](std::uint32_t idx) {
    const double loss = squared_distance(book.entry(i, idx), target);
    arg.offer(idx, loss);
    out.losses.push_back(loss);
  };
  if (subset) {
    if (rng == nullptr) throw InvalidArgument("subset selection needs a random stream");
    for (std::uint32_t idx : detail::draw_subset(*rng, k, *subset)) offer(idx);
  } else {
    for (std::uint32_t idx = 1; idx <= k; ++idx) offer(idx);
  }
  out.index = arg.best();
  out.evaluated = arg.evaluated();
  return out;
}

// argmin_k ||y - A(mu + sigma_i C_i(k))||^2.
inline SelectionOutcome select_linear_inverse(VecView y, const LinearOperator& op, VecView mu, double sigma,
                                              const Codebook& book, int i) {
  require_same_dim(op.input_dim(), book.dim(), "operator");
  require_same_dim(mu.size(), book.dim(), "mean");
  require_same_dim(y.size(), op.output_dim(), "observation");
  const Vec residual = subtract(y, op.apply(mu));
  const std::uint32_t k = book.size(i);
  detail::ArgMin arg;
  SelectionOutcome out;
  out.losses.reserve(k);
  for (std::uint32_t idx = 1; idx <= k; ++idx) {
    const auto entry = book.entry(i, idx);
    double loss = 0.0;
    if (op.is_mask()) {
      const auto& obs = op.observed();
      for (std::size_t r = 0; r < obs.size(); ++r) {
        const double diff = residual[r] - sigma * entry[obs[r]];
        loss += diff * diff;
      }
    } else {
      const Vec projected = op.apply(entry);
      for (std::size_t r = 0; r < projected.size(); ++r) {
        const double diff = residual[r] - sigma * projected[r];
        loss += diff * diff;
      }
    }
    arg.offer(idx, loss);
    out.losses.push_back(loss);
  }
  out.index = arg.best();
  out.evaluated = arg.evaluated();
  return out;
}

// No-reference quality measure; lower is better. Need not be differentiable.
using QualityMeasure = std::function<double(VecView)>;

// Perception-distortion choice between k_D = argmax <C_i(k), r(y) - x0_hat_i>
// and a uniform k_P. Each candidate is scored by
//   MSE(r(y), x0_hat_{i-1}^(k)) + lambda * Q(x0_hat_{i-1}^(k))
// with MSE the per-coordinate mean. Costs two extra denoiser calls.
inline SelectionOutcome select_restoration(VecView reference, VecView x, VecView mu, const ScoreModel& model,
                                           const Schedule& sched, const Codebook& book, int i, double lambda,
                                           const QualityMeasure& quality, RandomStream& rng,
                                           const Condition& condition = std::nullopt) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (i < 2) throw InvalidArgument("restoration selects noise only for i >= 2");
  const Vec x0_hat = model_x0(model, x, i, sched, condition);
  const std::uint32_t k_d = select_compression(subtract(reference, x0_hat), book, i).index;
  const std::uint32_t k_p = select_random(book.size(i), rng);

  SelectionOutcome out;
  out.distortion_index = k_d;
  out.perception_index = k_p;
  auto criterion = [&](std::uint32_t idx) {
    const Vec next = add_scaled(mu, sched.sigma(i), book.entry(i, idx));
    const Vec lookahead = model_x0(model, next, i - 1, sched, condition);
    const double q = quality(lookahead);
    if (!std::isfinite(q)) throw NumericError("quality measure returned a non-finite value");
    return mse(reference, lookahead) + lambda * q;
  };
  const double loss_d = criterion(k_d);
  const double loss_p = criterion(k_p);
  out.losses = {loss_d, loss_p};
  out.evaluated = 2;
  if (loss_d < loss_p || (loss_d == loss_p && k_d <= k_p)) {
    out.index = k_d;
    out.branch = Branch::kDistortion;
  } else {
    out.index = k_p;
    out.branch = Branch::kPerception;
  }
  return out;
}

// Returns log c(y; x, i) for the fixed target condition.
using ClassifierLogProb = std::function<double(VecView x, int i)>;

// CCG: over K~ uniform draws, argmin -log c(y; mu + sigma_i C_i(k), i).
inline SelectionOutcome select_ccg(const ClassifierLogProb& classifier, VecView mu, double sigma,
                                   const Codebook& book, int i, std::uint32_t subset, RandomStream& rng) {
  require_same_dim(mu.size(), book.dim(), "mean");
  detail::ArgMin arg;
  SelectionOutcome out;
  for (std::uint32_t idx : detail::draw_subset(rng, book.size(i), subset)) {
    const Vec candidate = add_scaled(mu, sigma, book.entry(i, idx));
    const double logp = classifier(candidate, i);
    if (std::isnan(logp)) throw NumericError("classifier returned NaN");
    arg.offer(idx, -logp);
    out.losses.push_back(-logp);
  }
  out.index = arg.best();
  out.evaluated = arg.evaluated();
  return out;
}

// CCFG: over K~ uniform draws, argmax <C_i(k), s(x|y) - s(x)>.
inline SelectionOutcome select_ccfg(VecView cond_score, VecView uncond_score, const Codebook& book, int i,
                                    std::uint32_t subset, RandomStream& rng) {
  require_same_dim(cond_score.size(), book.dim(), "conditional score");
  require_same_dim(uncond_score.size(), book.dim(), "unconditional score");
  detail::require_finite(cond_score, "conditional score");
  detail::require_finite(uncond_score, "unconditional score");
  const Vec direction = subtract(cond_score, uncond_score);
  detail::ArgMin arg;
  SelectionOutcome out;
  for (std::uint32_t idx : detail::draw_subset(rng, book.size(i), subset)) {
    const double loss = -dot(book.entry(i, idx), direction);
    arg.offer(idx, loss);
    out.losses.push_back(loss);
  }
  out.index = arg.best();
  out.evaluated = arg.evaluated();
  return out;
}

}  // namespace ddcm
