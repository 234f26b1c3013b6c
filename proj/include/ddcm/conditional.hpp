#pragma once

#include <functional>
#include <optional>

#include "ddcm/gmm.hpp"
#include "ddcm/sampler.hpp"
#include "ddcm/selection.hpp"

namespace ddcm {

// Compressed conditional generation policies. Each one only decides which
// codebook index to take; decoding never needs the condition.

// Supplies grad_x log p_i(y | x_i) for the state of step i.
using LikelihoodGradient = std::function<Vec(const StepState&)>;

// y = x0: sqrt(abar_i) / (1 - abar_i) * (x0 - x0_hat_{0|i}).
inline LikelihoodGradient clean_target_gradient(Vec x0) {
  return [x0 = std::move(x0)](const StepState& s) {
    const Vec x0_hat = model_x0(s.model, s.x, s.step, s.schedule, s.condition);
    return clean_target_likelihood_grad(x0, x0_hat, s.step, s.schedule);
  };
}

// Exact gradient for a linear-Gaussian observation under a GMM prior.
inline LikelihoodGradient gmm_observation_gradient(const GmmModel& model, LinearObservation obs) {
  return [&model, obs = std::move(obs)](const StepState& s) {
    return model.likelihood_grad(s.x, s.schedule.base_step(s.step), obs, s.condition);
  };
}

// Base for policies that draw the initial index uniformly and keep a count
// of evaluated candidates.
class CountingPolicy : public NoisePolicy {
 public:
  explicit CountingPolicy(RandomStream& rng) : rng_(rng) {}
  std::uint32_t init_index(std::uint32_t k_init) override { return rng_.uniform_index(k_init); }
  std::uint32_t max_evaluated() const { return max_evaluated_; }

 protected:
  std::uint32_t record(const SelectionOutcome& outcome) {
    max_evaluated_ = std::max(max_evaluated_, outcome.evaluated);
    return outcome.index;
  }
  RandomStream& rng_;

 private:
  std::uint32_t max_evaluated_ = 0;
};

// L_P = ||C_i(k) - sigma_i grad||^2, optionally over a K~ subset.
class PosteriorLossPolicy final : public CountingPolicy {
 public:
  PosteriorLossPolicy(LikelihoodGradient gradient, RandomStream& rng,
                      std::optional<std::uint32_t> subset = std::nullopt)
      : CountingPolicy(rng), gradient_(std::move(gradient)), subset_(subset) {}

  StepSymbols choose(const StepState& s) override {
    const Vec grad = gradient_(s);
    std::optional<std::uint32_t> subset;
    if (subset_) subset = std::min(*subset_, s.book.size(s.step));
    return {{record(select_posterior_loss(grad, s.schedule.sigma(s.step), s.book, s.step, subset, &rng_))}, {}};
  }

 private:
  LikelihoodGradient gradient_;
  std::optional<std::uint32_t> subset_;
};

// ||y - A(mu_i + sigma_i C_i(k))||^2.
class LinearInversePolicy final : public CountingPolicy {
 public:
  LinearInversePolicy(LinearObservation obs, RandomStream& rng) : CountingPolicy(rng), obs_(std::move(obs)) {}

  StepSymbols choose(const StepState& s) override {
    return {{record(select_linear_inverse(obs_.y, obs_.op, s.mean, s.schedule.sigma(s.step), s.book, s.step))}, {}};
  }

 private:
  LinearObservation obs_;
};

// Perception-distortion tradeoff around a reference r(y).
class RestorationPolicy final : public CountingPolicy {
 public:
  RestorationPolicy(Vec reference, double lambda, QualityMeasure quality, RandomStream& rng)
      : CountingPolicy(rng), reference_(std::move(reference)), lambda_(lambda), quality_(std::move(quality)) {}

  StepSymbols choose(const StepState& s) override {
    auto outcome = select_restoration(reference_, s.x, s.mean, s.model, s.schedule, s.book, s.step, lambda_, quality_,
                                      rng_, s.condition);
    branches.push_back(*outcome.branch);
    return {{record(outcome)}, {}};
  }

  std::vector<Branch> branches;

 private:
  Vec reference_;
  double lambda_;
  QualityMeasure quality_;
};

// Compressed classifier guidance.
class CcgPolicy final : public CountingPolicy {
 public:
  CcgPolicy(ClassifierLogProb classifier, std::uint32_t subset, RandomStream& rng)
      : CountingPolicy(rng), classifier_(std::move(classifier)), subset_(subset) {}

  StepSymbols choose(const StepState& s) override {
    const std::uint32_t subset = std::min(subset_, s.book.size(s.step));
    return {{record(select_ccg(classifier_, s.mean, s.schedule.sigma(s.step), s.book, s.step, subset, rng_))}, {}};
  }

 private:
  ClassifierLogProb classifier_;
  std::uint32_t subset_;
};

// Compressed classifier-free guidance. The trajectory itself runs
// unconditionally; the target condition only steers index choice.
class CcfgPolicy final : public CountingPolicy {
 public:
  CcfgPolicy(Condition target, std::uint32_t subset, RandomStream& rng)
      : CountingPolicy(rng), target_(std::move(target)), subset_(subset) {}

  StepSymbols choose(const StepState& s) override {
    const Vec cond = model_score(s.model, s.x, s.step, s.schedule, target_);
    const std::uint32_t subset = std::min(subset_, s.book.size(s.step));
    return {{record(select_ccfg(cond, s.score, s.book, s.step, subset, rng_))}, {}};
  }

 private:
  Condition target_;
  std::uint32_t subset_;
};

// Analytic time-t classifier c(label; x, i) of a labelled GMM.
inline ClassifierLogProb gmm_classifier(const GmmModel& model, const Schedule& sched, int label) {
  return [&model, &sched, label](VecView x, int i) { return model.class_logprob(x, sched.base_step(i), label); };
}

}  // namespace ddcm
