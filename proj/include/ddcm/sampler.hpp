#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ddcm/codebook.hpp"
#include "ddcm/diffusion.hpp"
#include "ddcm/rng.hpp"

namespace ddcm {

// Symbols chosen at one step: M codebook indices (1-based) and, for
// m = 2..M, the 1-based index of gamma_m in the coefficient set.
struct StepSymbols {
  std::vector<std::uint32_t> indices;
  std::vector<std::uint32_t> coefficients;

  friend bool operator==(const StepSymbols&, const StepSymbols&) = default;
};

// z <- gamma z + (1 - gamma) C(k), then z <- z / std(z).
inline void pursuit_update(Vec& z, VecView entry, double gamma) {
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = gamma * z[j] + (1.0 - gamma) * entry[j];
  const double sd = empirical_std(z);
  if (!(sd > 0.0)) throw NumericError("matching-pursuit noise has zero empirical std");
  for (double& v : z) v /= sd;
}

// The noise a set of step symbols stands for. With one index this is the
// raw codebook entry.
inline Vec compose_noise(const Codebook& book, int i, const StepSymbols& symbols, std::span<const double> gammas) {
  if (symbols.indices.empty()) throw InvalidArgument("step has no codebook index");
  if (symbols.coefficients.size() + 1 != symbols.indices.size()) {
    throw InvalidArgument("need one coefficient per refinement index");
  }
  const auto first = book.entry(i, symbols.indices.front());
  Vec z(first.begin(), first.end());
  for (std::size_t m = 1; m < symbols.indices.size(); ++m) {
    const std::uint32_t c = symbols.coefficients[m - 1];
    if (c < 1 || c > gammas.size()) throw InvalidArgument("coefficient index out of range");
    pursuit_update(z, book.entry(i, symbols.indices[m]), gammas[c - 1]);
  }
  return z;
}

// What a selection policy sees at step i (2 <= i <= T).
struct StepState {
  int step;
  VecView x;      // x_i
  VecView score;  // s_i(x_i) under `condition`
  VecView mean;   // mu_i(x_i)
  const Condition& condition;
  const ScoreModel& model;
  const Schedule& schedule;
  const Codebook& book;
};

class NoisePolicy {
 public:
  virtual ~NoisePolicy() = default;
  // Index into the initialisation codebook C_{T+1}.
  virtual std::uint32_t init_index(std::uint32_t k_init) = 0;
  // Called only at steps with K_i > 1.
  virtual StepSymbols choose(const StepState& state) = 0;
};

// Condition fed to the model at sampler step i.
using ConditionPlan = std::function<Condition(int step)>;

inline ConditionPlan constant_condition(Condition c = std::nullopt) {
  return [c = std::move(c)](int) { return c; };
}

struct Trajectory {
  Vec output;
  std::uint32_t init_index = 1;
  // symbols[T - i] holds step i, for i = T..2. Steps with K_i == 1 hold {1}.
  std::vector<StepSymbols> symbols;

  const StepSymbols& at_step(int i) const { return symbols[symbols.size() + 1 - static_cast<std::size_t>(i)]; }
};

// One DDCM trajectory: x_T = C_{T+1}(k_{T+1}); x_{i-1} = mu_i + sigma_i z_i
// for i = T..2 with z_i composed from the chosen symbols; x_0 = mu_1(x_1).
inline Trajectory run_ddcm(const ScoreModel& model, const Schedule& sched, const Codebook& book,
                           NoisePolicy& policy, std::span<const double> gammas,
                           const ConditionPlan& conditions = constant_condition()) {
  const int steps = sched.steps();
  if (book.spec().k_schedule.steps() != steps) throw InvalidArgument("codebook and schedule lengths differ");
  require_same_dim(book.dim(), model.dim(), "codebook vs model");
  Trajectory traj;
  const std::uint32_t k_init = book.size(steps + 1);
  traj.init_index = policy.init_index(k_init);
  const auto start = book.entry(steps + 1, traj.init_index);
  Vec x(start.begin(), start.end());
  traj.symbols.reserve(static_cast<std::size_t>(steps - 1));
  for (int i = steps; i >= 1; --i) {
    const Condition condition = conditions(i);
    const Vec s = model_score(model, x, i, sched, condition);
    Vec mu = posterior_mean(x, i, s, sched);
    if (i == 1) {
      x = std::move(mu);
      break;
    }
    StepSymbols symbols;
    if (book.size(i) == 1) {
      symbols.indices = {1};
    } else {
      symbols = policy.choose(StepState{i, x, s, mu, condition, model, sched, book});
    }
    const Vec noise = compose_noise(book, i, symbols, gammas);
    x = step_from_mean(mu, i, noise, sched);
    if (!all_finite(x)) {
      throw NumericError("trajectory state became non-finite at step " + std::to_string(i));
    }
    traj.symbols.push_back(std::move(symbols));
  }
  traj.output = std::move(x);
  return traj;
}

// Replays stored symbols.
class ReplayPolicy final : public NoisePolicy {
 public:
  ReplayPolicy(std::uint32_t init, const std::vector<StepSymbols>& symbols) : init_(init), symbols_(symbols) {}
  std::uint32_t init_index(std::uint32_t) override { return init_; }
  StepSymbols choose(const StepState& state) override {
    const std::size_t slot = symbols_.size() + 1 - static_cast<std::size_t>(state.step);
    return symbols_.at(slot);
  }

 private:
  std::uint32_t init_;
  const std::vector<StepSymbols>& symbols_;
};

// Unconditional DDCM generation: k_i ~ Unif{1..K_i}.
class RandomPolicy final : public NoisePolicy {
 public:
  explicit RandomPolicy(RandomStream& rng) : rng_(rng) {}
  std::uint32_t init_index(std::uint32_t k) override { return rng_.uniform_index(k); }
  StepSymbols choose(const StepState& state) override {
    return {{rng_.uniform_index(state.book.size(state.step))}, {}};
  }

 private:
  RandomStream& rng_;
};

// Classical DDPM with fresh N(0, I) noise at every step (K = infinity).
inline Vec run_ddpm(const ScoreModel& model, const Schedule& sched, RandomStream& rng,
                    const Condition& condition = std::nullopt) {
  Vec x = rng.normal_vector(model.dim());
  for (int i = sched.steps(); i >= 1; --i) {
    const Vec mu = model_mean(model, x, i, sched, condition);
    if (i == 1) return mu;
    x = step_from_mean(mu, i, rng.normal_vector(model.dim()), sched);
  }
  return x;
}

}  // namespace ddcm
