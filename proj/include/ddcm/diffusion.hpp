#pragma once

#include <cmath>

#include "ddcm/model.hpp"
#include "ddcm/schedule.hpp"
#include "ddcm/vec.hpp"

namespace ddcm {

// x0_hat = (x + (1 - abar_i) s) / sqrt(abar_i)
inline Vec score_to_x0(VecView x, int i, VecView s, const Schedule& sched) {
  require_same_dim(x.size(), s.size(), "score_to_x0");
  const double abar = sched.alpha_bar(i);
  if (!(abar > 0.0)) throw InvalidArgument("alpha_bar is zero");
  const double inv = 1.0 / std::sqrt(abar);
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] + (1.0 - abar) * s[j]) * inv;
  return out;
}

// s = (sqrt(abar_i) x0_hat - x) / (1 - abar_i)
inline Vec x0_to_score(VecView x, int i, VecView x0_hat, const Schedule& sched) {
  require_same_dim(x.size(), x0_hat.size(), "x0_to_score");
  const double abar = sched.alpha_bar(i);
  if (!(abar < 1.0)) throw InvalidArgument("score undefined where alpha_bar == 1");
  const double root = std::sqrt(abar);
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (root * x0_hat[j] - x[j]) / (1.0 - abar);
  return out;
}

// DDPM posterior mean mu_i(x) = (x + (1 - alpha_i) s) / sqrt(alpha_i).
inline Vec posterior_mean(VecView x, int i, VecView s, const Schedule& sched) {
  require_same_dim(x.size(), s.size(), "posterior_mean");
  const double a = sched.alpha(i);
  const double inv = 1.0 / std::sqrt(a);
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] + (1.0 - a) * s[j]) * inv;
  return out;
}

// x_{i-1} = mu_i + sigma_i * noise for i >= 2. Step 1 adds no noise and
// never reads `noise`.
inline Vec step_from_mean(VecView mu, int i, VecView noise, const Schedule& sched) {
  if (i == 1) return Vec(mu.begin(), mu.end());
  return add_scaled(mu, sched.sigma(i), noise);
}

inline Vec model_score(const ScoreModel& model, VecView x, int i, const Schedule& sched,
                       const Condition& condition = std::nullopt) {
  return model.score(x, sched.base_step(i), condition);
}

inline Vec model_mean(const ScoreModel& model, VecView x, int i, const Schedule& sched,
                      const Condition& condition = std::nullopt) {
  return posterior_mean(x, i, model_score(model, x, i, sched, condition), sched);
}

inline Vec model_x0(const ScoreModel& model, VecView x, int i, const Schedule& sched,
                    const Condition& condition = std::nullopt) {
  return model.denoise(x, sched.base_step(i), condition);
}

inline Vec ddcm_step(VecView x, int i, VecView noise, const ScoreModel& model,
                     const Schedule& sched, const Condition& condition = std::nullopt) {
  if (i >= 2) require_same_dim(x.size(), noise.size(), "ddcm_step noise");
  return step_from_mean(model_mean(model, x, i, sched, condition), i, noise, sched);
}

}  // namespace ddcm
