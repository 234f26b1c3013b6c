#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ddcm/schedule.hpp"
#include "ddcm/vec.hpp"

namespace ddcm {

// Conditioning input for conditional models (class label, prompt, ...).
using Condition = std::optional<std::string>;

// A score model over the VP chain of schedule(). Timesteps passed in are
// base-schedule steps in [0, T_base]; t = 0 is the clean signal.
//
// Implementations provide at least one of denoise/score; the other is
// derived through s = (sqrt(abar) x0_hat - x) / (1 - abar). Implementations
// must be safe to call concurrently from const context.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual std::size_t dim() const = 0;
  virtual const Schedule& schedule() const = 0;
  virtual std::uint64_t model_id() const = 0;
  virtual bool supports_conditioning() const { return false; }

  Vec denoise(VecView x, int t, const Condition& condition = std::nullopt) const {
    check_call(x, condition);
    return do_denoise(x, t, condition);
  }

  Vec score(VecView x, int t, const Condition& condition = std::nullopt) const {
    check_call(x, condition);
    return do_score(x, t, condition);
  }

 protected:
  // Default implementations convert between the two parameterisations; a
  // model must override at least one of them.
  virtual Vec do_denoise(VecView x, int t, const Condition& condition) const;
  virtual Vec do_score(VecView x, int t, const Condition& condition) const;

 private:
  void check_call(VecView x, const Condition& condition) const {
    require_same_dim(x.size(), dim(), "score model input");
    if (condition && !supports_conditioning()) {
      throw InvalidArgument("model does not accept a condition");
    }
  }
};

inline Vec ScoreModel::do_denoise(VecView x, int t, const Condition& condition) const {
  const Vec s = do_score(x, t, condition);
  const double abar = schedule().alpha_bar(t);
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[j] = (x[j] + (1.0 - abar) * s[j]) / std::sqrt(abar);
  }
  return out;
}

inline Vec ScoreModel::do_score(VecView x, int t, const Condition& condition) const {
  const double abar = schedule().alpha_bar(t);
  if (!(abar < 1.0)) throw InvalidArgument("score undefined at a noiseless step");
  const Vec x0 = do_denoise(x, t, condition);
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[j] = (std::sqrt(abar) * x0[j] - x[j]) / (1.0 - abar);
  }
  return out;
}

}  // namespace ddcm
