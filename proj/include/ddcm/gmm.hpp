#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "ddcm/diffusion.hpp"
#include "ddcm/hash.hpp"
#include "ddcm/linear_operator.hpp"
#include "ddcm/model.hpp"
#include "ddcm/rng.hpp"

namespace ddcm {

// Diagonal-covariance Gaussian mixture. labels is either empty or holds one
// class label per component.
struct GmmParams {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Vec> variances;
  std::vector<int> labels;

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
  bool labelled() const { return !labels.empty(); }

  void validate() const {
    const std::size_t j = weights.size();
    if (j == 0) throw InvalidArgument("mixture needs at least one component");
    if (means.size() != j || variances.size() != j) throw InvalidArgument("component count mismatch");
    if (!labels.empty() && labels.size() != j) throw InvalidArgument("one label per component");
    const std::size_t d = dim();
    if (d == 0) throw InvalidArgument("mixture dimension must be positive");
    double total = 0.0;
    for (std::size_t c = 0; c < j; ++c) {
      if (!(weights[c] > 0.0)) throw InvalidArgument("weights must be positive");
      total += weights[c];
      require_same_dim(means[c].size(), d, "component mean");
      require_same_dim(variances[c].size(), d, "component variance");
      for (double v : variances[c]) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("variances must be positive");
      }
      if (!all_finite(means[c])) throw InvalidArgument("means must be finite");
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("weights must sum to 1");
  }

  static GmmParams isotropic(Vec mean, double variance = 1.0) {
    GmmParams p;
    p.weights = {1.0};
    p.variances = {Vec(mean.size(), variance)};
    p.means = {std::move(mean)};
    return p;
  }
};

inline double log_sum_exp(std::span<const double> values) {
  const double peak = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

namespace detail {

// Evidence of y under x0 ~ N(mean, diag(cov)), y = A x0 + noise_std eps,
// plus A^T G^{-1} (y - A mean) with G = A diag(cov) A^T + noise_std^2 I.
struct ObservationTerm {
  double log_evidence = 0.0;
  Vec back_projected;
};

inline ObservationTerm observation_term(const LinearObservation& obs, VecView mean, VecView cov) {
  const Vec predicted = obs.op.apply(mean);
  const Vec residual = subtract(obs.y, predicted);
  const double noise_var = obs.noise_std * obs.noise_std;
  ObservationTerm term;
  if (obs.op.is_mask()) {
    Vec scaled_residual(residual.size());
    double log_ev = 0.0;
    for (std::size_t k = 0; k < residual.size(); ++k) {
      const double g = cov[obs.op.observed()[k]] + noise_var;
      if (!(g > 0.0)) throw NumericError("degenerate observation covariance");
      scaled_residual[k] = residual[k] / g;
      log_ev -= 0.5 * (residual[k] * residual[k] / g + std::log(2.0 * std::numbers::pi * g));
    }
    term.log_evidence = log_ev;
    term.back_projected = obs.op.apply_transpose(scaled_residual);
    return term;
  }
  if (obs.noise_std == 0.0) {
    throw InvalidArgument("noiseless observation needs a coordinate-selection operator");
  }
  const Eigen::MatrixXd a = obs.op.matrix();
  const Eigen::Map<const Eigen::VectorXd> c(cov.data(), static_cast<Eigen::Index>(cov.size()));
  Eigen::MatrixXd g = a * c.asDiagonal() * a.transpose();
  g.diagonal().array() += noise_var;
  const Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success) throw NumericError("observation covariance not positive definite");
  const Eigen::Map<const Eigen::VectorXd> r(residual.data(), static_cast<Eigen::Index>(residual.size()));
  const Eigen::VectorXd solved = llt.solve(r);
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  term.log_evidence = -0.5 * (r.dot(solved) + log_det +
                              static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi));
  term.back_projected = obs.op.apply_transpose(Vec(solved.data(), solved.data() + solved.size()));
  return term;
}

}  // namespace detail

// Exact score model of a diagonal GMM data distribution diffused by a VP
// chain: p_t = sum_j w_j N(sqrt(abar_t) mu_j, abar_t Sigma_j + (1 - abar_t) I).
class GmmModel final : public ScoreModel {
 public:
  GmmModel(GmmParams params, Schedule schedule)
      : params_(std::move(params)), schedule_(std::move(schedule)) {
    params_.validate();
    model_id_ = compute_model_id();
  }

  std::size_t dim() const override { return params_.dim(); }
  const Schedule& schedule() const override { return schedule_; }
  std::uint64_t model_id() const override { return model_id_; }
  bool supports_conditioning() const override { return params_.labelled(); }
  const GmmParams& params() const { return params_; }

  std::vector<int> class_labels() const {
    const std::set<int> unique(params_.labels.begin(), params_.labels.end());
    return {unique.begin(), unique.end()};
  }

  // Log joint log(w_j N_j(x)) of every (active) component at base step t.
  std::vector<double> component_log_joint(VecView x, int t, const Condition& condition) const {
    const double abar = schedule_.alpha_bar(t);
    const double root = std::sqrt(abar);
    const auto active = active_components(condition);
    std::vector<double> out;
    out.reserve(active.size());
    for (std::size_t c : active) {
      double lp = std::log(params_.weights[c]);
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double v = abar * params_.variances[c][j] + (1.0 - abar);
        const double diff = x[j] - root * params_.means[c][j];
        lp -= 0.5 * (diff * diff / v + std::log(2.0 * std::numbers::pi * v));
      }
      out.push_back(lp);
    }
    return out;
  }

  double log_density(VecView x, int t, const Condition& condition = std::nullopt) const {
    require_same_dim(x.size(), dim(), "log_density");
    return log_sum_exp(component_log_joint(x, t, condition));
  }

  // log p_t(label | x) from the responsibilities of the time-t mixture.
  double class_logprob(VecView x, int t, int label) const {
    if (!params_.labelled()) throw InvalidArgument("mixture has no class labels");
    require_same_dim(x.size(), dim(), "class_logprob");
    const auto joint = component_log_joint(x, t, std::nullopt);
    std::vector<double> in_class;
    for (std::size_t c = 0; c < joint.size(); ++c) {
      if (params_.labels[c] == label) in_class.push_back(joint[c]);
    }
    if (in_class.empty()) throw InvalidArgument("unknown class label " + std::to_string(label));
    return log_sum_exp(in_class) - log_sum_exp(joint);
  }

  // Exact grad_x log p_t(y | x) for a linear-Gaussian observation of x0.
  Vec likelihood_grad(VecView x, int t, const LinearObservation& obs,
                      const Condition& condition = std::nullopt) const {
    require_same_dim(x.size(), dim(), "likelihood_grad");
    obs.validate(dim());
    if (t < 1) throw InvalidArgument("likelihood gradient needs t >= 1");
    const double abar = schedule_.alpha_bar(t);
    const double root = std::sqrt(abar);
    const auto active = active_components(condition);
    const auto joint = component_log_joint(x, t, condition);
    const double log_px = log_sum_exp(joint);

    const std::size_t d = dim();
    std::vector<double> log_weight(active.size());
    std::vector<Vec> terms(active.size(), Vec(d));
    Vec marginal_score(d, 0.0);
    std::vector<Vec> component_score(active.size(), Vec(d));
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t c = active[a];
      const double resp = std::exp(joint[a] - log_px);
      Vec post_mean(d), post_cov(d), gain(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double prior_var = params_.variances[c][j];
        const double v = abar * prior_var + (1.0 - abar);
        const double diff = x[j] - root * params_.means[c][j];
        component_score[a][j] = -diff / v;
        marginal_score[j] += resp * component_score[a][j];
        gain[j] = prior_var * root / v;
        post_mean[j] = params_.means[c][j] + gain[j] * diff;
        post_cov[j] = prior_var * (1.0 - abar) / v;
      }
      const auto term = detail::observation_term(obs, post_mean, post_cov);
      log_weight[a] = joint[a] - log_px + term.log_evidence;
      for (std::size_t j = 0; j < d; ++j) terms[a][j] = gain[j] * term.back_projected[j];
    }
    const double norm = log_sum_exp(log_weight);
    Vec grad(d, 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const double rho = std::exp(log_weight[a] - norm);
      for (std::size_t j = 0; j < d; ++j) {
        grad[j] += rho * (component_score[a][j] - marginal_score[j] + terms[a][j]);
      }
    }
    return grad;
  }

  // Exact E[x0 | y] under the (optionally class-restricted) mixture prior.
  Vec mmse_restore(const LinearObservation& obs, const Condition& condition = std::nullopt) const {
    obs.validate(dim());
    const auto active = active_components(condition);
    const std::size_t d = dim();
    std::vector<double> log_weight(active.size());
    std::vector<Vec> means(active.size(), Vec(d));
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t c = active[a];
      const auto term = detail::observation_term(obs, params_.means[c], params_.variances[c]);
      log_weight[a] = std::log(params_.weights[c]) + term.log_evidence;
      for (std::size_t j = 0; j < d; ++j) {
        means[a][j] = params_.means[c][j] + params_.variances[c][j] * term.back_projected[j];
      }
    }
    const double norm = log_sum_exp(log_weight);
    Vec out(d, 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const double rho = std::exp(log_weight[a] - norm);
      for (std::size_t j = 0; j < d; ++j) out[j] += rho * means[a][j];
    }
    return out;
  }

  Vec sample_prior(RandomStream& rng, const Condition& condition = std::nullopt) const {
    const auto active = active_components(condition);
    double total = 0.0;
    for (std::size_t c : active) total += params_.weights[c];
    double u = rng.uniform_open() * total;
    std::size_t pick = active.back();
    for (std::size_t c : active) {
      if (u < params_.weights[c]) {
        pick = c;
        break;
      }
      u -= params_.weights[c];
    }
    Vec x(dim());
    for (std::size_t j = 0; j < dim(); ++j) {
      x[j] = params_.means[pick][j] + std::sqrt(params_.variances[pick][j]) * rng.normal();
    }
    return x;
  }

  // Canonical serialisation hashed into the model id; schedule included.
  std::vector<std::uint8_t> canonical_bytes() const {
    ByteWriter w;
    w.put_bytes("DDCMMDL-gmm");
    w.put_le(static_cast<std::uint32_t>(dim()));
    w.put_le(static_cast<std::uint32_t>(params_.components()));
    for (std::size_t c = 0; c < params_.components(); ++c) {
      w.put_f64(params_.weights[c]);
      w.put_le(static_cast<std::int32_t>(params_.labelled() ? params_.labels[c] : 0));
      for (double v : params_.means[c]) w.put_f64(v);
      for (double v : params_.variances[c]) w.put_f64(v);
    }
    w.put_le(static_cast<std::uint8_t>(params_.labelled()));
    const auto& desc = schedule_.descriptor();
    w.put_le(static_cast<std::uint32_t>(desc.steps));
    w.put_f64(desc.beta_start);
    w.put_f64(desc.beta_end);
    return w.take();
  }

 protected:
  Vec do_score(VecView x, int t, const Condition& condition) const override {
    const double abar = schedule_.alpha_bar(t);
    const double root = std::sqrt(abar);
    const auto active = active_components(condition);
    const auto joint = component_log_joint(x, t, condition);
    const double norm = log_sum_exp(joint);
    Vec out(x.size(), 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t c = active[a];
      const double resp = std::exp(joint[a] - norm);
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double v = abar * params_.variances[c][j] + (1.0 - abar);
        out[j] -= resp * (x[j] - root * params_.means[c][j]) / v;
      }
    }
    return out;
  }

  Vec do_denoise(VecView x, int t, const Condition& condition) const override {
    const double abar = schedule_.alpha_bar(t);
    const double root = std::sqrt(abar);
    const auto active = active_components(condition);
    const auto joint = component_log_joint(x, t, condition);
    const double norm = log_sum_exp(joint);
    Vec out(x.size(), 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t c = active[a];
      const double resp = std::exp(joint[a] - norm);
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double prior_var = params_.variances[c][j];
        const double v = abar * prior_var + (1.0 - abar);
        const double mean = params_.means[c][j] + prior_var * root / v * (x[j] - root * params_.means[c][j]);
        out[j] += resp * mean;
      }
    }
    return out;
  }

 private:
  std::vector<std::size_t> active_components(const Condition& condition) const {
    std::vector<std::size_t> out;
    if (!condition) {
      out.resize(params_.components());
      for (std::size_t c = 0; c < out.size(); ++c) out[c] = c;
      return out;
    }
    if (!params_.labelled()) throw InvalidArgument("model does not accept a condition");
    const int label = parse_label(*condition);
    for (std::size_t c = 0; c < params_.components(); ++c) {
      if (params_.labels[c] == label) out.push_back(c);
    }
    if (out.empty()) throw InvalidArgument("unknown class label " + *condition);
    return out;
  }

  static int parse_label(const std::string& text) {
    std::size_t used = 0;
    int label = 0;
    try {
      label = std::stoi(text, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("condition is not an integer class label: " + text);
    }
    if (used != text.size()) throw InvalidArgument("condition is not an integer class label: " + text);
    return label;
  }

  std::uint64_t compute_model_id() const { return truncated_hash64(canonical_bytes()); }

  GmmParams params_;
  Schedule schedule_;
  std::uint64_t model_id_ = 0;
};

// Likelihood gradient for the clean-target case y = x0:
// sqrt(abar_i) / (1 - abar_i) * (x0 - x0_hat).
inline Vec clean_target_likelihood_grad(VecView x0, VecView x0_hat, int i, const Schedule& sched) {
  require_same_dim(x0.size(), x0_hat.size(), "clean_target_likelihood_grad");
  const double abar = sched.alpha_bar(i);
  if (!(abar < 1.0)) throw InvalidArgument("likelihood gradient undefined where alpha_bar == 1");
  return scaled(subtract(x0, x0_hat), std::sqrt(abar) / (1.0 - abar));
}

}  // namespace ddcm
