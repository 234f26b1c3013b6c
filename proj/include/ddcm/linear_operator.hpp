#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "ddcm/error.hpp"
#include "ddcm/vec.hpp"

namespace ddcm {

// Linear degradation A: either a coordinate-selection mask (inpainting) or
// a dense rows x d matrix.
class LinearOperator {
 public:
  static LinearOperator mask(std::size_t dim, std::vector<std::size_t> observed) {
    std::sort(observed.begin(), observed.end());
    if (std::adjacent_find(observed.begin(), observed.end()) != observed.end()) {
      throw InvalidArgument("mask repeats a coordinate");
    }
    if (!observed.empty() && observed.back() >= dim) throw InvalidArgument("mask index out of range");
    LinearOperator op;
    op.dim_ = dim;
    op.impl_ = std::move(observed);
    return op;
  }

  static LinearOperator identity(std::size_t dim) {
    std::vector<std::size_t> all(dim);
    for (std::size_t j = 0; j < dim; ++j) all[j] = j;
    return mask(dim, std::move(all));
  }

  static LinearOperator dense(Eigen::MatrixXd matrix) {
    if (matrix.cols() == 0) throw InvalidArgument("operator needs at least one column");
    LinearOperator op;
    op.dim_ = static_cast<std::size_t>(matrix.cols());
    op.impl_ = std::move(matrix);
    return op;
  }

  std::size_t input_dim() const { return dim_; }
  std::size_t output_dim() const {
    if (is_mask()) return observed().size();
    return static_cast<std::size_t>(matrix().rows());
  }

  bool is_mask() const { return std::holds_alternative<std::vector<std::size_t>>(impl_); }
  const std::vector<std::size_t>& observed() const { return std::get<std::vector<std::size_t>>(impl_); }
  const Eigen::MatrixXd& matrix() const { return std::get<Eigen::MatrixXd>(impl_); }

  Vec apply(VecView x) const {
    require_same_dim(x.size(), dim_, "operator input");
    if (is_mask()) {
      Vec out;
      out.reserve(observed().size());
      for (std::size_t j : observed()) out.push_back(x[j]);
      return out;
    }
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd y = matrix() * xv;
    return Vec(y.data(), y.data() + y.size());
  }

  Vec apply_transpose(VecView r) const {
    require_same_dim(r.size(), output_dim(), "operator adjoint input");
    if (is_mask()) {
      Vec out(dim_, 0.0);
      for (std::size_t k = 0; k < observed().size(); ++k) out[observed()[k]] = r[k];
      return out;
    }
    const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    const Eigen::VectorXd x = matrix().transpose() * rv;
    return Vec(x.data(), x.data() + x.size());
  }

  Eigen::MatrixXd to_matrix() const {
    if (!is_mask()) return matrix();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(output_dim()),
                                              static_cast<Eigen::Index>(dim_));
    for (std::size_t k = 0; k < observed().size(); ++k) {
      m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(observed()[k])) = 1.0;
    }
    return m;
  }

 private:
  std::size_t dim_ = 0;
  std::variant<std::vector<std::size_t>, Eigen::MatrixXd> impl_;
};

// y = A x0 + noise_std * eps.
struct LinearObservation {
  LinearOperator op;
  Vec y;
  double noise_std = 0.0;

  void validate(std::size_t dim) const {
    require_same_dim(op.input_dim(), dim, "observation operator");
    require_same_dim(y.size(), op.output_dim(), "observation");
    if (!(noise_std >= 0.0)) throw InvalidArgument("noise_std must be non-negative");
  }
};

}  // namespace ddcm
