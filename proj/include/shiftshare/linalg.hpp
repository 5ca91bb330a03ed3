#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shiftshare/errors.hpp"

namespace shiftshare {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Relative pivot tolerance for every rank-revealing factorization.
inline constexpr double kRankTolerance = 1e-10;

namespace detail {

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Eigen::ColPivHouseholderQR<Matrix> pivoted_qr(const Matrix& a) {
  Eigen::ColPivHouseholderQR<Matrix> qr(a.rows(), a.cols());
  qr.setThreshold(kRankTolerance);
  qr.compute(a);
  return qr;
}

inline Index rank_of(const Matrix& a) {
  if (a.cols() == 0) return 0;
  return pivoted_qr(a).rank();
}

}  // namespace detail

/// Inner product sum_i w_i a_i b_i; the plain dot product when w is empty.
inline double weighted_dot(const Vector& a, const Vector& b,
                           const std::optional<Vector>& w) {
  if (!w) return a.dot(b);
  return (a.array() * b.array() * w->array()).sum();
}

/// Weighted least-squares residual maker for a fixed control matrix Z.
///
/// Factors sqrt(w) Z once with column-pivoted Householder QR; every call to
/// residualize() returns v - Z (Z' W Z)^{-1} Z' W v. An empty Z (zero columns)
/// is valid and residualizes to the identity.
class ControlProjector {
 public:
  ControlProjector() = default;

  explicit ControlProjector(Matrix z, std::optional<Vector> weights = {},
                            std::vector<std::string> column_names = {})
      : z_(std::move(z)), weights_(std::move(weights)) {
    if (weights_ && weights_->size() != z_.rows()) {
      throw DimensionError("observation weights have length " +
                           std::to_string(weights_->size()) + ", expected " +
                           std::to_string(z_.rows()));
    }
    if (z_.cols() == 0) return;
    if (weights_) sqrt_w_ = weights_->array().sqrt().matrix();
    qr_ = detail::pivoted_qr(scaled(z_));
    if (qr_.rank() < z_.cols()) {
      const std::size_t col = first_dependent_column();
      std::string name = col < column_names.size()
                             ? column_names[col]
                             : "z" + std::to_string(col + 1);
      throw RankError("control column " + std::to_string(col + 1) + " (" +
                          name +
                          ") is linearly dependent on the preceding controls",
                      col);
    }
  }

  Index rows() const { return z_.rows(); }
  Index columns() const { return z_.cols(); }
  const Matrix& z() const { return z_; }
  const std::optional<Vector>& weights() const { return weights_; }

  Vector coefficients(const Vector& v) const {
    check_rows(v.size());
    if (z_.cols() == 0) return Vector(0);
    return qr_.solve(scaled(v));
  }

  Vector residualize(const Vector& v) const {
    if (z_.cols() == 0) {
      check_rows(v.size());
      return v;
    }
    return v - z_ * coefficients(v);
  }

  Matrix residualize(const Matrix& v) const {
    check_rows(v.rows());
    if (z_.cols() == 0) return v;
    Matrix out(v.rows(), v.cols());
    for (Index j = 0; j < v.cols(); ++j) {
      Vector col = v.col(j);
      out.col(j) = residualize(col);
    }
    return out;
  }

 private:
  void check_rows(Index n) const {
    if (n != z_.rows()) {
      throw DimensionError("vector of length " + std::to_string(n) +
                           " does not match " + std::to_string(z_.rows()) +
                           " control rows");
    }
  }

  template <typename Derived>
  Matrix scaled(const Eigen::MatrixBase<Derived>& a) const {
    if (!weights_) return a;
    return sqrt_w_.asDiagonal() * a;
  }

  std::size_t first_dependent_column() const {
    const Matrix a = scaled(z_);
    for (Index k = 1; k <= a.cols(); ++k) {
      if (detail::rank_of(a.leftCols(k)) < k) return static_cast<std::size_t>(k - 1);
    }
    return static_cast<std::size_t>(a.cols() - 1);
  }

  Matrix z_;
  std::optional<Vector> weights_;
  Vector sqrt_w_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
};

/// Weighted least-squares projection of region-level vectors on the share
/// matrix W, i.e. (W' Omega W)^{-1} W' Omega v. Requires N >= S and W of full
/// column rank under the active weights.
class SectorProjector {
 public:
  SectorProjector() = default;

  SectorProjector(const Matrix& w, std::optional<Vector> weights = {})
      : weights_(std::move(weights)) {
    const Index n = w.rows();
    const Index s = w.cols();
    if (weights_ && weights_->size() != n) {
      throw DimensionError("observation weights do not match share rows");
    }
    if (n < s) {
      throw AkmInfeasible("N < S: " + std::to_string(n) + " regions but " +
                          std::to_string(s) +
                          " sectors; the sector projection needs N >= S "
                          "(aggregate sectors or drop small ones)");
    }
    Matrix a = w;
    if (weights_) {
      sqrt_w_ = weights_->array().sqrt().matrix();
      a = sqrt_w_.asDiagonal() * w;
    }
    qr_ = detail::pivoted_qr(a);
    if (qr_.rank() < s) {
      throw AkmInfeasible("share matrix W is rank deficient (rank " +
                          std::to_string(qr_.rank()) + " < S = " +
                          std::to_string(s) +
                          "); drop or merge collinear sectors");
    }
  }

  Vector project(const Vector& v) const {
    if (!weights_) return qr_.solve(v);
    return qr_.solve(Vector(sqrt_w_.cwiseProduct(v)));
  }

 private:
  std::optional<Vector> weights_;
  Vector sqrt_w_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
};

}  // namespace shiftshare
