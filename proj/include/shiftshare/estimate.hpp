#pragma once

// Point estimation: shift-share construction, partialling out, OLS, IV and
// the leave-one-out shift-share instrument.
//
// Observation weights: when Design::obs_weight is set, every inner product is
// omega-weighted (sum_i omega_i a_i b_i) and Z is partialled out by weighted
// least squares. The unweighted formulas are recovered at omega = 1.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "shiftshare/data.hpp"
#include "shiftshare/errors.hpp"
#include "shiftshare/linalg.hpp"

namespace shiftshare {

enum class FitMode { ols, iv };

inline const char* to_string(FitMode m) { return m == FitMode::ols ? "ols" : "iv"; }

struct FitResult {
  FitMode mode = FitMode::ols;
  /// OLS coefficient on X, or the IV first-stage coefficient.
  double beta_hat = 0.0;
  /// IV structural coefficient.
  std::optional<double> alpha_hat;
  Vector delta_hat;
  /// Shift-share regressor (or instrument) before partialling out.
  Vector x;
  /// X with the controls partialled out.
  Vector x_dotdot;
  /// OLS residuals, or structural residuals in IV mode.
  Vector residuals;
  /// M_Z Y2 in IV mode.
  std::optional<Vector> y2_dotdot;
  std::optional<Vector> obs_weight;
  /// sum omega X.. X.. (OLS) or sum omega X.. Y2 (IV); the sandwich bread.
  double denominator = 0.0;
  /// False when share rows sum below one and Z does not span the sums.
  bool share_sums_controlled = true;

  /// The coefficient of interest: beta (OLS) or alpha (IV).
  double estimate() const {
    return mode == FitMode::iv ? alpha_hat.value_or(
                                     std::numeric_limits<double>::quiet_NaN())
                               : beta_hat;
  }
  /// Residuals as a function of the null, e(theta0) = residuals + (theta - theta0) * v.
  const Vector& null_direction() const {
    return mode == FitMode::iv ? *y2_dotdot : x_dotdot;
  }
};

/// X_i = sum_s w_is shifter_s.
inline Vector build_shift_share(const SharesMatrix& shares,
                                const Shifters& shifters) {
  if (shifters.values.size() != shares.n_sectors()) {
    throw DimensionError("shifters have length " +
                         std::to_string(shifters.values.size()) +
                         ", shares have " +
                         std::to_string(shares.n_sectors()) + " sectors");
  }
  return shares.w() * shifters.values;
}

/// v - Z (Z'Z)^{-1} Z' v, or its weighted analog.
inline Vector partial_out(const Matrix& z, const Vector& v,
                          const std::optional<Vector>& weights = {}) {
  return ControlProjector(z, weights).residualize(v);
}

inline Matrix partial_out(const Matrix& z, const Matrix& v,
                          const std::optional<Vector>& weights = {}) {
  return ControlProjector(z, weights).residualize(v);
}

namespace detail {

inline void check_fit_sizes(const ControlProjector& controls, Index n) {
  if (controls.rows() != n) {
    throw DimensionError("design has " + std::to_string(n) +
                         " regions but the controls have " +
                         std::to_string(controls.rows()) + " rows");
  }
  if (n <= controls.columns() + 1) {
    throw DimensionError("need N > K + 1 (N = " + std::to_string(n) +
                         ", K = " + std::to_string(controls.columns()) + ")");
  }
}

inline bool negligible(double value, double scale) {
  return value == 0.0 ||
         std::abs(value) <= 64 * std::numeric_limits<double>::epsilon() * scale;
}

}  // namespace detail

/// OLS of y on a given regressor x and the controls held by `controls`.
inline FitResult ols_fit(const ControlProjector& controls, const Vector& y,
                         const Vector& x) {
  const Index n = y.size();
  if (x.size() != n) throw DimensionError("regressor and outcome lengths differ");
  detail::check_fit_sizes(controls, n);
  const auto& om = controls.weights();

  FitResult fit;
  fit.mode = FitMode::ols;
  fit.x = x;
  fit.obs_weight = om;
  fit.x_dotdot = controls.residualize(x);
  fit.denominator = weighted_dot(fit.x_dotdot, fit.x_dotdot, om);
  if (detail::negligible(fit.denominator, weighted_dot(x, x, om))) {
    throw DegenerateRegressor(
        "shift-share regressor is collinear with the controls (X''X'' = 0)");
  }
  fit.beta_hat = weighted_dot(fit.x_dotdot, y, om) / fit.denominator;
  const Vector y_rest = y - x * fit.beta_hat;
  fit.delta_hat = controls.coefficients(y_rest);
  fit.residuals = controls.residualize(y_rest);
  return fit;
}

/// IV of y1 on y2 with instrument x and the controls held by `controls`.
inline FitResult iv_fit(const ControlProjector& controls, const Vector& y1,
                        const Vector& y2, const Vector& x) {
  const Index n = y1.size();
  if (x.size() != n || y2.size() != n) {
    throw DimensionError("instrument, treatment and outcome lengths differ");
  }
  detail::check_fit_sizes(controls, n);
  const auto& om = controls.weights();

  FitResult fit;
  fit.mode = FitMode::iv;
  fit.x = x;
  fit.obs_weight = om;
  fit.x_dotdot = controls.residualize(x);
  const double xx = weighted_dot(fit.x_dotdot, fit.x_dotdot, om);
  if (detail::negligible(xx, weighted_dot(x, x, om))) {
    throw DegenerateRegressor(
        "shift-share instrument is collinear with the controls");
  }
  fit.y2_dotdot = controls.residualize(y2);
  fit.denominator = weighted_dot(fit.x_dotdot, y2, om);
  const double scale = std::sqrt(xx * weighted_dot(*fit.y2_dotdot, *fit.y2_dotdot, om));
  if (detail::negligible(fit.denominator, scale)) {
    throw WeakInstrumentDegenerate(
        "instrument is orthogonal to the treatment (X''Y2 = 0); the point "
        "estimate is undefined but the null-imposed confidence set can still "
        "be computed");
  }
  fit.beta_hat = fit.denominator / xx;
  const double alpha = weighted_dot(fit.x_dotdot, y1, om) / fit.denominator;
  fit.alpha_hat = alpha;
  const Vector y_rest = y1 - y2 * alpha;
  fit.delta_hat = controls.coefficients(y_rest);
  fit.residuals = controls.residualize(y_rest);
  return fit;
}

inline ControlProjector make_controls(const Design& design) {
  return ControlProjector(design.z, design.obs_weight, design.control_names);
}

inline FitResult ols_fit(const Design& design, const SharesMatrix& shares,
                         const Shifters& shifters) {
  const Vector x = build_shift_share(shares, shifters);
  FitResult fit = ols_fit(make_controls(design), design.y1, x);
  fit.share_sums_controlled =
      controls_span_share_sums(shares, design.z, design.obs_weight);
  return fit;
}

inline FitResult iv_fit(const Design& design, const SharesMatrix& shares,
                        const Shifters& shifters) {
  if (!design.y2) throw DataError("IV mode requires the treatment column y2");
  const Vector x = build_shift_share(shares, shifters);
  FitResult fit = iv_fit(make_controls(design), design.y1, *design.y2, x);
  fit.share_sums_controlled =
      controls_span_share_sums(shares, design.z, design.obs_weight);
  return fit;
}

// ---------------------------------------------------------------------------
// Leave-one-out shift-share instrument

struct LooInstrument {
  /// sum_s w_is shifter_hat_s
  Vector x_hat;
  /// sum_s w_is shifter_hat_{s,-i}
  Vector x_hat_loo;
  /// shifter_hat_s = sum_j aggw_js X_js / n_check_s
  Vector shifter_estimates;
  /// X_is - shifter_hat_s (full-sample plug-in for the measurement error)
  Matrix psi_hat;
  /// (1/N) sum_{i,s} w_is aggw_is / n_check_s
  double bias_proxy = 0.0;
  /// Aggregation weights used to estimate the shifters.
  Matrix agg_weights;
  /// n_check_{s,-i} laid out as N x S.
  Matrix n_check_loo;
};

/// Builds the estimated and leave-one-out shift-share instruments from
/// region-sector shocks X_is aggregated with weights aggw_is.
inline LooInstrument build_loo_instrument(const SharesMatrix& shares,
                                          const Matrix& agg_weights,
                                          const Matrix& local_shocks) {
  const Matrix& w = shares.w();
  const Index n = w.rows();
  const Index s = w.cols();
  if (agg_weights.rows() != n || agg_weights.cols() != s ||
      local_shocks.rows() != n || local_shocks.cols() != s) {
    throw DimensionError("aggregation weights and local shocks must be N x S");
  }
  if ((agg_weights.array() < 0.0).any()) {
    throw DataError("aggregation weights must be non-negative");
  }
  if (!agg_weights.allFinite() || !local_shocks.allFinite()) {
    throw DataError("aggregation weights or local shocks are not finite");
  }

  const Vector n_check = agg_weights.colwise().sum().transpose();
  const Vector totals =
      agg_weights.cwiseProduct(local_shocks).colwise().sum().transpose();

  LooInstrument out;
  out.agg_weights = agg_weights;
  out.shifter_estimates = Vector::Zero(s);
  for (Index k = 0; k < s; ++k) {
    if (n_check(k) > 0.0) out.shifter_estimates(k) = totals(k) / n_check(k);
  }
  out.x_hat = Vector::Zero(n);
  out.x_hat_loo = Vector::Zero(n);
  out.n_check_loo = Matrix::Zero(n, s);
  out.psi_hat = local_shocks.rowwise() - out.shifter_estimates.transpose();
  double bias = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < s; ++k) {
      const double remaining = n_check(k) - agg_weights(i, k);
      out.n_check_loo(i, k) = remaining;
      if (w(i, k) == 0.0) continue;
      if (!(n_check(k) > 0.0) ||
          remaining <= 1e-12 * n_check(k)) {
        throw LeaveOneOutUndefined(static_cast<std::size_t>(k),
                                   static_cast<std::size_t>(i));
      }
      const double loo =
          (totals(k) - agg_weights(i, k) * local_shocks(i, k)) / remaining;
      out.x_hat(i) += w(i, k) * out.shifter_estimates(k);
      out.x_hat_loo(i) += w(i, k) * loo;
      bias += w(i, k) * agg_weights(i, k) / n_check(k);
    }
  }
  out.bias_proxy = bias / static_cast<double>(n);
  return out;
}

}  // namespace shiftshare
