#pragma once

// Variance estimation and confidence sets: heteroskedasticity-robust and
// region-clustered sandwiches, the sector-level (AKM) standard error, the
// null-imposed (AKM0) confidence set, their sector-clustered variants, and the
// leave-one-out IV variance with the estimated-shifter correction term.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shiftshare/data.hpp"
#include "shiftshare/errors.hpp"
#include "shiftshare/estimate.hpp"
#include "shiftshare/linalg.hpp"
#include "shiftshare/normal.hpp"

namespace shiftshare {

enum class Method {
  robust,
  cluster,
  akm,
  akm0,
  akm_clustered,
  akm0_clustered,
  akm_loo,
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::robust: return "robust";
    case Method::cluster: return "cluster";
    case Method::akm: return "akm";
    case Method::akm0: return "akm0";
    case Method::akm_clustered: return "akm_clustered";
    case Method::akm0_clustered: return "akm0_clustered";
    case Method::akm_loo: return "akm_loo";
  }
  return "?";
}

inline Method method_from_string(const std::string& name) {
  for (Method m : {Method::robust, Method::cluster, Method::akm, Method::akm0,
                   Method::akm_clustered, Method::akm0_clustered,
                   Method::akm_loo}) {
    if (name == to_string(m)) return m;
  }
  throw DataError("unknown inference method '" + name + "'");
}

enum class SetShape { interval, union_of_two_rays, full_line };

inline const char* to_string(SetShape s) {
  switch (s) {
    case SetShape::interval: return "interval";
    case SetShape::union_of_two_rays: return "union_of_two_rays";
    case SetShape::full_line: return "full_line";
  }
  return "?";
}

/// A subset of the real line: [lo, hi], (-inf, lo] U [hi, inf), or R.
/// Intervals may have one infinite endpoint when the test inversion is linear.
struct ConfidenceSet {
  SetShape shape = SetShape::full_line;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  double level = 0.95;
  /// Length / (2 z); infinite for unbounded sets.
  double effective_se = std::numeric_limits<double>::infinity();

  bool contains(double x) const {
    switch (shape) {
      case SetShape::interval: return lo <= x && x <= hi;
      case SetShape::union_of_two_rays: return x <= lo || x >= hi;
      case SetShape::full_line: return true;
    }
    return true;
  }

  bool bounded() const {
    return shape == SetShape::interval && std::isfinite(lo) && std::isfinite(hi);
  }

  static ConfidenceSet interval(double lo, double hi, double level) {
    ConfidenceSet out;
    out.shape = SetShape::interval;
    out.lo = lo;
    out.hi = hi;
    out.level = level;
    out.effective_se = (std::isfinite(lo) && std::isfinite(hi))
                           ? (hi - lo) / (2.0 * critical_value(level))
                           : std::numeric_limits<double>::infinity();
    return out;
  }

  static ConfidenceSet rays(double lo, double hi, double level) {
    ConfidenceSet out;
    out.shape = SetShape::union_of_two_rays;
    out.lo = lo;
    out.hi = hi;
    out.level = level;
    return out;
  }

  static ConfidenceSet full_line(double level) {
    ConfidenceSet out;
    out.level = level;
    return out;
  }
};

struct InferenceResult {
  Method method = Method::robust;
  double estimate = 0.0;
  /// Undefined for AKM0, whose standard error depends on the null.
  std::optional<double> se;
  ConfidenceSet ci;
  /// AKM standard error without the leave-one-out correction (akm_loo only).
  std::optional<double> se_uncorrected;
  /// Per-sector R_s and projected shifters, kept for audit (AKM family).
  Vector sector_r;
  Vector sector_x_hat;
  std::vector<std::string> warnings;

  double effective_se() const { return ci.effective_se; }
  bool rejects(double null_value) const { return !ci.contains(null_value); }
};

/// Least-squares coefficients of X.. on the share matrix.
struct SectorProjection {
  Vector x_hat_sector;
};

inline SectorProjection sector_project(const SectorProjector& projector,
                                       const Vector& x_dotdot) {
  return SectorProjection{projector.project(x_dotdot)};
}

inline SectorProjection sector_project(const SharesMatrix& shares,
                                       const Vector& x_dotdot,
                                       const std::optional<Vector>& obs_weight = {}) {
  if (x_dotdot.size() != shares.n_regions()) {
    throw DimensionError("partialled regressor does not match share rows");
  }
  return sector_project(SectorProjector(shares.w(), obs_weight), x_dotdot);
}

namespace detail {

/// Sums per-sector terms within clusters; identity without clusters.
inline Vector cluster_sums(const Vector& terms, const ClusterIndex* clusters) {
  if (clusters == nullptr) return terms;
  Vector out = Vector::Zero(static_cast<Index>(clusters->count));
  for (Index s = 0; s < terms.size(); ++s) {
    out(static_cast<Index>(clusters->id[static_cast<std::size_t>(s)])) += terms(s);
  }
  return out;
}

inline Vector weighted(const Vector& v, const std::optional<Vector>& w) {
  if (!w) return v;
  return v.cwiseProduct(*w);
}

inline std::optional<ClusterIndex> sector_clusters_of(const SharesMatrix& shares,
                                                      bool use) {
  if (!use) return std::nullopt;
  if (!shares.sector_cluster()) {
    throw DataError("sector clustering requested but the shares carry no "
                    "sector cluster map");
  }
  return make_cluster_index(*shares.sector_cluster());
}

inline void add_share_warning(const FitResult& fit, InferenceResult& out) {
  if (!fit.share_sums_controlled) out.warnings.push_back(share_sum_warning());
}

inline void check_projection(const Matrix& w, const SectorProjection& p) {
  if (p.x_hat_sector.size() != w.cols()) {
    throw DimensionError("sector projection does not match the share matrix");
  }
}

}  // namespace detail

/// Solves {theta0 : (G + d D)^2 <= z^2 sum_c (A_c + d B_c)^2}, d = ref - theta0.
///
/// `g_ref` is the score at the reference point (zero at the point estimate),
/// `a` the clustered sector terms of the residual at the reference point and
/// `b` those of the residual's derivative in the null.
inline ConfidenceSet solve_null_imposed_set(double reference, double denominator,
                                            double g_ref, const Vector& a,
                                            const Vector& b, double level) {
  const double z = critical_value(level);
  const double z2 = z * z;
  const double saa = a.squaredNorm();
  const double sab = a.dot(b);
  const double sbb = b.squaredNorm();
  const double d2 = denominator * denominator;

  const double qa = d2 - z2 * sbb;
  const double qb = 2.0 * (g_ref * denominator - z2 * sab);
  const double qc = g_ref * g_ref - z2 * saa;
  const double scale_a = d2 + z2 * sbb;
  const double scale_b = 2.0 * (std::abs(g_ref * denominator) + z2 * std::sqrt(saa * sbb));

  auto theta = [reference](double d) { return reference - d; };
  constexpr double inf = std::numeric_limits<double>::infinity();

  if (std::abs(qa) <= 1e-12 * scale_a) {
    if (std::abs(qb) <= 1e-12 * std::max(scale_b, std::numeric_limits<double>::min())) {
      if (qc <= 0.0) return ConfidenceSet::full_line(level);
      throw Error("null-imposed confidence set is empty");
    }
    const double root = -qc / qb;
    if (qb > 0.0) return ConfidenceSet::interval(theta(root), inf, level);
    return ConfidenceSet::interval(-inf, theta(root), level);
  }

  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc <= 0.0 && qa < 0.0) return ConfidenceSet::full_line(level);
  if (disc < 0.0) throw Error("null-imposed confidence set is empty");

  const double sq = std::sqrt(std::max(0.0, disc));
  const double q = -0.5 * (qb + std::copysign(sq, qb));
  double r1 = 0.0;
  double r2 = 0.0;
  if (q != 0.0) {
    r1 = q / qa;
    r2 = qc / q;
  }
  const double dlo = std::min(r1, r2);
  const double dhi = std::max(r1, r2);
  if (qa > 0.0) return ConfidenceSet::interval(theta(dhi), theta(dlo), level);
  return ConfidenceSet::rays(theta(dhi), theta(dlo), level);
}

// ---------------------------------------------------------------------------
// Conventional sandwich

/// Eicker-Huber-White (no clusters) or region-clustered standard error.
/// HC0 by default; `small_sample` applies N/(N-p) or the usual cluster factor.
inline InferenceResult se_conventional(
    const FitResult& fit, double level,
    const std::optional<std::vector<std::string>>& region_cluster = {},
    bool small_sample = false) {
  const Index n = fit.residuals.size();
  const Vector u = detail::weighted(fit.x_dotdot.cwiseProduct(fit.residuals),
                                    fit.obs_weight);
  double meat = 0.0;
  double factor = 1.0;
  const double p = static_cast<double>(fit.delta_hat.size() + 1);
  InferenceResult out;
  if (region_cluster) {
    if (static_cast<Index>(region_cluster->size()) != n) {
      throw DimensionError("region cluster map does not match the sample");
    }
    const ClusterIndex idx = make_cluster_index(*region_cluster);
    if (idx.count < 2) throw ClusterError("cluster SE needs at least 2 clusters");
    Vector sums = Vector::Zero(static_cast<Index>(idx.count));
    for (Index i = 0; i < n; ++i) sums(static_cast<Index>(idx.id[static_cast<std::size_t>(i)])) += u(i);
    meat = sums.squaredNorm();
    const double g = static_cast<double>(idx.count);
    if (small_sample) {
      factor = g / (g - 1.0) * (static_cast<double>(n) - 1.0) /
               (static_cast<double>(n) - p);
    }
    out.method = Method::cluster;
  } else {
    meat = u.squaredNorm();
    if (small_sample) factor = static_cast<double>(n) / (static_cast<double>(n) - p);
    out.method = Method::robust;
  }
  out.estimate = fit.estimate();
  const double se = std::sqrt(factor * meat) / std::abs(fit.denominator);
  out.se = se;
  const double z = critical_value(level);
  out.ci = ConfidenceSet::interval(out.estimate - z * se, out.estimate + z * se, level);
  return out;
}

// ---------------------------------------------------------------------------
// AKM

/// AKM standard error from precomputed pieces (shared by the placebo engine).
inline InferenceResult se_akm(const FitResult& fit, const Matrix& w,
                              const SectorProjection& projection, double level,
                              const ClusterIndex* sector_clusters) {
  detail::check_projection(w, projection);
  InferenceResult out;
  out.method = sector_clusters ? Method::akm_clustered : Method::akm;
  out.estimate = fit.estimate();
  out.sector_x_hat = projection.x_hat_sector;
  out.sector_r = w.transpose() * detail::weighted(fit.residuals, fit.obs_weight);
  const Vector terms = projection.x_hat_sector.cwiseProduct(out.sector_r);
  const double meat = detail::cluster_sums(terms, sector_clusters).squaredNorm();
  const double se = std::sqrt(meat) / std::abs(fit.denominator);
  out.se = se;
  const double z = critical_value(level);
  out.ci = ConfidenceSet::interval(out.estimate - z * se, out.estimate + z * se, level);
  detail::add_share_warning(fit, out);
  return out;
}

inline InferenceResult se_akm(const FitResult& fit, const SharesMatrix& shares,
                              const SectorProjection& projection, double level,
                              bool cluster_sectors = false) {
  const auto idx = detail::sector_clusters_of(shares, cluster_sectors);
  return se_akm(fit, shares.w(), projection, level, idx ? &*idx : nullptr);
}

// ---------------------------------------------------------------------------
// AKM0

inline ConfidenceSet ci_akm0(const FitResult& fit, const Matrix& w,
                             const SectorProjection& projection, double level,
                             const ClusterIndex* sector_clusters) {
  detail::check_projection(w, projection);
  const Vector& xh = projection.x_hat_sector;
  const Vector r_hat = w.transpose() * detail::weighted(fit.residuals, fit.obs_weight);
  const Vector r_dir =
      w.transpose() * detail::weighted(fit.null_direction(), fit.obs_weight);
  const Vector a = detail::cluster_sums(xh.cwiseProduct(r_hat), sector_clusters);
  const Vector b = detail::cluster_sums(xh.cwiseProduct(r_dir), sector_clusters);
  return solve_null_imposed_set(fit.estimate(), fit.denominator, 0.0, a, b, level);
}

/// Confidence set collecting every null not rejected by the null-imposed test.
inline ConfidenceSet ci_akm0(const FitResult& fit, const SharesMatrix& shares,
                             const SectorProjection& projection, double level,
                             bool cluster_sectors = false) {
  const auto idx = detail::sector_clusters_of(shares, cluster_sectors);
  return ci_akm0(fit, shares.w(), projection, level, idx ? &*idx : nullptr);
}

inline InferenceResult infer_akm0(const FitResult& fit, const SharesMatrix& shares,
                                  const SectorProjection& projection, double level,
                                  bool cluster_sectors = false) {
  InferenceResult out;
  out.method = cluster_sectors ? Method::akm0_clustered : Method::akm0;
  out.estimate = fit.estimate();
  out.ci = ci_akm0(fit, shares, projection, level, cluster_sectors);
  out.sector_x_hat = projection.x_hat_sector;
  out.sector_r = shares.w().transpose() * detail::weighted(fit.residuals, fit.obs_weight);
  detail::add_share_warning(fit, out);
  return out;
}

/// Null-imposed IV confidence set computed directly from the data, without a
/// point estimate. Valid when the instrument is orthogonal to the treatment.
inline ConfidenceSet ci_akm0_iv(const Design& design, const SharesMatrix& shares,
                                const Vector& instrument, double level,
                                bool cluster_sectors = false) {
  if (!design.y2) throw DataError("IV mode requires the treatment column y2");
  const ControlProjector controls = make_controls(design);
  const auto& om = design.obs_weight;
  const Vector x_dd = controls.residualize(instrument);
  const SectorProjection proj = sector_project(shares, x_dd, om);
  const Vector e0 = controls.residualize(design.y1);
  const Vector dir = controls.residualize(*design.y2);
  const Matrix& w = shares.w();
  const auto idx = detail::sector_clusters_of(shares, cluster_sectors);
  const ClusterIndex* cp = idx ? &*idx : nullptr;
  const Vector a = detail::cluster_sums(
      proj.x_hat_sector.cwiseProduct(w.transpose() * detail::weighted(e0, om)), cp);
  // e(theta0) = e0 - theta0 * dir = e0 + d * dir with d = 0 - theta0.
  const Vector b = detail::cluster_sums(
      proj.x_hat_sector.cwiseProduct(w.transpose() * detail::weighted(dir, om)), cp);
  const double denom = weighted_dot(x_dd, *design.y2, om);
  const double g0 = weighted_dot(x_dd, design.y1, om);
  return solve_null_imposed_set(0.0, denom, g0, a, b, level);
}

// ---------------------------------------------------------------------------
// Leave-one-out IV

/// S_ij = 1{i != j} omega_i e_i sum_s w_is aggw_js psi_js / n_check_{s,-i}.
inline Matrix loo_cross_terms(const Matrix& w, const LooInstrument& loo,
                              const Vector& residuals,
                              const std::optional<Vector>& obs_weight = {}) {
  const Index n = w.rows();
  const Index s = w.cols();
  Matrix ratio = Matrix::Zero(n, s);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < s; ++k) {
      if (w(i, k) != 0.0) ratio(i, k) = w(i, k) / loo.n_check_loo(i, k);
    }
  }
  const Matrix shock = loo.agg_weights.cwiseProduct(loo.psi_hat);
  Matrix cross = ratio * shock.transpose();
  const Vector e = detail::weighted(residuals, obs_weight);
  cross = e.asDiagonal() * cross;
  cross.diagonal().setZero();
  return cross;
}

/// sum_j (sum_i S_ij)^2 + sum_ij S_ij S_ji, i.e. the correction term times
/// sum_s n_s^2.
inline double loo_correction(const Matrix& cross) {
  const double col = cross.colwise().sum().squaredNorm();
  const double swap = cross.cwiseProduct(cross.transpose()).sum();
  return col + swap;
}

/// AKM standard error for the leave-one-out IV, adding the variance from
/// estimating the shifters. `fit` must use loo.x_hat_loo as its instrument.
inline InferenceResult se_akm_loo(const FitResult& fit, const SharesMatrix& shares,
                                  const SectorProjection& projection,
                                  const LooInstrument& loo, double level,
                                  bool cluster_sectors = false) {
  if (fit.mode != FitMode::iv) {
    throw DataError("leave-one-out AKM applies to IV fits only");
  }
  InferenceResult out = se_akm(fit, shares, projection, level, cluster_sectors);
  const double base_meat = std::pow(*out.se * fit.denominator, 2);
  const Matrix cross = loo_cross_terms(shares.w(), loo, fit.residuals, fit.obs_weight);
  const double extra = loo_correction(cross);
  const double se = std::sqrt(std::max(0.0, base_meat + extra)) / std::abs(fit.denominator);
  out.method = Method::akm_loo;
  out.se_uncorrected = out.se;
  out.se = se;
  const double z = critical_value(level);
  out.ci = ConfidenceSet::interval(out.estimate - z * se, out.estimate + z * se, level);
  return out;
}

}  // namespace shiftshare
