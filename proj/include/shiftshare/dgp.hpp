#pragma once

// Data-generating processes for placebo studies: shifter distributions,
// synthetic share matrices, outcome constructors and the implied estimands.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shiftshare/data.hpp"
#include "shiftshare/errors.hpp"
#include "shiftshare/linalg.hpp"
#include "shiftshare/rng.hpp"

namespace shiftshare {

// ---------------------------------------------------------------------------
// Shifters

enum class ShifterKind {
  iid_normal,
  lognormal_recentered,
  heteroskedastic,
  cluster_mvn,
  factor,
};

inline const char* to_string(ShifterKind k) {
  switch (k) {
    case ShifterKind::iid_normal: return "iid_normal";
    case ShifterKind::lognormal_recentered: return "lognormal_recentered";
    case ShifterKind::heteroskedastic: return "heteroskedastic";
    case ShifterKind::cluster_mvn: return "cluster_mvn";
    case ShifterKind::factor: return "factor";
  }
  return "?";
}

struct ShifterDgp {
  ShifterKind kind = ShifterKind::iid_normal;
  /// Common variance (iid, lognormal, cluster) or noise variance (factor).
  double variance = 5.0;
  /// Per-sector variances (heteroskedastic).
  Vector sector_variance;
  /// Within-cluster correlation (cluster_mvn).
  double rho = 0.0;
  ClusterIndex clusters;
  /// Factor loading scale, sector loadings and aggregate factor.
  double kappa = 0.0;
  Vector eta;
  double delta_xbar = 0.0;

  static ShifterDgp iid_normal(double variance) {
    check_variance(variance);
    ShifterDgp d;
    d.kind = ShifterKind::iid_normal;
    d.variance = variance;
    return d;
  }

  /// exp(g) with g ~ N(0, 1), shifted to mean zero and scaled to `variance`.
  static ShifterDgp lognormal_recentered(double variance) {
    check_variance(variance);
    ShifterDgp d;
    d.kind = ShifterKind::lognormal_recentered;
    d.variance = variance;
    return d;
  }

  /// sigma_s^2 = base + lambda (n_s - S/N), floored at 1e-8.
  static ShifterDgp heteroskedastic(double base, double lambda,
                                    const SharesMatrix& shares) {
    const Vector n = shares.sector_sizes();
    const double ratio = static_cast<double>(shares.n_sectors()) /
                         static_cast<double>(shares.n_regions());
    ShifterDgp d;
    d.kind = ShifterKind::heteroskedastic;
    d.variance = base;
    d.sector_variance.resize(n.size());
    for (Index s = 0; s < n.size(); ++s) {
      const double v = base + lambda * (n(s) - ratio);
      if (v < -1e-6) {
        throw DgpError("heteroskedastic shifter variance " + std::to_string(v) +
                       " is negative for sector " + shares.sectors()[s]);
      }
      d.sector_variance(s) = std::max(v, 1e-8);
    }
    return d;
  }

  /// Cov(X_s, X_k) = (1 - rho) sigma 1{s = k} + rho sigma 1{c(s) = c(k)}.
  static ShifterDgp cluster_mvn(double sigma, double rho,
                                const std::vector<std::string>& cluster_of) {
    check_variance(sigma);
    if (!(rho >= 0.0 && rho <= 1.0)) {
      throw DgpError("cluster correlation must lie in [0, 1], got " +
                     std::to_string(rho));
    }
    ShifterDgp d;
    d.kind = ShifterKind::cluster_mvn;
    d.variance = sigma;
    d.rho = rho;
    d.clusters = make_cluster_index(cluster_of);
    return d;
  }

  /// X_s = kappa eta_s dxbar + u_s, u_s ~ N(0, u_variance).
  static ShifterDgp factor(double kappa, Vector eta, double delta_xbar,
                           double u_variance) {
    check_variance(u_variance);
    if (!eta.allFinite() || !std::isfinite(kappa) || !std::isfinite(delta_xbar)) {
      throw DgpError("factor shifter parameters must be finite");
    }
    ShifterDgp d;
    d.kind = ShifterKind::factor;
    d.variance = u_variance;
    d.kappa = kappa;
    d.eta = std::move(eta);
    d.delta_xbar = delta_xbar;
    return d;
  }

 private:
  static void check_variance(double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DgpError("shifter variance must be finite and non-negative");
    }
  }
};

inline Shifters draw_shifters(const ShifterDgp& dgp, Index s, RngStream& rng) {
  Vector x(s);
  switch (dgp.kind) {
    case ShifterKind::iid_normal: {
      const double sd = std::sqrt(dgp.variance);
      for (Index k = 0; k < s; ++k) x(k) = sd * rng.normal();
      break;
    }
    case ShifterKind::lognormal_recentered: {
      const double e = std::exp(1.0);
      const double scale = std::sqrt(dgp.variance / ((e - 1.0) * e));
      const double mean = std::exp(0.5);
      for (Index k = 0; k < s; ++k) x(k) = scale * (std::exp(rng.normal()) - mean);
      break;
    }
    case ShifterKind::heteroskedastic: {
      if (dgp.sector_variance.size() != s) {
        throw DgpError("heteroskedastic variances do not match S");
      }
      for (Index k = 0; k < s; ++k) {
        x(k) = std::sqrt(dgp.sector_variance(k)) * rng.normal();
      }
      break;
    }
    case ShifterKind::cluster_mvn: {
      if (static_cast<Index>(dgp.clusters.id.size()) != s) {
        throw DgpError("shifter cluster map does not match S");
      }
      Vector common(static_cast<Index>(dgp.clusters.count));
      const double sc = std::sqrt(dgp.rho * dgp.variance);
      for (Index c = 0; c < common.size(); ++c) common(c) = sc * rng.normal();
      const double si = std::sqrt((1.0 - dgp.rho) * dgp.variance);
      for (Index k = 0; k < s; ++k) {
        x(k) = si * rng.normal() +
               common(static_cast<Index>(dgp.clusters.id[static_cast<std::size_t>(k)]));
      }
      break;
    }
    case ShifterKind::factor: {
      if (dgp.eta.size() != s) throw DgpError("factor loadings do not match S");
      const double sd = std::sqrt(dgp.variance);
      for (Index k = 0; k < s; ++k) {
        x(k) = dgp.kappa * dgp.eta(k) * dgp.delta_xbar + sd * rng.normal();
      }
      break;
    }
  }
  return Shifters{std::move(x)};
}

// ---------------------------------------------------------------------------
// Synthetic shares

struct ShareSynthesis {
  Index regions = 0;
  Index sectors = 0;
  /// Dirichlet concentration of each region's share profile.
  double concentration = 1.0;
  /// Sector s gets concentration proportional to (s + 1)^-size_skew, scaled so
  /// the parameters average to `concentration`. Zero gives a symmetric draw.
  double size_skew = 0.0;
  /// Row sums are drawn from U[row_scale_min, 1].
  double row_scale_min = 1.0;
  /// Regions are split into contiguous groups ("states"); each state has a
  /// Dirichlet profile mixed into its regions with weight state_mix.
  Index states = 0;
  double state_mix = 0.0;
  /// Sectors are grouped into clusters of this size (0: no clusters).
  Index sector_cluster_size = 0;
};

namespace detail {

/// Symmetric Dirichlet draw, computed from log-gammas so tiny concentrations
/// do not underflow to an all-zero row.
inline Vector dirichlet(const Vector& alpha, RngStream& rng) {
  Vector lg(alpha.size());
  for (Index k = 0; k < alpha.size(); ++k) lg(k) = rng.log_gamma_draw(alpha(k));
  const double m = lg.maxCoeff();
  Vector out = (lg.array() - m).exp().matrix();
  return out / out.sum();
}

inline Vector dirichlet(Index dim, double alpha, RngStream& rng) {
  return dirichlet(Vector::Constant(dim, alpha), rng);
}

inline Vector dirichlet_parameters(Index dim, double concentration, double skew) {
  Vector a(dim);
  for (Index k = 0; k < dim; ++k) a(k) = std::pow(static_cast<double>(k + 1), -skew);
  return a * (concentration * static_cast<double>(dim) / a.sum());
}

}  // namespace detail

inline std::vector<std::string> state_labels(Index regions, Index states) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(regions));
  for (Index i = 0; i < regions; ++i) {
    out.push_back("g" + std::to_string(i * states / regions + 1));
  }
  return out;
}

inline std::vector<std::string> sector_cluster_labels(Index sectors, Index size) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(sectors));
  for (Index s = 0; s < sectors; ++s) {
    out.push_back("c" + std::to_string(s / size + 1));
  }
  return out;
}

inline SharesMatrix synth_shares(const ShareSynthesis& spec, RngStream& rng) {
  if (spec.regions < 1 || spec.sectors < 1) {
    throw DgpError("synthetic shares need at least one region and one sector");
  }
  if (!(spec.concentration > 0.0)) {
    throw DgpError("Dirichlet concentration must be positive");
  }
  if (!(spec.row_scale_min > 0.0 && spec.row_scale_min <= 1.0)) {
    throw DgpError("row_scale_min must lie in (0, 1]");
  }
  if (!(spec.state_mix >= 0.0 && spec.state_mix <= 1.0)) {
    throw DgpError("state_mix must lie in [0, 1]");
  }
  if (spec.states < 0 || spec.states > spec.regions) {
    throw DgpError("number of states must lie in [0, N]");
  }
  if (!(spec.size_skew >= 0.0) || !std::isfinite(spec.size_skew)) {
    throw DgpError("size_skew must be finite and non-negative");
  }
  const Index n = spec.regions;
  const Index s = spec.sectors;
  const Vector alpha = detail::dirichlet_parameters(s, spec.concentration, spec.size_skew);
  Matrix profiles;
  if (spec.states > 0 && spec.state_mix > 0.0) {
    profiles.resize(spec.states, s);
    for (Index g = 0; g < spec.states; ++g) {
      profiles.row(g) = detail::dirichlet(alpha, rng).transpose();
    }
  }
  Matrix w(n, s);
  for (Index i = 0; i < n; ++i) {
    Vector row = detail::dirichlet(alpha, rng);
    if (profiles.size() > 0) {
      const Index g = i * spec.states / n;
      row = (1.0 - spec.state_mix) * row +
            spec.state_mix * profiles.row(g).transpose();
    }
    double scale = 1.0;
    if (spec.row_scale_min < 1.0) {
      scale = spec.row_scale_min + (1.0 - spec.row_scale_min) * rng.uniform();
    }
    w.row(i) = scale * row.transpose();
  }
  std::optional<std::vector<std::string>> clusters;
  if (spec.sector_cluster_size > 0) {
    clusters = sector_cluster_labels(s, spec.sector_cluster_size);
  }
  return SharesMatrix(make_ids("r", static_cast<std::size_t>(n)),
                      make_ids("s", static_cast<std::size_t>(s)), std::move(w),
                      std::move(clusters));
}

inline SharesMatrix synth_shares(Index regions, Index sectors, double concentration,
                                 RngStream& rng, double row_scale_min = 1.0) {
  ShareSynthesis spec;
  spec.regions = regions;
  spec.sectors = sectors;
  spec.concentration = concentration;
  spec.row_scale_min = row_scale_min;
  return synth_shares(spec, rng);
}

/// Perturbed shares w~_is = exp(u + log(w + v)) / sum_k exp(...) * sum_k w_ik
/// with u ~ N(0, u_variance) and v ~ U[0, v_max]. Row sums are preserved.
inline SharesMatrix alt_shares(const SharesMatrix& shares, double u_variance,
                               double v_max, RngStream& rng) {
  if (!(u_variance >= 0.0) || !(v_max >= 0.0)) {
    throw DgpError("alternative share parameters must be non-negative");
  }
  const Matrix& w = shares.w();
  Matrix out(w.rows(), w.cols());
  const double su = std::sqrt(u_variance);
  for (Index i = 0; i < w.rows(); ++i) {
    Vector logs(w.cols());
    for (Index k = 0; k < w.cols(); ++k) {
      const double u = su * rng.normal();
      const double v = v_max * rng.uniform();
      logs(k) = u + std::log(w(i, k) + v);
    }
    const double total = w.row(i).sum();
    if (!std::isfinite(logs.maxCoeff())) {
      out.row(i).setZero();
      continue;
    }
    Vector e = (logs.array() - logs.maxCoeff()).exp().matrix();
    out.row(i) = (total / e.sum()) * e.transpose();
  }
  return SharesMatrix(shares.regions(), shares.sectors(), std::move(out),
                      shares.sector_cluster());
}

// ---------------------------------------------------------------------------
// Outcomes

enum class AddonKind {
  none,
  region_cluster_shock,
  residual_sector_shock,
  alt_share_shiftshare,
  same_share_shiftshare,
  iid_noise,
};

enum class EffectKind { null, homogeneous, heterogeneous_linear, nonlinear };

inline const char* to_string(AddonKind k) {
  switch (k) {
    case AddonKind::none: return "none";
    case AddonKind::region_cluster_shock: return "region_cluster_shock";
    case AddonKind::residual_sector_shock: return "residual_sector_shock";
    case AddonKind::alt_share_shiftshare: return "alt_share_shiftshare";
    case AddonKind::same_share_shiftshare: return "same_share_shiftshare";
    case AddonKind::iid_noise: return "iid_noise";
  }
  return "?";
}

inline const char* to_string(EffectKind k) {
  switch (k) {
    case EffectKind::null: return "null";
    case EffectKind::homogeneous: return "homogeneous";
    case EffectKind::heterogeneous_linear: return "heterogeneous_linear";
    case EffectKind::nonlinear: return "nonlinear";
  }
  return "?";
}

struct OutcomeDgp {
  /// Fixed part of the outcome (observed or synthetic), length N.
  Vector base;

  AddonKind addon = AddonKind::none;
  /// Variance of scalar shocks (region clusters, residual sector, iid noise).
  double addon_variance = 5.0;
  /// Region -> cluster labels (region_cluster_shock).
  std::vector<std::string> addon_clusters;
  /// Sector shocks for the shift-share addons.
  ShifterDgp addon_shocks = ShifterDgp::iid_normal(5.0);
  /// Alternative shares (alt_share_shiftshare), fixed for the whole run.
  std::optional<Matrix> alt_w;

  EffectKind effect = EffectKind::null;
  /// beta (homogeneous), lambda (heterogeneous_linear) or beta-check (nonlinear).
  double effect_param = 0.0;
};

namespace detail {

/// log(sum_s w_s e^{x_s} + 1 - sum_s w_s): the share not covered by the
/// sectors enters as a sector whose shifter is zero.
template <typename Row>
double log_share_exp(const Row& w, const Vector& x) {
  const double rest = std::max(0.0, 1.0 - w.sum());
  double top = rest > 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  for (Index k = 0; k < x.size(); ++k) {
    if (w(k) > 0.0) top = std::max(top, x(k));
  }
  double acc = rest * std::exp(-top);
  for (Index k = 0; k < x.size(); ++k) {
    if (w(k) > 0.0) acc += w(k) * std::exp(x(k) - top);
  }
  return top + std::log(acc);
}

}  // namespace detail

inline Vector make_outcome(const OutcomeDgp& dgp, const SharesMatrix& shares,
                           const Shifters& shifters, RngStream& rng) {
  const Matrix& w = shares.w();
  const Index n = w.rows();
  if (dgp.base.size() != n) throw DimensionError("outcome base does not match N");
  if (shifters.values.size() != w.cols()) {
    throw DimensionError("shifters do not match S");
  }
  Vector y = dgp.base;

  switch (dgp.effect) {
    case EffectKind::null:
      break;
    case EffectKind::homogeneous:
      y += dgp.effect_param * (w * shifters.values);
      break;
    case EffectKind::heterogeneous_linear:
      y += dgp.effect_param * (w.array().square().matrix() * shifters.values);
      break;
    case EffectKind::nonlinear: {
      for (Index i = 0; i < n; ++i) {
        if (!(w.row(i).sum() > 0.0)) {
          throw DgpError("nonlinear outcome undefined for region " +
                         shares.regions()[i] + " (shares sum to zero)");
        }
        y(i) += dgp.effect_param * detail::log_share_exp(w.row(i), shifters.values);
      }
      break;
    }
  }

  const double sd = std::sqrt(dgp.addon_variance);
  switch (dgp.addon) {
    case AddonKind::none:
      break;
    case AddonKind::region_cluster_shock: {
      if (static_cast<Index>(dgp.addon_clusters.size()) != n) {
        throw DgpError("region cluster shock needs a cluster label per region");
      }
      const ClusterIndex idx = make_cluster_index(dgp.addon_clusters);
      Vector shock(static_cast<Index>(idx.count));
      for (Index c = 0; c < shock.size(); ++c) shock(c) = sd * rng.normal();
      for (Index i = 0; i < n; ++i) {
        y(i) += shock(static_cast<Index>(idx.id[static_cast<std::size_t>(i)]));
      }
      break;
    }
    case AddonKind::residual_sector_shock: {
      const double eta = sd * rng.normal();
      y += eta * (1.0 - shares.row_sums().array()).matrix();
      break;
    }
    case AddonKind::alt_share_shiftshare: {
      if (!dgp.alt_w || dgp.alt_w->rows() != n || dgp.alt_w->cols() != w.cols()) {
        throw DgpError("alternative-share addon needs an N x S share matrix");
      }
      const Shifters a = draw_shifters(dgp.addon_shocks, w.cols(), rng);
      y += *dgp.alt_w * a.values;
      break;
    }
    case AddonKind::same_share_shiftshare: {
      const Shifters a = draw_shifters(dgp.addon_shocks, w.cols(), rng);
      y += w * a.values;
      break;
    }
    case AddonKind::iid_noise:
      for (Index i = 0; i < n; ++i) y(i) += sd * rng.normal();
      break;
  }
  return y;
}

/// lambda sum w^3 / sum w^2: the OLS estimand when beta_is = lambda w_is and
/// the shifters are homoskedastic.
inline double heterogeneous_estimand(double lambda, const SharesMatrix& shares) {
  const Matrix& w = shares.w();
  const double w2 = w.array().square().sum();
  if (w2 == 0.0) throw DgpError("all shares are zero");
  return lambda * w.array().cube().sum() / w2;
}

struct MonteCarloValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// OLS estimand of the nonlinear design Y_i = bcheck log(sum_s w_is e^{X_s})
/// (uncovered share as a zero-shifter sector) with X_s ~ N(0, sigma2):
///   bcheck sum_{i,s} w_is E[g Z_s log(sum_k w_ik e^{g Z_k})] / (g^2 sum w^2).
/// Evaluated by Monte Carlo, using sum_i X_i^2 (known mean) as a control
/// variate.
inline MonteCarloValue estimand_nonlinear(double beta_check,
                                          const SharesMatrix& shares,
                                          double sigma2, std::size_t draws,
                                          RngStream& rng) {
  if (draws < 1) throw DgpError("estimand_nonlinear needs at least one draw");
  if (!(sigma2 >= 0.0)) throw DgpError("shifter variance must be non-negative");
  if (beta_check == 0.0) return {0.0, 0.0};
  if (sigma2 == 0.0) return {beta_check, 0.0};
  const Matrix& w = shares.w();
  const Index n = w.rows();
  const Index s = w.cols();
  for (Index i = 0; i < n; ++i) {
    if (!(w.row(i).sum() > 0.0)) {
      throw DgpError("nonlinear estimand undefined: region " +
                     shares.regions()[i] + " has zero shares");
    }
  }
  const double gamma = std::sqrt(sigma2);
  const double denom = sigma2 * w.array().square().sum();

  double mean = 0.0;
  double m2 = 0.0;
  Vector x(s);
  for (std::size_t m = 0; m < draws; ++m) {
    for (Index k = 0; k < s; ++k) x(k) = gamma * rng.normal();
    const Vector xi = w * x;
    double f = 0.0;
    for (Index i = 0; i < n; ++i) {
      f += xi(i) * (detail::log_share_exp(w.row(i), x) - xi(i));
    }
    const double delta = f - mean;
    mean += delta / static_cast<double>(m + 1);
    m2 += delta * (f - mean);
  }
  const double var = draws > 1 ? m2 / static_cast<double>(draws - 1) : 0.0;
  MonteCarloValue out;
  out.value = beta_check * (1.0 + mean / denom);
  out.std_error = std::abs(beta_check) * std::sqrt(var / static_cast<double>(draws)) / denom;
  return out;
}

}  // namespace shiftshare
