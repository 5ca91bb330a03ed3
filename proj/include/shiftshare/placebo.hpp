#pragma once

// Monte Carlo placebo engine. Each replication draws shifters (and, in IV
// mode, region-sector shocks), builds the outcome, fits the regression and
// tests H0: coefficient = null_value with every requested method.
//
// Replication m draws from RngStream(seed, m) only and writes to slot m, so a
// report does not depend on how replications are spread across workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "shiftshare/data.hpp"
#include "shiftshare/dgp.hpp"
#include "shiftshare/errors.hpp"
#include "shiftshare/estimate.hpp"
#include "shiftshare/infer.hpp"
#include "shiftshare/linalg.hpp"
#include "shiftshare/rng.hpp"

namespace shiftshare {

enum class IvInstrument { oracle, aggregate, leave_one_out };

inline const char* to_string(IvInstrument k) {
  switch (k) {
    case IvInstrument::oracle: return "oracle";
    case IvInstrument::aggregate: return "aggregate";
    case IvInstrument::leave_one_out: return "leave_one_out";
  }
  return "?";
}

/// Region-sector shocks X_is = shifter_s + psi_is with endogenous psi:
///   Y2 = sum_s w_is X_is,  Y1 = rho sum_s w_is psi_is + sum_s w_is A_s.
/// The true structural coefficient is zero.
struct IvDgp {
  double psi_variance = 10.0;
  double rho = 0.0;
  double shock_variance = 20.0;
  IvInstrument instrument = IvInstrument::leave_one_out;
};

struct PlaceboConfig {
  std::size_t replications = 2000;
  std::uint64_t seed = 1;
  double level = 0.95;
  SharesMatrix shares;
  /// Region clusters for the conventional cluster method.
  std::optional<std::vector<std::string>> region_cluster;
  ShifterDgp shifters = ShifterDgp::iid_normal(5.0);
  OutcomeDgp outcome;
  std::vector<Method> methods{Method::robust, Method::cluster, Method::akm,
                              Method::akm0};
  double null_value = 0.0;
  bool intercept = true;
  bool share_sum_control = false;
  std::optional<IvDgp> iv;
  std::size_t workers = 1;
};

struct MethodSummary {
  Method method = Method::robust;
  std::size_t rejections = 0;
  double rejection_rate = 0.0;
  double median_effective_se = 0.0;
  /// Replications whose confidence set was unbounded.
  std::size_t unbounded = 0;
};

struct PlaceboReport {
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  double null_value = 0.0;
  double mean_estimate = 0.0;
  double sd_estimate = 0.0;
  std::vector<MethodSummary> methods;

  const MethodSummary& method(Method m) const {
    for (const auto& s : methods) {
      if (s.method == m) return s;
    }
    throw Error(std::string("method ") + to_string(m) + " not in report");
  }
};

/// Raised when a replication fails; carries the replication index and the
/// original exception.
class ReplicationFailure : public Error {
 public:
  ReplicationFailure(std::size_t index, const std::string& what,
                     std::exception_ptr inner)
      : Error("replication " + std::to_string(index) + ": " + what),
        index_(index),
        inner_(std::move(inner)) {}
  std::size_t index() const noexcept { return index_; }
  const std::exception_ptr& inner() const noexcept { return inner_; }

 private:
  std::size_t index_;
  std::exception_ptr inner_;
};

/// Control matrix used by the placebo regressions.
inline Matrix placebo_controls(const SharesMatrix& shares, bool intercept,
                               bool share_sum) {
  const Index n = shares.n_regions();
  Matrix z(n, (intercept ? 1 : 0) + (share_sum ? 1 : 0));
  Index col = 0;
  if (intercept) z.col(col++).setOnes();
  if (share_sum) z.col(col++) = shares.row_sums();
  return z;
}

struct ReplicationResult {
  double estimate = 0.0;
  std::vector<char> reject;
  std::vector<double> effective_se;
};

namespace detail {

/// Everything that is fixed across replications.
struct PlaceboContext {
  const PlaceboConfig* config = nullptr;
  ControlProjector controls;
  std::optional<SectorProjector> sectors;
  std::optional<ClusterIndex> sector_clusters;
  bool share_sums_controlled = true;
  Matrix agg_weights;
};

inline bool needs_projection(Method m) {
  return m == Method::akm || m == Method::akm0 || m == Method::akm_clustered ||
         m == Method::akm0_clustered || m == Method::akm_loo;
}

inline bool needs_sector_clusters(Method m) {
  return m == Method::akm_clustered || m == Method::akm0_clustered;
}

inline PlaceboContext make_context(const PlaceboConfig& config) {
  PlaceboContext ctx;
  ctx.config = &config;
  const SharesMatrix& shares = config.shares;
  const Matrix z =
      placebo_controls(shares, config.intercept, config.share_sum_control);
  std::vector<std::string> names;
  if (config.intercept) names.emplace_back("intercept");
  if (config.share_sum_control) names.emplace_back("share_sum");
  ctx.controls = ControlProjector(z, std::nullopt, names);
  ctx.share_sums_controlled = controls_span_share_sums(shares, z, std::nullopt);
  bool project = false;
  bool clusters = false;
  for (Method m : config.methods) {
    project = project || needs_projection(m);
    clusters = clusters || needs_sector_clusters(m);
    if (m == Method::cluster && !config.region_cluster) {
      throw DataError("cluster method requested without region clusters");
    }
    if (m == Method::akm_loo &&
        (!config.iv || config.iv->instrument != IvInstrument::leave_one_out)) {
      throw DataError("akm_loo requires the IV design with the leave-one-out "
                      "instrument");
    }
  }
  if (project) ctx.sectors.emplace(shares.w());
  if (clusters) ctx.sector_clusters = sector_clusters_of(shares, true);
  if (config.iv) {
    // Aggregation weights: each sector's shares normalized to sum to one.
    const Vector n = shares.sector_sizes();
    ctx.agg_weights = shares.w();
    for (Index k = 0; k < n.size(); ++k) {
      if (n(k) > 0.0) ctx.agg_weights.col(k) /= n(k);
    }
  }
  return ctx;
}

inline ReplicationResult run_replication(const PlaceboContext& ctx,
                                         std::size_t index) {
  const PlaceboConfig& cfg = *ctx.config;
  const SharesMatrix& shares = cfg.shares;
  const Matrix& w = shares.w();
  RngStream rng(cfg.seed, index);

  const Shifters shifters = draw_shifters(cfg.shifters, w.cols(), rng);
  FitResult fit;
  std::optional<LooInstrument> loo;
  if (cfg.iv) {
    const IvDgp& iv = *cfg.iv;
    Matrix psi(w.rows(), w.cols());
    const double sp = std::sqrt(iv.psi_variance);
    for (Index i = 0; i < psi.rows(); ++i) {
      for (Index k = 0; k < psi.cols(); ++k) psi(i, k) = sp * rng.normal();
    }
    Vector a(w.cols());
    const double sa = std::sqrt(iv.shock_variance);
    for (Index k = 0; k < a.size(); ++k) a(k) = sa * rng.normal();
    const Matrix local = psi.rowwise() + shifters.values.transpose();
    const Vector y2 = w.cwiseProduct(local).rowwise().sum();
    const Vector y1 =
        cfg.outcome.base + iv.rho * w.cwiseProduct(psi).rowwise().sum() + w * a;
    Vector instrument;
    switch (iv.instrument) {
      case IvInstrument::oracle:
        instrument = w * shifters.values;
        break;
      case IvInstrument::aggregate:
      case IvInstrument::leave_one_out:
        loo = build_loo_instrument(shares, ctx.agg_weights, local);
        instrument = iv.instrument == IvInstrument::aggregate ? loo->x_hat
                                                              : loo->x_hat_loo;
        break;
    }
    fit = iv_fit(ctx.controls, y1, y2, instrument);
  } else {
    const Vector y = make_outcome(cfg.outcome, shares, shifters, rng);
    fit = ols_fit(ctx.controls, y, w * shifters.values);
  }
  fit.share_sums_controlled = ctx.share_sums_controlled;

  std::optional<SectorProjection> proj;
  if (ctx.sectors) proj = sector_project(*ctx.sectors, fit.x_dotdot);
  const ClusterIndex* sc = ctx.sector_clusters ? &*ctx.sector_clusters : nullptr;

  ReplicationResult out;
  out.estimate = fit.estimate();
  for (Method m : cfg.methods) {
    ConfidenceSet ci;
    switch (m) {
      case Method::robust:
        ci = se_conventional(fit, cfg.level).ci;
        break;
      case Method::cluster:
        ci = se_conventional(fit, cfg.level, cfg.region_cluster).ci;
        break;
      case Method::akm:
        ci = se_akm(fit, w, *proj, cfg.level, nullptr).ci;
        break;
      case Method::akm_clustered:
        ci = se_akm(fit, w, *proj, cfg.level, sc).ci;
        break;
      case Method::akm0:
        ci = ci_akm0(fit, w, *proj, cfg.level, nullptr);
        break;
      case Method::akm0_clustered:
        ci = ci_akm0(fit, w, *proj, cfg.level, sc);
        break;
      case Method::akm_loo:
        ci = se_akm_loo(fit, shares, *proj, *loo, cfg.level).ci;
        break;
    }
    out.reject.push_back(ci.contains(cfg.null_value) ? 0 : 1);
    out.effective_se.push_back(ci.effective_se);
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Runs one replication in isolation (useful for inspection and tests).
inline ReplicationResult run_single_replication(const PlaceboConfig& config,
                                                std::size_t index) {
  const detail::PlaceboContext ctx = detail::make_context(config);
  return detail::run_replication(ctx, index);
}

inline PlaceboReport run_placebo(const PlaceboConfig& config) {
  if (config.replications < 1) throw DgpError("need at least one replication");
  if (config.methods.empty()) throw DataError("no inference methods requested");
  if (config.outcome.base.size() != config.shares.n_regions()) {
    throw DimensionError("outcome base does not match the number of regions");
  }
  const detail::PlaceboContext ctx = detail::make_context(config);
  const std::size_t m_total = config.replications;
  std::vector<ReplicationResult> results(m_total);

  std::atomic<std::size_t> next{0};
  std::mutex fail_mutex;
  std::size_t fail_index = std::numeric_limits<std::size_t>::max();
  std::exception_ptr fail_error;
  std::string fail_message;

  auto work = [&] {
    for (;;) {
      const std::size_t m = next.fetch_add(1);
      if (m >= m_total) return;
      {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (m > fail_index) return;
      }
      try {
        results[m] = detail::run_replication(ctx, m);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (m < fail_index) {
          fail_index = m;
          fail_error = std::current_exception();
          fail_message = e.what();
        }
      }
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(config.workers, m_total));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (fail_error) throw ReplicationFailure(fail_index, fail_message, fail_error);

  PlaceboReport report;
  report.replications = m_total;
  report.seed = config.seed;
  report.level = config.level;
  report.null_value = config.null_value;
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t m = 0; m < m_total; ++m) {
    const double delta = results[m].estimate - mean;
    mean += delta / static_cast<double>(m + 1);
    m2 += delta * (results[m].estimate - mean);
  }
  report.mean_estimate = mean;
  report.sd_estimate = m_total > 1 ? std::sqrt(m2 / static_cast<double>(m_total - 1)) : 0.0;
  for (std::size_t k = 0; k < config.methods.size(); ++k) {
    MethodSummary s;
    s.method = config.methods[k];
    std::vector<double> eff;
    eff.reserve(m_total);
    for (const auto& r : results) {
      s.rejections += static_cast<std::size_t>(r.reject[k]);
      eff.push_back(r.effective_se[k]);
      if (!std::isfinite(r.effective_se[k])) ++s.unbounded;
    }
    s.rejection_rate = static_cast<double>(s.rejections) / static_cast<double>(m_total);
    s.median_effective_se = detail::median(std::move(eff));
    report.methods.push_back(s);
  }
  return report;
}

}  // namespace shiftshare
