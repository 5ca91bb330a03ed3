#pragma once

// Dataset model: exposure shares, regional design, sector shifters, panel
// expansion and share-concentration diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shiftshare/errors.hpp"
#include "shiftshare/linalg.hpp"

namespace shiftshare {

/// Row sums above 1 + kShareSumTolerance are invalid.
inline constexpr double kShareSumTolerance = 1e-8;

inline std::vector<std::string> make_ids(const std::string& prefix,
                                         std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t k = 1; k <= n; ++k) ids.push_back(prefix + std::to_string(k));
  return ids;
}

namespace detail {

inline void require_unique(const std::vector<std::string>& ids,
                           const char* what) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw DataError(std::string("duplicate ") + what + " identifier '" + id +
                      "'");
    }
  }
}

}  // namespace detail

/// Dense map from arbitrary cluster labels to 0..count-1, in first-appearance
/// order.
struct ClusterIndex {
  std::vector<std::size_t> id;
  std::size_t count = 0;
};

inline ClusterIndex make_cluster_index(const std::vector<std::string>& labels) {
  ClusterIndex out;
  out.id.reserve(labels.size());
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& label : labels) {
    auto [it, inserted] = seen.emplace(label, seen.size());
    out.id.push_back(it->second);
  }
  out.count = seen.size();
  return out;
}

/// N x S exposure shares w_is with region and sector identifiers.
///
/// Construction checks structure (dimensions, unique identifiers, finite
/// entries). Value constraints (non-negativity, row sums at most one) are
/// checked by validate_dataset() so they can be reported together.
class SharesMatrix {
 public:
  SharesMatrix() = default;

  SharesMatrix(std::vector<std::string> regions,
               std::vector<std::string> sectors, Matrix w,
               std::optional<std::vector<std::string>> sector_cluster = {})
      : regions_(std::move(regions)),
        sectors_(std::move(sectors)),
        w_(std::move(w)),
        sector_cluster_(std::move(sector_cluster)) {
    if (static_cast<Index>(regions_.size()) != w_.rows() ||
        static_cast<Index>(sectors_.size()) != w_.cols()) {
      throw DimensionError("share matrix is " + std::to_string(w_.rows()) +
                           "x" + std::to_string(w_.cols()) + " but has " +
                           std::to_string(regions_.size()) + " regions and " +
                           std::to_string(sectors_.size()) + " sectors");
    }
    if (sector_cluster_ && sector_cluster_->size() != sectors_.size()) {
      throw DimensionError("sector cluster map has " +
                           std::to_string(sector_cluster_->size()) +
                           " entries for " + std::to_string(sectors_.size()) +
                           " sectors");
    }
    detail::require_unique(regions_, "region");
    detail::require_unique(sectors_, "sector");
    if (!w_.allFinite()) throw DataError("share matrix has non-finite entries");
  }

  /// Shares with generated identifiers r1..rN and s1..sS.
  static SharesMatrix from_matrix(Matrix w) {
    auto regions = make_ids("r", static_cast<std::size_t>(w.rows()));
    auto sectors = make_ids("s", static_cast<std::size_t>(w.cols()));
    return SharesMatrix(std::move(regions), std::move(sectors), std::move(w));
  }

  SharesMatrix with_sector_cluster(std::vector<std::string> clusters) const {
    return SharesMatrix(regions_, sectors_, w_, std::move(clusters));
  }

  const std::vector<std::string>& regions() const { return regions_; }
  const std::vector<std::string>& sectors() const { return sectors_; }
  const Matrix& w() const { return w_; }
  const std::optional<std::vector<std::string>>& sector_cluster() const {
    return sector_cluster_;
  }
  Index n_regions() const { return w_.rows(); }
  Index n_sectors() const { return w_.cols(); }

  /// n_s = sum_i w_is.
  Vector sector_sizes() const { return w_.colwise().sum().transpose(); }
  Vector row_sums() const { return w_.rowwise().sum(); }

 private:
  std::vector<std::string> regions_;
  std::vector<std::string> sectors_;
  Matrix w_;
  std::optional<std::vector<std::string>> sector_cluster_;
};

/// Regional outcomes, controls, optional treatment, weights and clusters.
struct Design {
  Vector y1;
  std::optional<Vector> y2;
  Matrix z;  // N x K, may be N x 0
  std::optional<Vector> obs_weight;
  std::optional<std::vector<std::string>> region_cluster;
  std::vector<std::string> control_names;
};

/// Sector-level shifters aligned to the sector order of a SharesMatrix.
struct Shifters {
  Vector values;
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;
  bool akm_feasible = false;
  std::string akm_reason;
  bool row_sums_exceed_one = false;
  /// 1 - sum_s w_is per region.
  Vector row_sum_gap;

  bool clean() const { return violations.empty(); }

  void throw_if_invalid() const {
    if (clean()) return;
    std::string msg = "invalid dataset: " + violations.front();
    if (violations.size() > 1) {
      msg += " (and " + std::to_string(violations.size() - 1) + " more)";
    }
    throw DataError(msg);
  }
};

/// True when Z (under the weights) spans the region share sums, or every row
/// sums to one so no such control is required.
inline bool controls_span_share_sums(const SharesMatrix& shares,
                                     const Matrix& z,
                                     const std::optional<Vector>& weights) {
  const Vector sums = shares.row_sums();
  if (((sums.array() - 1.0).abs() <= kShareSumTolerance).all()) return true;
  if (z.cols() == 0) return false;
  const ControlProjector proj(z, weights);
  const Vector resid = proj.residualize(sums);
  return resid.lpNorm<Eigen::Infinity>() <=
         1e-8 * std::max(1.0, sums.lpNorm<Eigen::Infinity>());
}

inline std::string share_sum_warning() {
  return "share rows sum to less than one but the controls do not include the "
         "sum of shares; include sum_s w_is as a control when the shifters "
         "may have a nonzero mean";
}

/// Checks a (shares, design, shifters) triple. Dimension mismatches and
/// non-finite values throw; constraint violations are collected in the report.
inline ValidationReport validate_dataset(const SharesMatrix& shares,
                                         const Design& design,
                                         const Shifters& shifters) {
  const Index n = shares.n_regions();
  const Index s = shares.n_sectors();
  auto require_len = [n](Index got, const char* what) {
    if (got != n) {
      throw DimensionError(std::string(what) + " has " + std::to_string(got) +
                           " rows, expected " + std::to_string(n));
    }
  };
  require_len(design.y1.size(), "outcome y");
  if (design.y2) require_len(design.y2->size(), "treatment y2");
  require_len(design.z.rows(), "control matrix z");
  if (design.obs_weight) require_len(design.obs_weight->size(), "weights");
  if (design.region_cluster) {
    require_len(static_cast<Index>(design.region_cluster->size()),
                "region cluster map");
  }
  if (shifters.values.size() != s) {
    throw DimensionError("shifters have length " +
                         std::to_string(shifters.values.size()) +
                         ", expected S = " + std::to_string(s));
  }
  if (!design.y1.allFinite()) throw DataError("outcome y has non-finite values");
  if (design.y2 && !design.y2->allFinite()) {
    throw DataError("treatment y2 has non-finite values");
  }
  if (!design.z.allFinite()) throw DataError("controls have non-finite values");
  if (!shifters.values.allFinite()) {
    throw DataError("shifters have non-finite values");
  }
  if (design.obs_weight && !design.obs_weight->allFinite()) {
    throw DataError("weights have non-finite values");
  }

  ValidationReport report;
  const Matrix& w = shares.w();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < s; ++j) {
      if (w(i, j) < 0.0) {
        std::ostringstream os;
        os << "negative share at (" << shares.regions()[i] << ","
           << shares.sectors()[j] << ")";
        report.violations.push_back(os.str());
      }
    }
  }
  const Vector sums = shares.row_sums();
  report.row_sum_gap = (1.0 - sums.array()).matrix();
  for (Index i = 0; i < n; ++i) {
    if (sums(i) > 1.0 + kShareSumTolerance) {
      report.row_sums_exceed_one = true;
      std::ostringstream os;
      os.precision(12);
      os << "share row sum " << sums(i) << " exceeds 1 at region "
         << shares.regions()[i];
      report.violations.push_back(os.str());
    }
  }
  if (design.obs_weight) {
    const Vector& om = *design.obs_weight;
    if ((om.array() < 0.0).any()) {
      report.violations.push_back("negative observation weight");
    }
    if ((om.array() == 0.0).all()) {
      report.violations.push_back("all observation weights are zero");
    }
  }

  if (n < s) {
    report.akm_feasible = false;
    report.akm_reason = "N < S";
  } else {
    Matrix a = w;
    if (design.obs_weight) {
      a = design.obs_weight->array().max(0.0).sqrt().matrix().asDiagonal() * w;
    }
    const Index rank = detail::rank_of(a);
    report.akm_feasible = rank == s;
    if (!report.akm_feasible) {
      report.akm_reason = "W rank deficient (rank " + std::to_string(rank) +
                          " < S = " + std::to_string(s) + ")";
    }
  }
  if ((report.row_sum_gap.array() > kShareSumTolerance).any() &&
      report.violations.empty()) {
    std::optional<Vector> om;
    if (design.obs_weight) om = design.obs_weight->array().max(0.0).matrix();
    bool spanned = false;
    try {
      spanned = controls_span_share_sums(shares, design.z, om);
    } catch (const RankError&) {
      spanned = false;
    }
    if (!spanned) report.warnings.push_back(share_sum_warning());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Panel data

struct PanelShare {
  std::string region;
  std::string sector;
  std::string period;
  double share = 0.0;
};

/// Long-format panel: outcome rows (j, t), shifter rows (k, t) and shares
/// w_jkt. Shares absent from `shares` are zero.
struct PanelSpec {
  std::vector<std::pair<std::string, std::string>> observations;
  std::vector<std::pair<std::string, std::string>> shifter_rows;
  std::vector<PanelShare> shares;
};

struct PanelExpansion {
  SharesMatrix shares;
  /// Generalized region i -> (j, t) and generalized sector s -> (k, t).
  std::vector<std::pair<std::string, std::string>> region_index;
  std::vector<std::pair<std::string, std::string>> sector_index;
};

/// Identifier of a region-period or sector-period pair.
inline std::string panel_id(const std::string& unit, const std::string& period) {
  return unit + "@" + period;
}

/// Maps a panel onto a cross-section with generalized regions i = (j, t) and
/// sectors s = (k, t); w_is = w_jkt when the periods agree and 0 otherwise.
/// With `cluster_over_time`, sector clusters are set to c(k, t) = k. A single
/// period keeps the original identifiers.
inline PanelExpansion panel_expand(const PanelSpec& spec,
                                   bool cluster_over_time = false) {
  std::set<std::string> periods;
  for (const auto& [j, t] : spec.observations) periods.insert(t);
  for (const auto& [k, t] : spec.shifter_rows) periods.insert(t);
  const bool single = periods.size() <= 1;
  auto label = [single](const std::string& u, const std::string& t) {
    return single ? u : panel_id(u, t);
  };

  std::map<std::pair<std::string, std::string>, Index> row_of;
  std::map<std::pair<std::string, std::string>, Index> col_of;
  std::vector<std::string> regions;
  std::vector<std::string> sectors;
  std::vector<std::string> clusters;
  for (const auto& obs : spec.observations) {
    if (!row_of.emplace(obs, static_cast<Index>(regions.size())).second) {
      throw DataError("duplicate panel observation (" + obs.first + "," +
                      obs.second + ")");
    }
    regions.push_back(label(obs.first, obs.second));
  }
  for (const auto& row : spec.shifter_rows) {
    if (!col_of.emplace(row, static_cast<Index>(sectors.size())).second) {
      throw DataError("duplicate panel shifter row (" + row.first + "," +
                      row.second + ")");
    }
    sectors.push_back(label(row.first, row.second));
    clusters.push_back(row.first);
  }

  Matrix w = Matrix::Zero(static_cast<Index>(regions.size()),
                          static_cast<Index>(sectors.size()));
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& e : spec.shares) {
    if (!seen.emplace(e.region, e.sector, e.period).second) {
      throw DataError("duplicate share entry (" + e.region + "," + e.sector +
                      "," + e.period + ")");
    }
    auto r = row_of.find({e.region, e.period});
    if (r == row_of.end()) {
      throw DataError("share entry for unknown region-period (" + e.region +
                      "," + e.period + ")");
    }
    auto c = col_of.find({e.sector, e.period});
    if (c == col_of.end()) {
      throw DataError("share entry for unknown sector-period (" + e.sector +
                      "," + e.period + ")");
    }
    w(r->second, c->second) = e.share;
  }

  std::optional<std::vector<std::string>> sector_cluster;
  if (cluster_over_time) sector_cluster = std::move(clusters);
  return PanelExpansion{
      SharesMatrix(std::move(regions), std::move(sectors), std::move(w),
                   std::move(sector_cluster)),
      spec.observations, spec.shifter_rows};
}

/// Long-format (region, sector, period, share) rows of a panel expansion;
/// zero entries are omitted.
inline std::vector<PanelShare> flatten_panel(const PanelExpansion& ex) {
  std::vector<PanelShare> out;
  const Matrix& w = ex.shares.w();
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index s = 0; s < w.cols(); ++s) {
      if (w(i, s) == 0.0) continue;
      const auto& [j, t] = ex.region_index[static_cast<std::size_t>(i)];
      const auto& [k, t2] = ex.sector_index[static_cast<std::size_t>(s)];
      if (t != t2) {
        throw DataError("cross-period share in panel expansion");
      }
      out.push_back(PanelShare{j, k, t, w(i, s)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct DiagnosticsReport {
  /// max_s n_s / sum_t n_t
  double max_size_ratio = 0.0;
  /// max_s n_s^2 / sum_t n_t^2
  double max_size_sq_ratio = 0.0;
  /// sum_{s != t} (sum_i w_is w_it)^2 / sum_s n_s^2
  double t_n = 0.0;
  /// sum_{s != t} sum_i w_is^2 w_it^2 / sum_s n_s^2
  double t_n_second = 0.0;
  Vector sector_sizes;
};

/// Concentration statistics of the share matrix. Raw values only; there is
/// no agreed finite-sample threshold, so no verdict is attached.
inline DiagnosticsReport diagnostics(const SharesMatrix& shares) {
  const Matrix& w = shares.w();
  const Vector n = shares.sector_sizes();
  const double total = n.sum();
  const double total_sq = n.squaredNorm();
  if (total_sq == 0.0) throw DataError("all shares are zero");

  DiagnosticsReport out;
  out.sector_sizes = n;
  out.max_size_ratio = n.maxCoeff() / total;
  out.max_size_sq_ratio = n.array().square().maxCoeff() / total_sq;

  const Matrix gram = w.transpose() * w;
  const double off_sq = gram.squaredNorm() - gram.diagonal().squaredNorm();
  out.t_n = std::max(0.0, off_sq) / total_sq;

  const Matrix w2 = w.array().square().matrix();
  const Vector row_sq = w2.rowwise().sum();
  const Vector row_quart = w2.array().square().matrix().rowwise().sum();
  const double second = (row_sq.array().square() - row_quart.array()).sum();
  out.t_n_second = std::max(0.0, second) / total_sq;
  return out;
}

}  // namespace shiftshare
