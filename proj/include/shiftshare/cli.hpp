#pragma once

// Command implementations behind the shiftshare executable. Each command
// takes a RunConfig, writes its result file (or stdout) and returns the
// process exit status:
//   0 ok, 1 unexpected failure, 2 input/file error, 3 statistical
//   infeasibility, 4 data-generating-process error.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shiftshare/csv.hpp"
#include "shiftshare/data.hpp"
#include "shiftshare/errors.hpp"
#include "shiftshare/estimate.hpp"
#include "shiftshare/infer.hpp"
#include "shiftshare/json_io.hpp"
#include "shiftshare/placebo.hpp"

namespace shiftshare::cli {

enum class Mode { estimate, iv, simulate, diagnose };
enum class Format { json, csv };

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitDgp = 4;

struct RunConfig {
  Mode mode = Mode::estimate;
  std::string regions;
  std::string shares;
  std::string shifters;
  /// Leave-one-out input: region,sector,agg_weight,shock (IV only).
  std::string loo;
  /// Placebo configuration (simulate only).
  std::string config;
  bool panel = false;
  std::vector<std::string> methods{"robust", "cluster", "akm", "akm0"};
  double level = 0.95;
  bool cluster_shifters = false;
  bool weights = false;
  bool intercept = true;
  std::optional<double> null_value;
  std::string out;
  Format format = Format::json;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

/// Verbosity from SHIFTSHARE_LOG: 0 quiet (default), 1 info, 2 debug.
inline int log_level() {
  const char* v = std::getenv("SHIFTSHARE_LOG");
  if (v == nullptr) return 0;
  const std::string s(v);
  if (s == "debug" || s == "2") return 2;
  if (s == "info" || s == "1") return 1;
  return 0;
}

inline void log(int level, const std::string& msg) {
  if (log_level() >= level) std::cerr << "shiftshare: " << msg << '\n';
}

struct Dataset {
  SharesMatrix shares;
  Design design;
  Shifters shifters;
  std::optional<LooInstrument> loo;
};

namespace detail {

inline Design make_design(const RunConfig& rc, const RegionsTable& regions) {
  Design design;
  design.y1 = regions.y1;
  design.y2 = regions.y2;
  design.region_cluster = regions.cluster;
  if (rc.weights) {
    if (!regions.weight) throw InputError("--weights needs a 'weight' column");
    design.obs_weight = regions.weight;
  }
  const Index n = regions.y1.size();
  design.z.resize(n, regions.z.cols() + (rc.intercept ? 1 : 0));
  Index col = 0;
  if (rc.intercept) {
    design.z.col(col++).setOnes();
    design.control_names.push_back("intercept");
  }
  for (Index c = 0; c < regions.z.cols(); ++c) design.z.col(col++) = regions.z.col(c);
  for (const auto& name : regions.control_names) design.control_names.push_back(name);
  return design;
}

inline Dataset load_cross_section(const RunConfig& rc) {
  const RegionsTable regions = read_regions(read_csv(rc.regions));
  const auto share_rows = read_long(read_csv(rc.shares), "share");
  std::optional<ShiftersTable> shifters;
  if (!rc.shifters.empty()) shifters = read_shifters(read_csv(rc.shifters));

  std::vector<std::string> sectors;
  if (shifters) {
    sectors = shifters->sectors;
  } else {
    sectors = first_appearance(share_rows, [](const ShareEntry& e) { return e.sector; });
  }
  Matrix w = dense_from_long(share_rows, regions.regions, sectors, "share");
  std::optional<std::vector<std::string>> clusters;
  if (rc.cluster_shifters) {
    if (!shifters || !shifters->cluster) {
      throw InputError("--cluster-shifters needs a 'cluster' column in the "
                       "shifters file");
    }
    clusters = shifters->cluster;
  }
  Dataset d{SharesMatrix(regions.regions, sectors, std::move(w), clusters), {}, {}, {}};
  d.shifters.values = shifters ? shifters->values : Vector::Zero(static_cast<Index>(sectors.size()));
  d.design = make_design(rc, regions);
  return d;
}

inline Dataset load_panel(const RunConfig& rc) {
  const RegionsTable regions = read_regions(read_csv(rc.regions));
  const auto share_rows = read_long(read_csv(rc.shares), "share");
  if (rc.shifters.empty()) throw InputError("--panel needs a shifters file");
  const ShiftersTable shifters = read_shifters(read_csv(rc.shifters));
  if (regions.periods.empty() || shifters.periods.empty()) {
    throw InputError("--panel needs a 'period' column in the regions and "
                     "shifters files");
  }
  PanelSpec spec;
  for (std::size_t r = 0; r < regions.regions.size(); ++r) {
    spec.observations.emplace_back(regions.regions[r], regions.periods[r]);
  }
  for (std::size_t s = 0; s < shifters.sectors.size(); ++s) {
    spec.shifter_rows.emplace_back(shifters.sectors[s], shifters.periods[s]);
  }
  for (const auto& e : share_rows) {
    if (e.period.empty()) throw InputError("--panel needs a 'period' column in the shares file");
    spec.shares.push_back(PanelShare{e.region, e.sector, e.period, e.value});
  }
  PanelExpansion ex = panel_expand(spec, rc.cluster_shifters);
  SharesMatrix shares = ex.shares;
  if (rc.cluster_shifters && shifters.cluster) {
    shares = shares.with_sector_cluster(*shifters.cluster);
  }
  Dataset d{shares, {}, {}, {}};
  d.shifters.values = shifters.values;
  d.design = make_design(rc, regions);
  return d;
}

inline void attach_loo(const RunConfig& rc, Dataset& d) {
  if (rc.loo.empty()) return;
  const CsvTable t = read_csv(rc.loo);
  const auto agg = read_long(t, "agg_weight");
  const auto shock = read_long(t, "shock");
  const Matrix aw = dense_from_long(agg, d.shares.regions(), d.shares.sectors(), "agg_weight");
  const Matrix local = dense_from_long(shock, d.shares.regions(), d.shares.sectors(), "shock");
  d.loo = build_loo_instrument(d.shares, aw, local);
}

inline void write_output(const RunConfig& rc, const std::string& text) {
  if (rc.out.empty() || rc.out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(rc.out, std::ios::binary);
  if (!f) throw InputError("cannot write '" + rc.out + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + rc.out + "'");
}

inline std::string results_csv(const std::vector<InferenceResult>& rows,
                               std::optional<double> null_value) {
  std::ostringstream os;
  os << "method,estimate,se,ci_shape,ci_lo,ci_hi,effective_se,level";
  if (null_value) os << ",null_value,reject_null";
  os << '\n';
  for (const auto& r : rows) {
    os << to_string(r.method) << ',' << format6(r.estimate) << ','
       << (r.se ? format6(*r.se) : std::string()) << ',' << to_string(r.ci.shape)
       << ',' << format6(r.ci.lo) << ',' << format6(r.ci.hi) << ','
       << format6(r.ci.effective_se) << ',' << format6(r.ci.level);
    if (null_value) {
      os << ',' << format6(*null_value) << ',' << (r.rejects(*null_value) ? 1 : 0);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace detail

inline Dataset load_dataset(const RunConfig& rc) {
  if (rc.regions.empty()) throw InputError("--regions is required");
  if (rc.shares.empty()) throw InputError("--shares is required");
  Dataset d = rc.panel ? detail::load_panel(rc) : detail::load_cross_section(rc);
  detail::attach_loo(rc, d);
  return d;
}

/// Fits the model and computes every requested method. Throws on error.
inline Json estimate_json(const RunConfig& rc, std::vector<InferenceResult>* rows_out = nullptr) {
  Dataset d = load_dataset(rc);
  const bool iv = rc.mode == Mode::iv;
  if (!iv && d.loo) throw InputError("--loo applies to the iv command only");
  if (!iv && rc.shifters.empty()) throw InputError("--shifters is required");
  if (iv && rc.shifters.empty() && !d.loo) {
    throw InputError("iv needs --shifters or --loo");
  }
  const ValidationReport report = validate_dataset(d.shares, d.design, d.shifters);
  report.throw_if_invalid();
  for (const auto& w : report.warnings) log(0, "warning: " + w);

  std::vector<Method> methods;
  for (const auto& m : rc.methods) methods.push_back(method_from_string(m));

  FitResult fit;
  if (iv) {
    if (!d.design.y2) throw InputError("iv needs a 'y2' column in the regions file");
    const Vector instrument = d.loo ? d.loo->x_hat_loo : build_shift_share(d.shares, d.shifters);
    fit = iv_fit(make_controls(d.design), d.design.y1, *d.design.y2, instrument);
    fit.share_sums_controlled =
        controls_span_share_sums(d.shares, d.design.z, d.design.obs_weight);
  } else {
    fit = ols_fit(d.design, d.shares, d.shifters);
  }
  log(1, std::string("fitted ") + to_string(fit.mode) + " on " +
             std::to_string(d.shares.n_regions()) + " regions, " +
             std::to_string(d.shares.n_sectors()) + " sectors");

  std::optional<SectorProjection> proj;
  auto projection = [&]() -> const SectorProjection& {
    if (!proj) {
      if (!report.akm_feasible) {
        throw AkmInfeasible("AKM infeasible: " + report.akm_reason +
                            "; aggregate sectors or drop small ones so that W "
                            "has full column rank");
      }
      proj = sector_project(d.shares, fit.x_dotdot, d.design.obs_weight);
    }
    return *proj;
  };

  std::vector<InferenceResult> rows;
  for (Method m : methods) {
    switch (m) {
      case Method::robust:
        rows.push_back(se_conventional(fit, rc.level));
        break;
      case Method::cluster:
        if (!d.design.region_cluster) {
          throw InputError("method 'cluster' needs a 'cluster' column in the regions file");
        }
        rows.push_back(se_conventional(fit, rc.level, d.design.region_cluster));
        break;
      case Method::akm:
        rows.push_back(se_akm(fit, d.shares, projection(), rc.level, false));
        break;
      case Method::akm_clustered:
        rows.push_back(se_akm(fit, d.shares, projection(), rc.level, true));
        break;
      case Method::akm0:
        rows.push_back(infer_akm0(fit, d.shares, projection(), rc.level, false));
        break;
      case Method::akm0_clustered:
        rows.push_back(infer_akm0(fit, d.shares, projection(), rc.level, true));
        break;
      case Method::akm_loo:
        if (!iv || !d.loo) throw InputError("method 'akm_loo' needs the iv command with --loo");
        rows.push_back(se_akm_loo(fit, d.shares, projection(), *d.loo, rc.level,
                                  rc.cluster_shifters));
        break;
    }
  }

  Json out;
  out["mode"] = to_string(fit.mode);
  out["n_regions"] = d.shares.n_regions();
  out["n_sectors"] = d.shares.n_sectors();
  out["level"] = rc.level;
  Json f;
  f["beta_hat"] = number_json(fit.beta_hat);
  f["alpha_hat"] = fit.alpha_hat ? number_json(*fit.alpha_hat) : Json(nullptr);
  f["first_stage"] = iv ? number_json(fit.beta_hat) : Json(nullptr);
  f["residual_norm"] = number_json(fit.residuals.norm());
  out["fit"] = f;
  Json results = Json::array();
  std::vector<std::string> warnings = report.warnings;
  for (const auto& r : rows) {
    Json j = to_json(r);
    if (rc.null_value) {
      j["null_value"] = *rc.null_value;
      j["reject_null"] = r.rejects(*rc.null_value);
    }
    results.push_back(j);
    for (const auto& w : r.warnings) {
      if (std::find(warnings.begin(), warnings.end(), w) == warnings.end()) warnings.push_back(w);
    }
  }
  out["results"] = results;
  out["warnings"] = warnings;
  if (rows_out) *rows_out = std::move(rows);
  return out;
}

inline Json diagnose_json(const RunConfig& rc) {
  SharesMatrix shares;
  std::optional<ValidationReport> report;
  if (!rc.regions.empty()) {
    RunConfig copy = rc;
    const Dataset d = load_dataset(copy);
    shares = d.shares;
    if (!rc.shifters.empty()) report = validate_dataset(d.shares, d.design, d.shifters);
  } else {
    if (rc.shares.empty()) throw InputError("--shares is required");
    shares = read_shares_only(rc.shares);
  }
  const DiagnosticsReport diag = diagnostics(shares);
  Json out;
  out["n_regions"] = shares.n_regions();
  out["n_sectors"] = shares.n_sectors();
  out["max_size_ratio"] = diag.max_size_ratio;
  out["max_size_sq_ratio"] = diag.max_size_sq_ratio;
  out["t_n"] = diag.t_n;
  out["t_n_second"] = diag.t_n_second;
  if (report) {
    out["akm_feasible"] = report->akm_feasible;
    out["akm_reason"] = report->akm_reason;
    out["violations"] = report->violations;
    out["warnings"] = report->warnings;
  }
  return out;
}

/// Applies command-line overrides to a placebo config document.
inline Json effective_placebo_config(const RunConfig& rc) {
  if (rc.config.empty()) throw InputError("simulate needs --config");
  std::ifstream in(rc.config);
  if (!in) throw InputError("cannot open '" + rc.config + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw InputError(rc.config + ": " + e.what());
  }
  if (rc.seed) j["seed"] = *rc.seed;
  j.erase("workers");
  return j;
}

inline std::string config_dir(const std::string& path) {
  const auto slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string() : path.substr(0, slash);
}

inline Json simulate_json(const RunConfig& rc, PlaceboReport* report_out = nullptr) {
  Json doc = effective_placebo_config(rc);
  const std::string hash = hex64(fnv1a(doc.dump()));
  std::size_t workers = 1;
  {
    std::ifstream in(rc.config);
    const Json raw = Json::parse(in);
    workers = raw.value("workers", std::size_t{1});
  }
  if (rc.workers) workers = *rc.workers;
  ParsedPlacebo parsed = parse_placebo_config(doc, config_dir(rc.config));
  parsed.config.workers = workers;
  log(1, "simulating " + std::to_string(parsed.config.replications) +
             " replications, seed " + std::to_string(parsed.config.seed) +
             ", config " + hash);
  const PlaceboReport report = run_placebo(parsed.config);
  Json out = to_json(report);
  out["config_hash"] = hash;
  out["null_is_estimand"] = parsed.null_is_estimand;
  if (parsed.estimand_std_error > 0.0) out["estimand_std_error"] = parsed.estimand_std_error;
  if (report_out) *report_out = report;
  return out;
}

/// Maps an exception to an exit status and prints the one-line diagnostic.
inline int report_error(const std::exception& e) {
  int code = kExitFailure;
  std::string hint;
  if (dynamic_cast<const DgpError*>(&e)) {
    code = kExitDgp;
  } else if (dynamic_cast<const AkmInfeasible*>(&e)) {
    code = kExitInfeasible;
  } else if (dynamic_cast<const DegenerateRegressor*>(&e) ||
             dynamic_cast<const WeakInstrumentDegenerate*>(&e) ||
             dynamic_cast<const LeaveOneOutUndefined*>(&e) ||
             dynamic_cast<const RankError*>(&e)) {
    code = kExitInfeasible;
  } else if (dynamic_cast<const DataError*>(&e) ||
             dynamic_cast<const DimensionError*>(&e) ||
             dynamic_cast<const ClusterError*>(&e)) {
    code = kExitInput;
  }
  std::cerr << "shiftshare: error: " << e.what() << '\n';
  return code;
}

inline int run(const RunConfig& rc) {
  try {
    switch (rc.mode) {
      case Mode::estimate:
      case Mode::iv: {
        std::vector<InferenceResult> rows;
        const Json out = estimate_json(rc, &rows);
        if (rc.format == Format::csv) {
          detail::write_output(rc, detail::results_csv(rows, rc.null_value));
        } else {
          detail::write_output(rc, out.dump(2) + "\n");
        }
        break;
      }
      case Mode::diagnose: {
        const Json out = diagnose_json(rc);
        detail::write_output(rc, out.dump(2) + "\n");
        break;
      }
      case Mode::simulate: {
        PlaceboReport report;
        const Json out = simulate_json(rc, &report);
        if (rc.format == Format::csv) {
          detail::write_output(rc, report_csv(report));
        } else {
          detail::write_output(rc, out.dump(2) + "\n");
        }
        std::cerr << "shiftshare: seed " << out["seed"].get<std::uint64_t>()
                  << ", config hash " << out["config_hash"].get<std::string>() << '\n';
        break;
      }
    }
  } catch (const ReplicationFailure& e) {
    try {
      std::rethrow_exception(e.inner());
    } catch (const std::exception& inner) {
      std::cerr << "shiftshare: error: replication " << e.index() << " failed\n";
      return report_error(inner);
    }
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return kExitOk;
}

}  // namespace shiftshare::cli
