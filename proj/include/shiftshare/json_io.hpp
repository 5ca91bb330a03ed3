#pragma once

// JSON serialization of results and placebo reports, and parsing of placebo
// configuration documents. Infinite values are written as the strings "inf"
// and "-inf"; all other numbers keep full double precision.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shiftshare/csv.hpp"
#include "shiftshare/data.hpp"
#include "shiftshare/dgp.hpp"
#include "shiftshare/errors.hpp"
#include "shiftshare/infer.hpp"
#include "shiftshare/placebo.hpp"
#include "shiftshare/rng.hpp"

namespace shiftshare {

using Json = nlohmann::json;

inline Json number_json(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline Json to_json(const ConfidenceSet& ci) {
  return Json{{"shape", to_string(ci.shape)},
              {"lo", number_json(ci.lo)},
              {"hi", number_json(ci.hi)}};
}

inline Json to_json(const InferenceResult& r) {
  Json j;
  j["method"] = to_string(r.method);
  j["estimate"] = number_json(r.estimate);
  j["se"] = r.se ? number_json(*r.se) : Json(nullptr);
  j["ci"] = to_json(r.ci);
  j["effective_se"] = number_json(r.ci.effective_se);
  j["level"] = r.ci.level;
  if (r.se_uncorrected) j["se_uncorrected"] = number_json(*r.se_uncorrected);
  return j;
}

inline Json to_json(const PlaceboReport& r) {
  Json methods = Json::array();
  for (const auto& m : r.methods) {
    methods.push_back(Json{{"method", to_string(m.method)},
                           {"rejection_rate", m.rejection_rate},
                           {"rejections", m.rejections},
                           {"median_effective_se", number_json(m.median_effective_se)},
                           {"unbounded", m.unbounded}});
  }
  return Json{{"replications", r.replications},
              {"seed", r.seed},
              {"level", r.level},
              {"null_value", number_json(r.null_value)},
              {"mean_estimate", number_json(r.mean_estimate)},
              {"sd_estimate", number_json(r.sd_estimate)},
              {"methods", methods}};
}

/// Six significant digits, as used in CSV output.
inline std::string format6(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string report_csv(const PlaceboReport& r) {
  std::ostringstream os;
  os << "method,rejection_rate,rejections,median_effective_se,unbounded,"
        "replications,mean_estimate,sd_estimate\n";
  for (const auto& m : r.methods) {
    os << to_string(m.method) << ',' << format6(m.rejection_rate) << ','
       << m.rejections << ',' << format6(m.median_effective_se) << ','
       << m.unbounded << ',' << r.replications << ','
       << format6(r.mean_estimate) << ',' << format6(r.sd_estimate) << '\n';
  }
  return os.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Placebo configuration

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("config key '") + key + "': " + e.what());
  }
}

inline const Json& require_key(const Json& j, const char* key, const char* where) {
  if (!j.is_object() || !j.contains(key)) {
    throw DataError(std::string(where) + ": missing key '" + key + "'");
  }
  return j.at(key);
}

inline ShifterDgp parse_shifter_dgp(const Json& j, const SharesMatrix& shares) {
  const std::string kind = require_key(j, "kind", "shifter spec").get<std::string>();
  const double variance = get_or(j, "variance", 5.0);
  if (kind == "iid_normal") return ShifterDgp::iid_normal(variance);
  if (kind == "lognormal_recentered") return ShifterDgp::lognormal_recentered(variance);
  if (kind == "heteroskedastic") {
    return ShifterDgp::heteroskedastic(get_or(j, "base", 5.0),
                                       get_or(j, "lambda", 0.0), shares);
  }
  if (kind == "cluster_mvn") {
    if (!shares.sector_cluster()) {
      throw DataError("cluster_mvn shifters need sector clusters on the shares");
    }
    return ShifterDgp::cluster_mvn(variance, get_or(j, "rho", 0.0),
                                   *shares.sector_cluster());
  }
  if (kind == "factor") {
    const auto eta = get_or(j, "eta", std::vector<double>{});
    Vector e(static_cast<Index>(eta.size()));
    for (std::size_t k = 0; k < eta.size(); ++k) e(static_cast<Index>(k)) = eta[k];
    return ShifterDgp::factor(get_or(j, "kappa", 0.0), e,
                              get_or(j, "delta_xbar", 0.0),
                              get_or(j, "u_variance", variance));
  }
  throw DataError("unknown shifter kind '" + kind + "'");
}

inline AddonKind parse_addon_kind(const std::string& s) {
  for (AddonKind k : {AddonKind::none, AddonKind::region_cluster_shock,
                      AddonKind::residual_sector_shock,
                      AddonKind::alt_share_shiftshare,
                      AddonKind::same_share_shiftshare, AddonKind::iid_noise}) {
    if (s == to_string(k)) return k;
  }
  throw DataError("unknown outcome addon '" + s + "'");
}

inline EffectKind parse_effect_kind(const std::string& s) {
  for (EffectKind k : {EffectKind::null, EffectKind::homogeneous,
                       EffectKind::heterogeneous_linear, EffectKind::nonlinear}) {
    if (s == to_string(k)) return k;
  }
  throw DataError("unknown effect kind '" + s + "'");
}

}  // namespace detail

/// A parsed placebo configuration. `null_is_estimand` records that the
/// tested null is the estimand implied by the outcome design.
struct ParsedPlacebo {
  PlaceboConfig config;
  bool null_is_estimand = false;
  /// Monte Carlo error of the estimand (nonlinear designs), else 0.
  double estimand_std_error = 0.0;
};

/// Builds a PlaceboConfig from a JSON document. Relative share file paths are
/// resolved against `base_dir`.
inline ParsedPlacebo parse_placebo_config(const Json& j,
                                          const std::string& base_dir = "") {
  using detail::get_or;
  ParsedPlacebo out;
  PlaceboConfig& cfg = out.config;
  if (!j.is_object()) throw DataError("placebo config must be a JSON object");
  cfg.replications = get_or<std::size_t>(j, "replications", 2000);
  cfg.seed = get_or<std::uint64_t>(j, "seed", 1);
  cfg.level = get_or(j, "level", 0.95);
  cfg.workers = get_or<std::size_t>(j, "workers", 1);
  critical_value(cfg.level);

  // Shares
  const Json& sj = detail::require_key(j, "shares", "config");
  Index states = 0;
  if (sj.contains("synthetic")) {
    const Json& syn = sj.at("synthetic");
    ShareSynthesis spec;
    spec.regions = get_or<Index>(syn, "regions", 0);
    spec.sectors = get_or<Index>(syn, "sectors", 0);
    spec.concentration = get_or(syn, "concentration", 1.0);
    spec.row_scale_min = get_or(syn, "row_scale_min", 1.0);
    spec.states = get_or<Index>(syn, "states", 0);
    spec.state_mix = get_or(syn, "state_mix", 0.0);
    spec.size_skew = get_or(syn, "size_skew", 0.0);
    spec.sector_cluster_size = get_or<Index>(syn, "sector_cluster_size", 0);
    states = spec.states;
    RngStream rng(get_or<std::uint64_t>(syn, "seed", cfg.seed), kSetupStream);
    cfg.shares = synth_shares(spec, rng);
  } else if (sj.contains("file")) {
    std::string path = sj.at("file").get<std::string>();
    if (!base_dir.empty() && !path.empty() && path.front() != '/') {
      path = base_dir + "/" + path;
    }
    cfg.shares = read_shares_only(path);
    const Index size = get_or<Index>(sj, "sector_cluster_size", 0);
    if (size > 0) {
      cfg.shares = cfg.shares.with_sector_cluster(
          sector_cluster_labels(cfg.shares.n_sectors(), size));
    }
  } else {
    throw DataError("shares: need 'synthetic' or 'file'");
  }
  const Index n = cfg.shares.n_regions();
  const Index region_clusters = get_or<Index>(j, "region_clusters", states);
  if (region_clusters > 0) cfg.region_cluster = state_labels(n, region_clusters);

  cfg.shifters = detail::parse_shifter_dgp(
      detail::require_key(j, "shifters", "config"), cfg.shares);

  // Outcome
  OutcomeDgp& od = cfg.outcome;
  od.base = Vector::Zero(n);
  const Json oj = j.value("outcome", Json::object());
  if (oj.contains("base")) {
    const Json& b = oj.at("base");
    const std::string kind = get_or<std::string>(b, "kind", "zero");
    const double var = get_or(b, "variance", 1.0);
    RngStream rng(cfg.seed, kSetupStream + 1);
    if (kind == "fixed_normal") {
      for (Index i = 0; i < n; ++i) od.base(i) = std::sqrt(var) * rng.normal();
    } else if (kind == "fixed_shiftshare") {
      const Shifters a = draw_shifters(ShifterDgp::iid_normal(var),
                                       cfg.shares.n_sectors(), rng);
      od.base = cfg.shares.w() * a.values;
    } else if (kind != "zero") {
      throw DataError("unknown outcome base '" + kind + "'");
    }
  }
  if (oj.contains("addon")) {
    const Json& a = oj.at("addon");
    od.addon = detail::parse_addon_kind(get_or<std::string>(a, "kind", "none"));
    od.addon_variance = get_or(a, "variance", 5.0);
    if (a.contains("shocks")) {
      od.addon_shocks = detail::parse_shifter_dgp(a.at("shocks"), cfg.shares);
    } else {
      od.addon_shocks = ShifterDgp::iid_normal(od.addon_variance);
    }
    if (od.addon == AddonKind::region_cluster_shock) {
      if (!cfg.region_cluster) {
        throw DataError("region_cluster_shock needs region clusters");
      }
      od.addon_clusters = *cfg.region_cluster;
    }
    if (od.addon == AddonKind::alt_share_shiftshare) {
      RngStream rng(cfg.seed, kSetupStream + 2);
      od.alt_w = alt_shares(cfg.shares, get_or(a, "u_variance", 1.0),
                            get_or(a, "v_max", 0.0), rng)
                     .w();
    }
  }
  if (oj.contains("effect")) {
    const Json& e = oj.at("effect");
    od.effect = detail::parse_effect_kind(get_or<std::string>(e, "kind", "null"));
    switch (od.effect) {
      case EffectKind::null: break;
      case EffectKind::homogeneous: od.effect_param = get_or(e, "beta", 0.0); break;
      case EffectKind::heterogeneous_linear:
        od.effect_param = get_or(e, "lambda", 0.0);
        break;
      case EffectKind::nonlinear:
        od.effect_param = get_or(e, "beta_check", 0.0);
        break;
    }
  }

  // Methods
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods")) {
      cfg.methods.push_back(method_from_string(m.get<std::string>()));
    }
  }

  const Json cj = j.value("controls", Json::object());
  cfg.intercept = get_or(cj, "intercept", true);
  cfg.share_sum_control = get_or(cj, "share_sum", false);

  if (j.contains("iv")) {
    const Json& iv = j.at("iv");
    IvDgp d;
    d.psi_variance = get_or(iv, "psi_variance", 10.0);
    d.rho = get_or(iv, "rho", 0.0);
    d.shock_variance = get_or(iv, "shock_variance", 20.0);
    const std::string inst = get_or<std::string>(iv, "instrument", "leave_one_out");
    if (inst == "oracle") d.instrument = IvInstrument::oracle;
    else if (inst == "aggregate") d.instrument = IvInstrument::aggregate;
    else if (inst == "leave_one_out") d.instrument = IvInstrument::leave_one_out;
    else throw DataError("unknown IV instrument '" + inst + "'");
    cfg.iv = d;
  }

  // Null
  if (j.contains("null") && j.at("null").is_string()) {
    if (j.at("null").get<std::string>() != "estimand") {
      throw DataError("'null' must be a number or \"estimand\"");
    }
    out.null_is_estimand = true;
    if (cfg.iv) {
      cfg.null_value = 0.0;
    } else {
      switch (od.effect) {
        case EffectKind::null: cfg.null_value = 0.0; break;
        case EffectKind::homogeneous: cfg.null_value = od.effect_param; break;
        case EffectKind::heterogeneous_linear:
          cfg.null_value = heterogeneous_estimand(od.effect_param, cfg.shares);
          break;
        case EffectKind::nonlinear: {
          if (cfg.shifters.kind != ShifterKind::iid_normal) {
            throw DgpError("nonlinear estimand needs iid normal shifters");
          }
          RngStream rng(cfg.seed, kSetupStream + 3);
          const auto est = estimand_nonlinear(
              od.effect_param, cfg.shares, cfg.shifters.variance,
              get_or<std::size_t>(j, "estimand_draws", 50000), rng);
          cfg.null_value = est.value;
          out.estimand_std_error = est.std_error;
          break;
        }
      }
    }
  } else {
    cfg.null_value = get_or(j, "null", 0.0);
  }
  return out;
}

}  // namespace shiftshare
