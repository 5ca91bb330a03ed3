#pragma once

// CSV ingestion for the long-format input files.
//
//   shares     region,sector,share            (+ period for panels)
//   shifters   sector,shifter[,cluster]       (+ period)
//   regions    region,y[,y2][,weight][,cluster],z1,...,zK   (+ period)
//   loo        region,sector,agg_weight,shock
//
// Comma-delimited, '.' decimal separator, optional double quotes around
// fields. Region and sector order is first appearance in the file.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shiftshare/data.hpp"
#include "shiftshare/errors.hpp"
#include "shiftshare/linalg.hpp"

namespace shiftshare {

/// Input file could not be opened or parsed.
class InputError : public DataError {
 public:
  using DataError::DataError;
};

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based file line of each row.
  std::vector<std::size_t> lines;

  std::optional<std::size_t> column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }

  std::size_t require(const std::string& name) const {
    auto c = column(name);
    if (!c) throw InputError(path + ": missing column '" + name + "'");
    return *c;
  }

  double number(std::size_t row, std::size_t col) const {
    const std::string& s = rows[row][col];
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
      throw InputError(path + ":" + std::to_string(lines[row]) + ": '" + s +
                       "' in column '" + header[col] + "' is not a number");
    }
    if (!std::isfinite(v)) {
      throw DataError(path + ":" + std::to_string(lines[row]) +
                      ": non-finite value in column '" + header[col] + "'");
    }
    return v;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        field += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& path) {
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw InputError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw InputError(path + ": empty file");
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

// ---------------------------------------------------------------------------

struct RegionsTable {
  std::vector<std::string> regions;
  std::vector<std::string> periods;  // empty unless a period column exists
  Vector y1;
  std::optional<Vector> y2;
  std::optional<Vector> weight;
  std::optional<std::vector<std::string>> cluster;
  Matrix z;
  std::vector<std::string> control_names;
};

inline RegionsTable read_regions(const CsvTable& t) {
  static const std::set<std::string> reserved{"region", "y",       "y2",
                                              "weight", "cluster", "period"};
  RegionsTable out;
  const std::size_t n = t.rows.size();
  const std::size_t c_region = t.require("region");
  const std::size_t c_y = t.require("y");
  const auto c_y2 = t.column("y2");
  const auto c_w = t.column("weight");
  const auto c_cl = t.column("cluster");
  const auto c_period = t.column("period");
  std::vector<std::size_t> controls;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (!reserved.count(t.header[c])) {
      controls.push_back(c);
      out.control_names.push_back(t.header[c]);
    }
  }
  out.y1.resize(static_cast<Index>(n));
  if (c_y2) out.y2 = Vector(static_cast<Index>(n));
  if (c_w) out.weight = Vector(static_cast<Index>(n));
  if (c_cl) out.cluster.emplace();
  out.z.resize(static_cast<Index>(n), static_cast<Index>(controls.size()));
  for (std::size_t r = 0; r < n; ++r) {
    const Index i = static_cast<Index>(r);
    out.regions.push_back(t.rows[r][c_region]);
    if (c_period) out.periods.push_back(t.rows[r][*c_period]);
    out.y1(i) = t.number(r, c_y);
    if (c_y2) (*out.y2)(i) = t.number(r, *c_y2);
    if (c_w) (*out.weight)(i) = t.number(r, *c_w);
    if (c_cl) out.cluster->push_back(t.rows[r][*c_cl]);
    for (std::size_t k = 0; k < controls.size(); ++k) {
      out.z(i, static_cast<Index>(k)) = t.number(r, controls[k]);
    }
  }
  return out;
}

struct ShiftersTable {
  std::vector<std::string> sectors;
  std::vector<std::string> periods;
  Vector values;
  std::optional<std::vector<std::string>> cluster;
};

inline ShiftersTable read_shifters(const CsvTable& t) {
  ShiftersTable out;
  const std::size_t c_sector = t.require("sector");
  const std::size_t c_value = t.require("shifter");
  const auto c_cl = t.column("cluster");
  const auto c_period = t.column("period");
  out.values.resize(static_cast<Index>(t.rows.size()));
  if (c_cl) out.cluster.emplace();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out.sectors.push_back(t.rows[r][c_sector]);
    if (c_period) out.periods.push_back(t.rows[r][*c_period]);
    out.values(static_cast<Index>(r)) = t.number(r, c_value);
    if (c_cl) out.cluster->push_back(t.rows[r][*c_cl]);
  }
  return out;
}

struct ShareEntry {
  std::string region;
  std::string sector;
  std::string period;
  double value = 0.0;
};

/// Reads long-format rows; `value_column` is "share" for shares.
inline std::vector<ShareEntry> read_long(const CsvTable& t,
                                         const std::string& value_column) {
  const std::size_t c_region = t.require("region");
  const std::size_t c_sector = t.require("sector");
  const std::size_t c_value = t.require(value_column);
  const auto c_period = t.column("period");
  std::vector<ShareEntry> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out.push_back(ShareEntry{t.rows[r][c_region], t.rows[r][c_sector],
                             c_period ? t.rows[r][*c_period] : std::string(),
                             t.number(r, c_value)});
  }
  return out;
}

/// Dense N x S matrix from long entries, given region and sector orders.
/// Missing entries are zero; duplicates and unknown identifiers are errors.
inline Matrix dense_from_long(const std::vector<ShareEntry>& entries,
                              const std::vector<std::string>& regions,
                              const std::vector<std::string>& sectors,
                              const std::string& what) {
  std::map<std::string, Index> row_of;
  std::map<std::string, Index> col_of;
  for (std::size_t k = 0; k < regions.size(); ++k) row_of.emplace(regions[k], static_cast<Index>(k));
  for (std::size_t k = 0; k < sectors.size(); ++k) col_of.emplace(sectors[k], static_cast<Index>(k));
  Matrix m = Matrix::Zero(static_cast<Index>(regions.size()),
                          static_cast<Index>(sectors.size()));
  std::set<std::pair<Index, Index>> seen;
  for (const auto& e : entries) {
    auto r = row_of.find(e.region);
    if (r == row_of.end()) {
      throw DataError(what + " entry for unknown region '" + e.region + "'");
    }
    auto c = col_of.find(e.sector);
    if (c == col_of.end()) {
      throw DataError(what + " entry for unknown sector '" + e.sector + "'");
    }
    if (!seen.emplace(r->second, c->second).second) {
      throw DataError("duplicate " + what + " entry (" + e.region + "," +
                      e.sector + ")");
    }
    m(r->second, c->second) = e.value;
  }
  return m;
}

/// Identifiers in first-appearance order.
template <typename Get>
std::vector<std::string> first_appearance(const std::vector<ShareEntry>& entries,
                                          Get get) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    const std::string& id = get(e);
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

/// Shares read on their own (regions and sectors in file order).
inline SharesMatrix read_shares_only(const std::string& path) {
  const auto entries = read_long(read_csv(path), "share");
  auto regions = first_appearance(entries, [](const ShareEntry& e) { return e.region; });
  auto sectors = first_appearance(entries, [](const ShareEntry& e) { return e.sector; });
  Matrix w = dense_from_long(entries, regions, sectors, "share");
  return SharesMatrix(std::move(regions), std::move(sectors), std::move(w));
}

}  // namespace shiftshare
