#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shiftshare {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs whose dimensions do not line up (N, S or K disagree).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or non-finite data, duplicate identifiers, bad CSV content.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A control matrix without full column rank.
class RankError : public Error {
 public:
  RankError(const std::string& what, std::size_t column)
      : Error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// The partialled-out regressor is identically zero.
class DegenerateRegressor : public Error {
 public:
  using Error::Error;
};

/// IV first stage with zero covariance between instrument and treatment.
class WeakInstrumentDegenerate : public Error {
 public:
  using Error::Error;
};

/// The sector projection cannot be computed (N < S or W rank deficient).
class AkmInfeasible : public Error {
 public:
  using Error::Error;
};

/// Conventional clustering requested with fewer than two clusters.
class ClusterError : public Error {
 public:
  using Error::Error;
};

/// Leave-one-out shifter estimate needed where the leave-out mass is zero.
class LeaveOneOutUndefined : public Error {
 public:
  LeaveOneOutUndefined(std::size_t sector, std::size_t region)
      : Error("leave-one-out shifter undefined for sector " +
              std::to_string(sector) + " excluding region " +
              std::to_string(region) + " (zero remaining aggregation weight)"),
        sector_(sector),
        region_(region) {}
  std::size_t sector() const noexcept { return sector_; }
  std::size_t region() const noexcept { return region_; }

 private:
  std::size_t sector_;
  std::size_t region_;
};

/// Invalid data-generating process parameters.
class DgpError : public Error {
 public:
  using Error::Error;
};

}  // namespace shiftshare
