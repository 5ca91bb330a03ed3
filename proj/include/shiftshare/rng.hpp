#pragma once

// Counter-based random streams. Draw k of stream (seed, id) is a pure
// function of (seed, id, k), so replications can be scheduled on any number of
// workers without changing a single draw.
//
// Distribution algorithms are fixed: uniforms take the top 53 bits, normals
// use the inverse CDF, gammas use Marsaglia-Tsang (with the power trick below
// shape 1, carried in logs). Reproducibility is promised within a build.

#include <cmath>
#include <cstdint>
#include <limits>

#include "shiftshare/normal.hpp"

namespace shiftshare {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 output function.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_(detail::mix64(detail::mix64(seed ^ 0x5851f42d4c957f2dULL) +
                           detail::kGolden * (stream_id + 1))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    return detail::mix64(key_ + detail::kGolden * ++counter_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform()); }

  /// log of a Gamma(shape, 1) draw; finite even when the draw underflows.
  double log_gamma_draw(double shape) {
    if (shape < 1.0) {
      return log_gamma_draw(shape + 1.0) + std::log(uniform()) / shape;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return std::log(d) + std::log(v);
      }
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream ids reserved for one-off draws made before the replication loop.
inline constexpr std::uint64_t kSetupStream = 0xffffffff00000000ULL;

}  // namespace shiftshare
