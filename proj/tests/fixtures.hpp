#pragma once

// Small deterministic instances shared by the test files.

#include <string>
#include <vector>

#include "shiftshare/data.hpp"
#include "shiftshare/dgp.hpp"
#include "shiftshare/rng.hpp"

namespace fixtures {

using shiftshare::Index;
using shiftshare::Matrix;
using shiftshare::Vector;

/// Regions 1,2 specialized in s1 and regions 3,4 in s2.
inline shiftshare::SharesMatrix concentrated_2x4() {
  Matrix w(4, 2);
  w << 1, 0, 1, 0, 0, 1, 0, 1;
  return shiftshare::SharesMatrix::from_matrix(w);
}

/// Every region has a unit share in a random sector; each sector is used at
/// least once.
inline shiftshare::SharesMatrix random_concentrated(Index n, Index s,
                                                    shiftshare::RngStream& rng) {
  Matrix w = Matrix::Zero(n, s);
  for (Index i = 0; i < n; ++i) {
    const Index k = i < s ? i : static_cast<Index>(rng.uniform() * static_cast<double>(s));
    w(i, k) = 1.0;
  }
  return shiftshare::SharesMatrix::from_matrix(w);
}

inline shiftshare::SharesMatrix random_dense(Index n, Index s, double alpha,
                                             shiftshare::RngStream& rng,
                                             double row_scale_min = 0.5) {
  return shiftshare::synth_shares(n, s, alpha, rng, row_scale_min);
}

inline Vector normals(Index n, shiftshare::RngStream& rng, double sd = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = sd * rng.normal();
  return v;
}

inline Matrix normals(Index n, Index k, shiftshare::RngStream& rng) {
  Matrix m(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline Matrix with_intercept(const Matrix& z) {
  Matrix out(z.rows(), z.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(z.cols()) = z;
  return out;
}

}  // namespace fixtures
