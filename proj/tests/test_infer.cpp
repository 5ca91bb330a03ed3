#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "grid_support.hpp"
#include "oracles.hpp"
#include "shiftshare/infer.hpp"

using namespace shiftshare;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

FitResult concentrated_fit() {
  Design d;
  d.y1 = Vector(4);
  d.y1 << 2, 1, -1, -1;
  d.z = Matrix::Zero(4, 0);
  Vector x(2);
  x << 1, -1;
  return ols_fit(d, fixtures::concentrated_2x4(), Shifters{x});
}

std::vector<std::string> labels_of(const SharesMatrix& shares) {
  std::vector<std::string> out;
  for (Index i = 0; i < shares.n_regions(); ++i) {
    Index k = 0;
    shares.w().row(i).maxCoeff(&k);
    out.push_back(shares.sectors()[static_cast<std::size_t>(k)]);
  }
  return out;
}

}  // namespace

TEST(Normal, CriticalValueAndQuantile) {
  EXPECT_NEAR(critical_value(0.95), 1.959963984540054, 1e-14);
  EXPECT_NEAR(critical_value(0.90), 1.6448536269514722, 1e-14);
  for (double p : {1e-12, 1e-6, 0.01, 0.2, 0.5, 0.7, 0.975, 1 - 1e-9}) {
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-14 * std::max(1.0, p / (1 - p)) + 1e-15);
  }
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_THROW(critical_value(1.0), Error);
}

TEST(Conventional, ConcentratedHandValues) {
  const FitResult fit = concentrated_fit();
  const InferenceResult robust = se_conventional(fit, 0.95);
  EXPECT_NEAR(*robust.se, std::sqrt(0.75) / 4.0, 1e-15);
  const std::vector<std::string> sector_of{"s1", "s1", "s2", "s2"};
  const InferenceResult cl = se_conventional(fit, 0.95, sector_of);
  EXPECT_NEAR(*cl.se, std::sqrt(0.5) / 4.0, 1e-15);
  EXPECT_EQ(cl.method, Method::cluster);
  const double z = critical_value(0.95);
  EXPECT_DOUBLE_EQ(robust.ci.lo, 1.25 - z * *robust.se);
  EXPECT_NEAR(robust.ci.effective_se, *robust.se, 1e-15);
}

TEST(Conventional, ZeroResidualsAndClusterErrors) {
  FitResult fit = concentrated_fit();
  fit.residuals.setZero();
  EXPECT_EQ(*se_conventional(fit, 0.95).se, 0.0);
  EXPECT_THROW(se_conventional(fit, 0.95, std::vector<std::string>(4, "one")), ClusterError);
  EXPECT_THROW(se_conventional(fit, 0.95, std::vector<std::string>(3, "one")), DimensionError);
}

TEST(Conventional, MatchesBruteForceSandwich) {
  RngStream rng(50, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 20 + static_cast<Index>(rng.uniform() * 20);
    const SharesMatrix shares = fixtures::random_dense(n, 5, 0.8, rng);
    Design d;
    d.y1 = fixtures::normals(n, rng);
    d.z = fixtures::with_intercept(fixtures::normals(n, 1, rng));
    const Shifters x{fixtures::normals(5, rng)};
    const FitResult fit = ols_fit(d, shares, x);
    const Vector u = fit.x_dotdot.cwiseProduct(fit.residuals);
    EXPECT_NEAR(*se_conventional(fit, 0.95).se, oracle::sandwich_se(u, fit.denominator), 1e-12);
    std::vector<std::string> g;
    for (Index i = 0; i < n; ++i) g.push_back("g" + std::to_string(i % 6));
    EXPECT_NEAR(*se_conventional(fit, 0.95, g).se, oracle::sandwich_se(u, fit.denominator, g), 1e-12);
    const double hc1 = *se_conventional(fit, 0.95, std::nullopt, true).se;
    EXPECT_NEAR(hc1, *se_conventional(fit, 0.95).se * std::sqrt(double(n) / double(n - 3)), 1e-12);
  }
}

TEST(SectorProjection, IdentityConcentratedAndExactRecovery) {
  RngStream rng(51, 0);
  const Vector v = fixtures::normals(3, rng);
  const SectorProjection id = sector_project(SharesMatrix::from_matrix(Matrix::Identity(3, 3)), v);
  EXPECT_LE((id.x_hat_sector - v).cwiseAbs().maxCoeff(), 1e-14);

  Vector xdd(4);
  xdd << 1.0, 3.0, -2.0, 0.5;
  const SectorProjection conc = sector_project(fixtures::concentrated_2x4(), xdd);
  EXPECT_NEAR(conc.x_hat_sector(0), 2.0, 1e-14);
  EXPECT_NEAR(conc.x_hat_sector(1), -0.75, 1e-14);

  const SharesMatrix shares = fixtures::random_dense(12, 5, 1.0, rng);
  const Vector x = fixtures::normals(5, rng);
  const SectorProjection exact = sector_project(shares, shares.w() * x);
  EXPECT_LE((exact.x_hat_sector - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SectorProjection, Infeasible) {
  Matrix w(2, 3);
  w << 0.2, 0.3, 0.1, 0.1, 0.1, 0.7;
  EXPECT_THROW(sector_project(SharesMatrix::from_matrix(w), Vector::Ones(2)), AkmInfeasible);
  Matrix dup(3, 2);
  dup << 0.5, 0.5, 0.2, 0.2, 0.1, 0.1;
  EXPECT_THROW(sector_project(SharesMatrix::from_matrix(dup), Vector::Ones(3)), AkmInfeasible);
}

TEST(Akm, ConcentratedEqualsSectorCluster) {
  const FitResult fit = concentrated_fit();
  const SharesMatrix shares = fixtures::concentrated_2x4();
  const InferenceResult akm = se_akm(fit, shares, sector_project(shares, fit.x_dotdot), 0.95);
  EXPECT_NEAR(*akm.se, std::sqrt(0.5) / 4.0, 1e-15);
  EXPECT_EQ(akm.sector_r.size(), 2);
}

TEST(Akm, RandomConcentratedDesignsMatchClusterSe) {
  RngStream rng(52, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const Index s = 2 + static_cast<Index>(rng.uniform() * 11);
    const Index n = s + 2 + static_cast<Index>(rng.uniform() * (60 - s - 1));
    const SharesMatrix shares = fixtures::random_concentrated(n, s, rng);
    Design d;
    d.y1 = fixtures::normals(n, rng);
    d.z = Matrix::Zero(n, 0);
    const FitResult fit = ols_fit(d, shares, Shifters{fixtures::normals(s, rng)});
    const double akm = *se_akm(fit, shares, sector_project(shares, fit.x_dotdot), 0.95).se;
    const double cl = *se_conventional(fit, 0.95, labels_of(shares)).se;
    EXPECT_NEAR(akm, cl, 1e-10 * cl);
  }
}

TEST(Akm, MatchesBruteForceIncludingClustersAndWeights) {
  RngStream rng(53, 0);
  for (int rep = 0; rep < 40; ++rep) {
    const Index n = 25;
    const Index s = 6;
    SharesMatrix shares = fixtures::random_dense(n, s, 0.7, rng);
    const std::vector<std::string> clusters{"a", "b", "a", "c", "b", "a"};
    shares = shares.with_sector_cluster(clusters);
    Design d;
    d.y1 = fixtures::normals(n, rng);
    d.z = fixtures::with_intercept(fixtures::normals(n, 1, rng));
    if (rep % 2 == 1) {
      Vector om(n);
      for (Index i = 0; i < n; ++i) om(i) = 0.2 + rng.uniform();
      d.obs_weight = om;
    }
    const FitResult fit = ols_fit(d, shares, Shifters{fixtures::normals(s, rng)});
    const SectorProjection proj = sector_project(shares, fit.x_dotdot, d.obs_weight);
    const Vector xh = oracle::sector_projection(shares.w(), fit.x_dotdot, d.obs_weight);
    EXPECT_LE((proj.x_hat_sector - xh).cwiseAbs().maxCoeff(), 1e-10);
    const double plain = std::sqrt(oracle::akm_meat(shares.w(), xh, fit.residuals, {}, d.obs_weight)) /
                         std::abs(fit.denominator);
    const double clustered =
        std::sqrt(oracle::akm_meat(shares.w(), xh, fit.residuals, clusters, d.obs_weight)) /
        std::abs(fit.denominator);
    EXPECT_NEAR(*se_akm(fit, shares, proj, 0.95, false).se, plain, 1e-10 * plain);
    EXPECT_NEAR(*se_akm(fit, shares, proj, 0.95, true).se, clustered, 1e-10 * clustered);

    const SharesMatrix one = shares.with_sector_cluster(std::vector<std::string>(s, "all"));
    const double all = std::sqrt(oracle::akm_meat(shares.w(), xh, fit.residuals,
                                                  std::vector<std::string>(s, "x"), d.obs_weight)) /
                       std::abs(fit.denominator);
    EXPECT_NEAR(*se_akm(fit, one, proj, 0.95, true).se, all, 1e-10 * all);

    const SharesMatrix singletons = shares.with_sector_cluster(shares.sectors());
    EXPECT_EQ(*se_akm(fit, singletons, proj, 0.95, true).se, *se_akm(fit, shares, proj, 0.95).se);
  }
}

TEST(Akm, ZeroResiduals) {
  FitResult fit = concentrated_fit();
  fit.residuals.setZero();
  const SharesMatrix shares = fixtures::concentrated_2x4();
  EXPECT_EQ(*se_akm(fit, shares, sector_project(shares, fit.x_dotdot), 0.95).se, 0.0);
}

TEST(Akm, ClusteringWithoutMapIsError) {
  const FitResult fit = concentrated_fit();
  const SharesMatrix shares = fixtures::concentrated_2x4();
  EXPECT_THROW(se_akm(fit, shares, sector_project(shares, fit.x_dotdot), 0.95, true), DataError);
}

TEST(Akm, InterceptShiftAndShifterScaleInvariance) {
  RngStream rng(54, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const Index n = 30;
    const SharesMatrix shares = fixtures::random_dense(n, 6, 0.6, rng);
    Design d;
    d.y1 = fixtures::normals(n, rng);
    d.z = fixtures::with_intercept(fixtures::normals(n, 1, rng));
    const Shifters x{fixtures::normals(6, rng)};
    Design shifted = d;
    shifted.y1.array() += 12.5;
    const FitResult a = ols_fit(d, shares, x);
    const FitResult b = ols_fit(shifted, shares, x);
    const SectorProjection pa = sector_project(shares, a.x_dotdot);
    const SectorProjection pb = sector_project(shares, b.x_dotdot);
    EXPECT_NEAR(*se_akm(a, shares, pa, 0.95).se, *se_akm(b, shares, pb, 0.95).se, 1e-10);
    EXPECT_NEAR(*se_conventional(a, 0.95).se, *se_conventional(b, 0.95).se, 1e-10);
    const double ea = infer_akm0(a, shares, pa, 0.95).ci.effective_se;
    const double eb = infer_akm0(b, shares, pb, 0.95).ci.effective_se;
    if (std::isinf(ea)) {
      EXPECT_TRUE(std::isinf(eb));
    } else {
      EXPECT_NEAR(ea, eb, 1e-10);
    }

    const double c = -3.0;
    const FitResult sc = ols_fit(d, shares, Shifters{c * x.values});
    const SectorProjection ps = sector_project(shares, sc.x_dotdot);
    const double t1 = a.beta_hat / *se_akm(a, shares, pa, 0.95).se;
    const double t2 = sc.beta_hat / *se_akm(sc, shares, ps, 0.95).se;
    EXPECT_NEAR(t1, -t2, 1e-9 * std::max(1.0, std::abs(t1)));
    EXPECT_NEAR(a.beta_hat / *se_conventional(a, 0.95).se,
                -sc.beta_hat / *se_conventional(sc, 0.95).se, 1e-9 * std::max(1.0, std::abs(t1)));
    const ConfidenceSet ca = ci_akm0(a, shares, pa, 0.95);
    const ConfidenceSet cs = ci_akm0(sc, shares, ps, 0.95);
    for (int k = 0; k < 50; ++k) {
      const double theta = a.beta_hat + (rng.uniform() - 0.5) * 10.0 * (std::abs(a.beta_hat) + 1.0);
      const double gap = std::min(std::abs(theta - ca.lo), std::abs(theta - ca.hi));
      if (gap < 1e-8 * (std::abs(theta) + 1.0)) continue;
      EXPECT_EQ(ca.contains(theta), cs.contains(theta / c));
    }
  }
}

// ---------------------------------------------------------------------------

TEST(Akm0, TwoSectorIdentityIsNotAnInterval) {
  Design d;
  d.y1 = Vector(2);
  d.y1 << 1.0, 0.0;
  d.z = Matrix::Zero(2, 0);
  Vector x(2);
  x << 1, -1;
  const SharesMatrix shares = SharesMatrix::from_matrix(Matrix::Identity(2, 2));
  const FitResult fit = ols_fit(d, shares, Shifters{x});
  const double z = critical_value(0.95);
  EXPECT_NEAR(4.0 / (z * z) - 2.0, -0.9588, 1e-4);
  const ConfidenceSet ci = ci_akm0(fit, shares, sector_project(shares, fit.x_dotdot), 0.95);
  EXPECT_NE(ci.shape, SetShape::interval);
  EXPECT_TRUE(ci.contains(fit.beta_hat));
  EXPECT_EQ(ci.effective_se, kInf);
}

TEST(Akm0, ExactFitWithPositiveQCollapsesToPoint) {
  RngStream rng(60, 0);
  const Index s = 12;
  Matrix w = Matrix::Zero(2 * s, s);
  for (Index k = 0; k < s; ++k) {
    w(2 * k, k) = 1.0;
    w(2 * k + 1, k) = 1.0;
  }
  const SharesMatrix shares = SharesMatrix::from_matrix(w);
  Vector x(s);
  for (Index k = 0; k < s; ++k) x(k) = 1.0 + 0.1 * rng.uniform();
  Design d;
  d.y1 = 2.5 * (w * x);
  d.z = Matrix::Zero(2 * s, 0);
  const FitResult fit = ols_fit(d, shares, Shifters{x});
  const ConfidenceSet ci = ci_akm0(fit, shares, sector_project(shares, fit.x_dotdot), 0.95);
  ASSERT_EQ(ci.shape, SetShape::interval);
  EXPECT_NEAR(ci.lo, 2.5, 1e-12);
  EXPECT_NEAR(ci.hi, 2.5, 1e-12);
}

TEST(Akm0, IdentityExactFitIsFullLine) {
  Design d;
  d.y1 = Vector(2);
  d.y1 << 3.0, -3.0;
  d.z = Matrix::Zero(2, 0);
  Vector x(2);
  x << 1, -1;
  const SharesMatrix shares = SharesMatrix::from_matrix(Matrix::Identity(2, 2));
  const FitResult fit = ols_fit(d, shares, Shifters{x});
  const InferenceResult r = infer_akm0(fit, shares, sector_project(shares, fit.x_dotdot), 0.95);
  EXPECT_EQ(r.ci.shape, SetShape::full_line);
  EXPECT_DOUBLE_EQ(r.estimate, 3.0);
  EXPECT_FALSE(r.se.has_value());
}

TEST(Akm0, ClosedFormMatchesGridSearch) {
  RngStream rng(61, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const grid::Instance inst = grid::random_instance(rng, 30, 5);
    ConfidenceSet ci;
    const oracle::GridCheck g = grid::check_ols(inst, 0.95, 100000, &ci);
    EXPECT_EQ(g.mismatches, 0u) << "shape " << to_string(ci.shape);
    EXPECT_LE(g.endpoint_steps, 1.0);
  }
}

TEST(Akm0, AlwaysContainsEstimateAndShapesAreConsistent) {
  RngStream rng(62, 0);
  int shapes[3] = {0, 0, 0};
  for (int rep = 0; rep < 300; ++rep) {
    const grid::Instance inst = grid::random_instance(rng, 25, 8);
    const FitResult fit = ols_fit(inst.design, inst.shares, inst.shifters);
    const SectorProjection proj = sector_project(inst.shares, fit.x_dotdot);
    const ConfidenceSet ci = ci_akm0(fit, inst.shares, proj, 0.95);
    EXPECT_TRUE(ci.contains(fit.beta_hat));
    ++shapes[static_cast<int>(ci.shape)];
    if (ci.shape == SetShape::interval) EXPECT_LE(ci.lo, ci.hi);
    if (ci.shape == SetShape::union_of_two_rays) EXPECT_LT(ci.lo, ci.hi);
    // Singleton sector clusters give the same set.
    const SharesMatrix single = inst.shares.with_sector_cluster(inst.shares.sectors());
    const ConfidenceSet cc = ci_akm0(fit, single, proj, 0.95, true);
    EXPECT_EQ(cc.shape, ci.shape);
    EXPECT_EQ(cc.lo, ci.lo);
    EXPECT_EQ(cc.hi, ci.hi);
  }
  EXPECT_GT(shapes[0], 0);
}

TEST(Akm0, LinearCaseGivesHalfLine) {
  const double z = critical_value(0.95);
  Vector a(1);
  a << 1.0;
  Vector b(1);
  b << 1.0 / z;
  const ConfidenceSet ci = solve_null_imposed_set(2.0, 1.0, 0.0, a, b, 0.95);
  ASSERT_EQ(ci.shape, SetShape::interval);
  EXPECT_EQ(ci.lo, -kInf);
  EXPECT_NEAR(ci.hi, 2.0 + z / 2.0, 1e-12);
  EXPECT_EQ(ci.effective_se, kInf);
  EXPECT_TRUE(ci.contains(2.0));
}

TEST(Akm0, DegenerateLinearTermIsFullLine) {
  const ConfidenceSet ci =
      solve_null_imposed_set(1.0, 0.0, 0.0, Vector::Zero(2), Vector::Zero(2), 0.95);
  EXPECT_EQ(ci.shape, SetShape::full_line);
}

TEST(Akm0, ClusteredMatchesGrid) {
  RngStream rng(63, 0);
  for (int rep = 0; rep < 3; ++rep) {
    grid::Instance inst = grid::random_instance(rng, 30, 6);
    std::vector<std::string> cl;
    for (Index s = 0; s < inst.shares.n_sectors(); ++s) cl.push_back("c" + std::to_string(s / 2));
    inst.shares = inst.shares.with_sector_cluster(cl);
    const FitResult fit = ols_fit(inst.design, inst.shares, inst.shifters);
    const ConfidenceSet ci =
        ci_akm0(fit, inst.shares, sector_project(inst.shares, fit.x_dotdot), 0.95, true);
    const Vector x = inst.shares.w() * inst.shifters.values;
    const oracle::Akm0Oracle o(inst.design.y1, x, x, inst.design.z, inst.shares.w(),
                               critical_value(0.95), cl);
    const auto [lo, hi] = grid::grid_range(ci, fit.beta_hat, 4.0 * std::abs(fit.beta_hat) + 1.0);
    const oracle::GridCheck g = oracle::grid_check(
        lo, hi, 20000, [&](double t) { return ci.contains(t); },
        [&](double t) { return o.rejects(t); }, grid::finite_endpoints(ci));
    EXPECT_EQ(g.mismatches, 0u);
  }
}

// ---------------------------------------------------------------------------

TEST(IvInference, AkmAndNullImposedSetMatchOracles) {
  RngStream rng(70, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const Index n = 35;
    const Index s = 6;
    const SharesMatrix shares = fixtures::random_dense(n, s, 0.8, rng);
    const Shifters x{fixtures::normals(s, rng, 2.0)};
    const Vector xx = shares.w() * x.values;
    Design d;
    d.z = fixtures::with_intercept(fixtures::normals(n, 1, rng));
    d.y2 = (0.3 + rng.uniform()) * xx + fixtures::normals(n, rng);
    d.y1 = 1.5 * *d.y2 + shares.w() * fixtures::normals(s, rng) + fixtures::normals(n, rng);
    const FitResult fit = iv_fit(d, shares, x);
    const SectorProjection proj = sector_project(shares, fit.x_dotdot);
    const Vector xh = oracle::sector_projection(shares.w(), fit.x_dotdot);
    const double se = std::sqrt(oracle::akm_meat(shares.w(), xh, fit.residuals)) /
                      std::abs(fit.x_dotdot.dot(*d.y2));
    EXPECT_NEAR(*se_akm(fit, shares, proj, 0.95).se, se, 1e-10 * se);

    const ConfidenceSet ci = ci_akm0(fit, shares, proj, 0.95);
    const ConfidenceSet direct = ci_akm0_iv(d, shares, xx, 0.95);
    EXPECT_EQ(ci.shape, direct.shape);
    if (std::isfinite(ci.lo)) EXPECT_NEAR(ci.lo, direct.lo, 1e-8 * (1 + std::abs(ci.lo)));
    if (std::isfinite(ci.hi)) EXPECT_NEAR(ci.hi, direct.hi, 1e-8 * (1 + std::abs(ci.hi)));

    const oracle::Akm0Oracle o(d.y1, *d.y2, xx, d.z, shares.w(), critical_value(0.95));
    const auto [lo, hi] = grid::grid_range(ci, *fit.alpha_hat, 4.0 * std::abs(*fit.alpha_hat) + 1.0);
    const oracle::GridCheck g = oracle::grid_check(
        lo, hi, 20000, [&](double t) { return ci.contains(t); },
        [&](double t) { return o.rejects(t); }, grid::finite_endpoints(ci));
    EXPECT_EQ(g.mismatches, 0u);
  }
}

TEST(IvInference, NullImposedSetWithoutPointEstimate) {
  const SharesMatrix shares = fixtures::concentrated_2x4();
  Vector x(2);
  x << 1, -1;
  Design d;
  d.y1 = Vector(4);
  d.y1 << 1.0, 0.5, -0.2, 0.3;
  d.y2 = Vector::Ones(4);
  d.z = Matrix::Zero(4, 0);
  EXPECT_THROW(iv_fit(d, shares, Shifters{x}), WeakInstrumentDegenerate);
  const ConfidenceSet ci = ci_akm0_iv(d, shares, shares.w() * x, 0.95);
  EXPECT_NE(ci.shape, SetShape::interval);
}

// ---------------------------------------------------------------------------

TEST(LooInference, CrossTermsMatchQuadrupleLoop) {
  RngStream rng(80, 0);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 3 + static_cast<Index>(rng.uniform() * 8);
    const Index s = 1 + static_cast<Index>(rng.uniform() * 4);
    const SharesMatrix shares = fixtures::random_dense(n, s, 0.7, rng, 0.3);
    Matrix aggw(n, s);
    Matrix local(n, s);
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < s; ++k) {
        aggw(i, k) = 0.05 + rng.uniform();
        local(i, k) = rng.normal();
      }
    }
    const LooInstrument loo = build_loo_instrument(shares, aggw, local);
    const Vector e = fixtures::normals(n, rng);
    const Matrix fast = loo_cross_terms(shares.w(), loo, e);
    const Matrix slow = oracle::loo_cross(shares.w(), aggw, local, e);
    EXPECT_LE((fast - slow).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(loo_correction(fast), oracle::loo_correction(slow),
                1e-12 * std::max(1.0, std::abs(oracle::loo_correction(slow))));
  }
}

TEST(LooInference, ZeroMeasurementErrorEqualsAkm) {
  RngStream rng(81, 0);
  const Index n = 30;
  const Index s = 5;
  const SharesMatrix shares = fixtures::random_dense(n, s, 1.0, rng);
  const Vector x = fixtures::normals(s, rng);
  const Matrix local = Matrix::Ones(n, 1) * x.transpose();
  const LooInstrument loo = build_loo_instrument(shares, shares.w(), local);
  Design d;
  d.z = Matrix::Ones(n, 1);
  d.y2 = loo.x_hat_loo + fixtures::normals(n, rng);
  d.y1 = fixtures::normals(n, rng);
  const FitResult fit = iv_fit(make_controls(d), d.y1, *d.y2, loo.x_hat_loo);
  const SectorProjection proj = sector_project(shares, fit.x_dotdot);
  const InferenceResult plain = se_akm(fit, shares, proj, 0.95);
  const InferenceResult corrected = se_akm_loo(fit, shares, proj, loo, 0.95);
  EXPECT_LE(std::abs(*corrected.se - *plain.se), 1e-12 * *plain.se);
  EXPECT_EQ(*corrected.se_uncorrected, *plain.se);
  EXPECT_EQ(corrected.method, Method::akm_loo);
}

TEST(LooInference, RequiresIvFit) {
  const FitResult fit = concentrated_fit();
  const SharesMatrix shares = fixtures::concentrated_2x4();
  const LooInstrument loo = build_loo_instrument(shares, Matrix::Constant(4, 2, 0.25),
                                                 Matrix::Zero(4, 2));
  EXPECT_THROW(se_akm_loo(fit, shares, sector_project(shares, fit.x_dotdot), loo, 0.95),
               DataError);
}

TEST(Warnings, IncompleteSharesWithoutControl) {
  RngStream rng(90, 0);
  const SharesMatrix shares = fixtures::random_dense(20, 4, 1.0, rng, 0.3);
  Design d;
  d.y1 = fixtures::normals(20, rng);
  d.z = Matrix::Ones(20, 1);
  const FitResult fit = ols_fit(d, shares, Shifters{fixtures::normals(4, rng)});
  EXPECT_FALSE(fit.share_sums_controlled);
  const InferenceResult r = se_akm(fit, shares, sector_project(shares, fit.x_dotdot), 0.95);
  ASSERT_EQ(r.warnings.size(), 1u);
  d.z.conservativeResize(20, 2);
  d.z.col(1) = shares.row_sums();
  const FitResult controlled = ols_fit(d, shares, Shifters{fixtures::normals(4, rng)});
  EXPECT_TRUE(controlled.share_sums_controlled);
  EXPECT_TRUE(se_akm(controlled, shares, sector_project(shares, controlled.x_dotdot), 0.95)
                  .warnings.empty());
}
