#include <gtest/gtest.h>

#include "certspec/eig_core.hpp"
#include "certspec/rng.hpp"

using namespace certspec;

namespace {

RealMat random_symmetric(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  RealMat a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = rng.normal();
  return 0.5 * (a + a.transpose());
}

Mat<Complex> random_hermitian(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Mat<Complex> a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = Complex(rng.normal(), rng.normal());
  return 0.5 * (a + a.adjoint());
}

SparseMat<double> laplacian_1d(Eigen::Index n, double shift) {
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.0 + shift);
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, -1.0);
      t.emplace_back(i + 1, i, -1.0);
    }
  }
  SparseMat<double> a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

}  // namespace

TEST(SmallestEigs, DiagonalExample) {
  RealMat a = RealVec((RealVec(3) << 3, 1, 2).finished()).asDiagonal();
  auto e = smallest_eigs(a, 2);
  EXPECT_NEAR(e.values(0), 1.0, 1e-14);
  EXPECT_NEAR(e.values(1), 2.0, 1e-14);
  EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(e.vectors(2, 1)), 1.0, 1e-14);
}

TEST(SmallestEigs, IdentityGivesUnitVector) {
  auto e = smallest_eigs(RealMat(RealMat::Identity(5, 5)), 1);
  EXPECT_NEAR(e.values(0), 1.0, 1e-15);
  EXPECT_NEAR(e.vectors.col(0).norm(), 1.0, 1e-14);
}

TEST(SmallestEigs, RandomHermitianMatchesFullDecomposition) {
  Mat<Complex> a = random_hermitian(50, 3);
  auto e = smallest_eigs(a, 3);
  Eigen::SelfAdjointEigenSolver<Mat<Complex>> full(a);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(e.values(k), full.eigenvalues()(k), 1e-9);
    EXPECT_LE((a * e.vectors.col(k) - e.values(k) * e.vectors.col(k)).norm(), 1e-10 * a.norm());
  }
  EXPECT_LE((e.vectors.adjoint() * e.vectors - Mat<Complex>::Identity(3, 3)).norm(), 1e-10);
}

TEST(SmallestEigs, SignConventionMakesLargestEntryPositive) {
  RealMat a = random_symmetric(20, 5);
  auto e = smallest_eigs(a, 4);
  for (int k = 0; k < 4; ++k) {
    Eigen::Index idx;
    e.vectors.col(k).cwiseAbs().maxCoeff(&idx);
    EXPECT_GT(e.vectors(idx, k), 0.0);
  }
}

TEST(SmallestEigs, RejectsNonHermitian) {
  RealMat a = RealMat::Zero(3, 3);
  a(0, 1) = 1.0;
  EXPECT_THROW(smallest_eigs(a, 1), DimensionError);
}

TEST(SmallestEigs, ShiftInvertLanczosMatchesAnalyticLaplacian) {
  const Eigen::Index n = 1500;
  SparseMat<double> a = laplacian_1d(n, 0.0);
  EigSettings s;
  auto e = smallest_eigs(a, 4, s);  // n > 1000 and sparse: iterative path
  const double pi = std::acos(-1.0);
  for (int k = 0; k < 4; ++k) {
    const double exact = 2.0 - 2.0 * std::cos(pi * (k + 1) / (n + 1.0));
    EXPECT_NEAR(e.values(k), exact, 1e-8 * 4.0) << k;
    Vec<double> r = a * e.vectors.col(k) - e.values(k) * e.vectors.col(k);
    EXPECT_LE(r.norm(), 1e-8 * 4.0);
  }
  EXPECT_LE((e.vectors.transpose() * e.vectors - RealMat::Identity(4, 4)).norm(), 1e-10);
}

TEST(SmallestEigs, ShiftInvertHandlesIndefiniteMatrix) {
  SparseMat<double> a = laplacian_1d(1200, -1.0);  // spectrum in (-1, 3)
  EigSettings s;
  auto e = smallest_eigs(a, 2, s);
  RealMat dense(a);
  Eigen::SelfAdjointEigenSolver<RealMat> full(dense, Eigen::EigenvaluesOnly);
  EXPECT_NEAR(e.values(0), full.eigenvalues()(0), 1e-8 * 3);
  EXPECT_NEAR(e.values(1), full.eigenvalues()(1), 1e-8 * 3);
}

TEST(ExtremeEigs, Examples) {
  RealMat d = RealVec((RealVec(3) << -1, 0, 5).finished()).asDiagonal();
  auto [lo, hi] = extreme_eigs(d);
  EXPECT_DOUBLE_EQ(lo, -1.0);
  EXPECT_DOUBLE_EQ(hi, 5.0);
  auto [zl, zh] = extreme_eigs(RealMat(RealMat::Zero(4, 4)));
  EXPECT_EQ(zl, 0.0);
  EXPECT_EQ(zh, 0.0);
}

TEST(ExtremeEigs, RandomMatchesOracle) {
  RealMat a = random_symmetric(80, 9);
  auto [lo, hi] = extreme_eigs(a);
  Eigen::SelfAdjointEigenSolver<RealMat> full(a, Eigen::EigenvaluesOnly);
  EXPECT_NEAR(lo, full.eigenvalues()(0), 1e-9);
  EXPECT_NEAR(hi, full.eigenvalues()(79), 1e-9);
}

TEST(ExtremeEigs, SparseLanczosEnclosesSpectrum) {
  const Eigen::Index n = 1300;
  SparseMat<double> a = laplacian_1d(n, 0.0);
  auto [lo, hi] = extreme_eigs(a);
  const double pi = std::acos(-1.0);
  const double lmin = 2.0 - 2.0 * std::cos(pi / (n + 1.0));
  const double lmax = 2.0 - 2.0 * std::cos(pi * n / (n + 1.0));
  EXPECT_LE(lo, lmin + 1e-12);
  EXPECT_GE(hi, lmax - 1e-12);
  EXPECT_NEAR(lo, lmin, 1e-6);
  EXPECT_NEAR(hi, lmax, 1e-6);
}

TEST(SmallestSvds, DiagonalExample) {
  RealMat a = RealVec((RealVec(2) << 2, 0.5).finished()).asDiagonal();
  auto t = smallest_svds(a, 1);
  EXPECT_NEAR(t.values(0), 0.5, 1e-15);
  EXPECT_NEAR(std::abs(t.right(1, 0)), 1.0, 1e-15);
  EXPECT_LE((a * t.right.col(0) - t.values(0) * t.left.col(0)).norm(), 1e-15);
}

TEST(SmallestSvds, RankDeficientGivesZero) {
  RealMat a(3, 3);
  a << 1, 2, 3, 2, 4, 6, 1, 0, 1;
  auto t = smallest_svds(a, 1);
  EXPECT_LE(t.values(0), 1e-10 * a.norm());
}

TEST(SmallestSvds, RandomRectangularMatchesOracle) {
  Rng rng(21);
  RealMat a(40, 30);
  for (Eigen::Index j = 0; j < 30; ++j)
    for (Eigen::Index i = 0; i < 40; ++i) a(i, j) = rng.normal();
  auto t = smallest_svds(a, 2);
  Eigen::JacobiSVD<RealMat> svd(a);
  EXPECT_NEAR(t.values(0), svd.singularValues()(29), 1e-9);
  EXPECT_NEAR(t.values(1), svd.singularValues()(28), 1e-9);
  for (int k = 0; k < 2; ++k) {
    EXPECT_LE((a * t.right.col(k) - t.values(k) * t.left.col(k)).norm(), 1e-10 * a.norm());
    EXPECT_LE((a.transpose() * t.left.col(k) - t.values(k) * t.right.col(k)).norm(), 1e-10 * a.norm());
  }
}

TEST(SmallestSvds, SparseLuPathMatchesDense) {
  const Eigen::Index n = 1100;
  SparseMat<double> a = laplacian_1d(n, 0.01);
  // Make it non-symmetric.
  a.coeffRef(0, 1) = -0.5;
  auto t = smallest_svds(a, 2);
  RealMat dense(a);
  Eigen::BDCSVD<RealMat> svd(dense);
  EXPECT_NEAR(t.values(0), svd.singularValues()(n - 1), 1e-9);
  EXPECT_NEAR(t.values(1), svd.singularValues()(n - 2), 1e-9);
  for (int k = 0; k < 2; ++k) EXPECT_LE((a * t.right.col(k) - t.values(k) * t.left.col(k)).norm(), 1e-12);
}

TEST(SmallestSvds, SquaringIdentity) {
  RealMat a = random_symmetric(30, 4) + 12.0 * RealMat::Identity(30, 30);
  a(0, 5) += 0.3;
  auto t = smallest_svds(a, 1);
  auto e = smallest_eigs(RealMat(a.transpose() * a), 1);
  EXPECT_NEAR(t.values(0) * t.values(0), e.values(0), 1e-8 * e.values(0));
}

TEST(OrthExtend, SpanInsideIsDropped) {
  RealMat v = RealMat::Identity(4, 2);
  RealMat w(4, 1);
  w << 0.3, -0.7, 0, 0;
  RealMat out = orth_extend(v, w);
  EXPECT_EQ(out.cols(), 2);
  EXPECT_EQ(out, v);
}

TEST(OrthExtend, EmptyBasis) {
  RealMat v(3, 0);
  RealMat w = RealMat::Zero(3, 1);
  w(0, 0) = 1.0;
  RealMat out = orth_extend(v, w);
  ASSERT_EQ(out.cols(), 1);
  EXPECT_NEAR(out(0, 0), 1.0, 1e-15);
}

TEST(OrthExtend, HandComputedGramSchmidt) {
  RealMat v = RealMat::Zero(3, 1);
  v(0, 0) = 1.0;
  RealMat w(3, 1);
  w << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0), 0;
  RealMat out = orth_extend(v, w);
  ASSERT_EQ(out.cols(), 2);
  EXPECT_EQ(out.col(0), v.col(0));
  EXPECT_NEAR(std::abs(out(1, 1)), 1.0, 1e-14);
  EXPECT_NEAR(out(0, 1), 0.0, 1e-14);
}

TEST(OrthExtend, OrthonormalExtensionAndIdempotence) {
  Rng rng(2);
  RealMat w(30, 6);
  for (Eigen::Index j = 0; j < 6; ++j)
    for (Eigen::Index i = 0; i < 30; ++i) w(i, j) = rng.normal();
  w.col(4) = w.col(0) - 2 * w.col(1);  // dependent column
  RealMat v(30, 0);
  RealMat once = orth_extend(v, w);
  EXPECT_EQ(once.cols(), 5);
  EXPECT_LE((once.transpose() * once - RealMat::Identity(5, 5)).norm(), 1e-12);
  RealMat twice = orth_extend(once, w);
  EXPECT_EQ(twice, once);
  // Span preserved: projecting w onto the basis reproduces it.
  EXPECT_LE((once * (once.transpose() * w) - w).norm(), 1e-10 * w.norm());
}

TEST(CourantFischer, ProjectedMinimumIsAnUpperBound) {
  RealMat a = random_symmetric(120, 13);
  Rng rng(14);
  RealMat w(120, 7);
  for (Eigen::Index j = 0; j < 7; ++j)
    for (Eigen::Index i = 0; i < 120; ++i) w(i, j) = rng.normal();
  RealMat v = orth_extend(RealMat(120, 0), w);
  const double proj = smallest_eigs(RealMat(v.transpose() * a * v), 1).values(0);
  EXPECT_GE(proj, smallest_eigs(a, 1).values(0));
  // Interpolation: once the exact eigenvector is in the span, equality.
  auto e = smallest_eigs(a, 1);
  RealMat v2 = orth_extend(v, e.vectors);
  const double proj2 = smallest_eigs(RealMat(v2.transpose() * a * v2), 1).values(0);
  EXPECT_NEAR(proj2, e.values(0), 1e-10 * std::abs(e.values(0)));
}
