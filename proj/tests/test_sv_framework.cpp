#include <gtest/gtest.h>

#include "certspec/generators.hpp"
#include "certspec/sv_framework.hpp"

using namespace certspec;

namespace {

template <typename M>
double sigma_min_dense(const M& a) {
  Eigen::JacobiSVD<M> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

SvState<double> seeded_state(const AffineOperator<double>& op, const std::vector<Point>& pts) {
  SvState<double> s(SpectralProblem<double>::normal(op));
  for (const auto& mu : pts) s.add_point(choose_ell(s.problem(), mu));
  s.refresh();
  return s;
}

}  // namespace

TEST(SvFramework, FullBasesReproduceSigmaMin) {
  auto op = gen::random_general_family(15, 3, 2, 1);
  const RealMat eye = RealMat::Identity(15, 15);
  SvEvaluator<double> ev(op, eye, eye);
  Rng rng(2);
  for (int k = 0; k < 10; ++k) {
    const Point mu{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double s = sigma_min_dense(op.assemble_dense(mu));
    auto e = ev.evaluate(mu);
    EXPECT_NEAR(e.sigma_ub, s, 1e-12 * (1 + s));
    EXPECT_NEAR(e.S, 0.0, 1e-12);
  }
}

TEST(SvFramework, FullLeftBasisMakesSurrogateVanish) {
  auto op = gen::random_general_family(20, 2, 1, 3);
  auto s = seeded_state(op, {{-0.5}, {0.5}});
  SvEvaluator<double> ev(op, s.right(), RealMat::Identity(20, 20).leftCols(s.right().cols()));
  // A rectangular U is rejected; the full identity is square.
  EXPECT_THROW(SvEvaluator<double>(op, s.right(), RealMat::Identity(20, 20)), DimensionError);
  // With U = I the surrogate collapses: ||A V w|| equals sigma_ub.
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const Point mu{rng.uniform(-1, 1)};
    auto [sig, v] = sigma_ub(s, mu);
    const double full = (op.assemble_dense(mu) * v).norm();
    EXPECT_NEAR(full, sig, 1e-12 * (1 + sig));
  }
}

TEST(SvFramework, InterpolatesAndBoundsFromAbove) {
  auto op = gen::random_general_family(40, 3, 1, 5);
  std::vector<Point> pts{{-0.9}, {-0.2}, {0.4}, {0.95}};
  auto s = seeded_state(op, pts);
  EXPECT_EQ(s.right().cols(), s.left().cols());
  const auto& ev = s.current();
  for (const auto& mu : pts) {
    const double sd = sigma_min_dense(op.assemble_dense(mu));
    auto e = ev.evaluate(mu);
    EXPECT_NEAR(e.sigma_ub, sd, 1e-10 * (1 + sd));
    EXPECT_NEAR(e.sigma_vu, sd, 1e-10 * (1 + sd));
    EXPECT_LE(std::abs(e.S_rel), 1e-9);
  }
  Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    const Point mu{rng.uniform(-1, 1)};
    const double sd = sigma_min_dense(op.assemble_dense(mu));
    auto e = ev.evaluate(mu);
    EXPECT_GE(e.sigma_ub, sd - 1e-12 * (1 + sd));
    // sigma^{V,U} is a projection of sigma_ub's residual, never above it.
    EXPECT_LE(e.sigma_vu, e.sigma_ub + 1e-12);
  }
}

TEST(SvFramework, UpperBoundMatchesFirstDerivativeAtSamples) {
  auto op = gen::random_general_family(40, 2, 1, 7);
  auto s = seeded_state(op, {{0.1}});
  const auto& ev = s.current();
  auto gap = [&](double h) {
    const Point mu{0.1 + h};
    return ev.upper_bound(mu) - sigma_min_dense(op.assemble_dense(mu));
  };
  const double g1 = gap(1e-2), g2 = gap(1e-3);
  EXPECT_GE(g1, -1e-12);
  EXPECT_GE(g2, -1e-12);
  // Second-order contact: shrinking h tenfold shrinks the gap ~100x.
  EXPECT_LT(g2, g1 / 40.0);
}

TEST(SvFramework, RightBasisMatchesSigmaOfNormalProblem) {
  auto op = gen::random_general_family(50, 2, 1, 8);
  auto s = seeded_state(op, {{-0.6}, {0.0}, {0.6}});
  // sigma_ub from the two-sided state equals sqrt of the Ritz value on A^T A for the same V.
  auto prob = SpectralProblem<double>::normal(op);
  BoundEvaluator<double> be(prob, s.right(), s.points(), BoundSettings{});
  Rng rng(9);
  for (int k = 0; k < 10; ++k) {
    const Point mu{rng.uniform(-1, 1)};
    const RealMat a = op.assemble_dense(mu);
    const double direct = sigma_min_dense(RealMat(a * s.right()));
    EXPECT_NEAR(s.current().upper_bound(mu), direct, 1e-11 * (1 + direct));
    EXPECT_NEAR(std::sqrt(be.upper_bound(mu)), direct, 1e-8 * (1 + direct));
  }
}

TEST(SvFramework, TwoSidedLoopConvergesOnSurrogate) {
  auto op = gen::random_general_family(60, 2, 1, 10);
  SvConfig cfg;
  cfg.epsilon = 1e-6;
  auto tr = run_sv<double>(SpectralProblem<double>::normal(op), cfg);
  ASSERT_TRUE(tr.converged) << tr.message;
  EXPECT_EQ(tr.right.cols(), tr.left.cols());
  EXPECT_LE(tr.iterations.back().eps_j, cfg.epsilon);
  for (std::size_t k = 1; k < tr.iterations.size(); ++k) EXPECT_GE(tr.iterations[k].dim, tr.iterations[k - 1].dim);
}

TEST(SvFramework, HybridCertifiesRelativeSigmaError) {
  auto op = gen::random_general_family(60, 2, 1, 11);
  HybridConfig cfg;
  cfg.eps_hat = 1e-4;
  auto res = run_hybrid(op, cfg);
  ASSERT_TRUE(res.certified) << res.stage2.message;
  const double bound = 1.0 - std::sqrt(1.0 - 2.0 * cfg.eps_hat);
  EXPECT_NEAR(res.sigma_rel_bound, bound, 1e-15);
  // The stage-1 right basis is kept as the leading block of the stage-2 basis.
  ASSERT_GE(res.stage2.basis.cols(), res.stage1.right.cols());
  EXPECT_LT((res.stage2.basis.leftCols(res.stage1.right.cols()) - res.stage1.right).norm(), 1e-10);
  for (const auto& mu : grid_points(op.box(), 400)) {
    const double sd = sigma_min_dense(op.assemble_dense(mu));
    const double su = res.sigma_upper(mu);
    EXPECT_GE(su, sd - 1e-12 * (1 + sd));
    EXPECT_LE((su - sd) / su, bound);
  }
}

TEST(SvFramework, PseudospectraOfNormalMatrixMatchDistanceToSpectrum) {
  // Diagonal M: six planted eigenvalues inside the region, the rest outside.
  const Eigen::Index n = 60;
  Rng rng(12);
  Vec<Complex> lam(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k < 6) {
      lam(k) = Complex(rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45));
    } else {
      const double r = rng.uniform(0.8, 3.0), t = rng.uniform(0, 2 * std::numbers::pi);
      lam(k) = std::polar(r, t);
    }
  }
  const Mat<Complex> m = lam.asDiagonal();
  const ParamBox region({-0.5, -0.5}, {0.5, 0.5});
  const double eps_hat = 1e-6;
  auto res = pseudospectra_run(m, region, eps_hat);
  ASSERT_TRUE(res.hybrid.certified) << res.hybrid.stage2.message;
  EXPECT_EQ(res.interior_eigenvalues.size(), 6u);
  EXPECT_EQ(res.init_dim, 6);
  for (const auto& mu : grid_points(region, 20)) {
    const Complex z(mu[0], mu[1]);
    double dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) dist = std::min(dist, std::abs(z - lam(k)));
    const double s = res.sigma(mu[0], mu[1]);
    EXPECT_NEAR(s, dist, 1e-8 * dist) << mu[0] << "," << mu[1];
  }
  for (Eigen::Index k = 0; k < 6; ++k) EXPECT_LE(res.sigma(lam(k).real(), lam(k).imag()), 1e-8 * m.norm());
}

TEST(SvFramework, NonnormalEigenvalueSeedsAndCsv) {
  const Eigen::Index n = 80;
  const Mat<Complex> m = gen::black_scholes_matrix(n, 0.1, 0.01, 3);
  const ParamBox region({-0.4, 0.0}, {1.0, 0.5});
  const double eps_hat = 1e-6;
  auto res = pseudospectra_run(m, region, eps_hat);
  ASSERT_TRUE(res.hybrid.certified) << res.hybrid.stage2.message;
  ASSERT_GE(res.interior_eigenvalues.size(), 5u);
  EXPECT_EQ(res.init_dim, res.init_triplets);
  for (const auto& z : res.interior_eigenvalues) EXPECT_LE(res.sigma(z.real(), z.imag()), 1e-8 * m.norm());
  const double bound = 1.0 - std::sqrt(1.0 - 2.0 * eps_hat);
  for (const auto& mu : grid_points(region, 15)) {
    const Mat<Complex> a = m - Complex(mu[0], mu[1]) * Mat<Complex>::Identity(n, n);
    const double sd = sigma_min_dense(a), s = res.sigma(mu[0], mu[1]);
    EXPECT_GE(s, sd - 1e-12 * m.norm());
    EXPECT_LE((s - sd) / s, bound);
  }
  const std::string path = ::testing::TempDir() + "ps.csv";
  write_pseudospectra_csv(res, region, 5, 4, path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "re,im,sigma,resolvent_norm");
  int rows = 0;
  while (std::getline(f, line)) ++rows;
  EXPECT_EQ(rows, 20);
}

TEST(SvFramework, NoInteriorEigenvalueFallsBackToCenter) {
  Mat<Complex> m = Mat<Complex>::Identity(6, 6) * Complex(5.0, 0.0);
  const ParamBox region({-1.0, -1.0}, {1.0, 1.0});
  auto res = pseudospectra_run(m, region, 1e-3);
  EXPECT_TRUE(res.interior_eigenvalues.empty());
  ASSERT_FALSE(res.hybrid.stage1.points.empty());
  EXPECT_EQ(res.hybrid.stage1.points.front(), region.center());
  EXPECT_NEAR(res.sigma(0.0, 0.0), 5.0, 1e-10);
}

TEST(SvFramework, RejectsBadInputs) {
  auto op = gen::random_general_family(10, 2, 1, 14);
  HybridConfig h;
  h.eps_hat = 0.7;
  EXPECT_THROW(run_hybrid(op, h), ConfigError);
  SvConfig c;
  c.epsilon = -1;
  EXPECT_THROW(run_sv<double>(SpectralProblem<double>::normal(op), c), ConfigError);
  EXPECT_THROW(SvState<double>(SpectralProblem<double>::hermitian(gen::random_hermitian_family(10, 2, 1, 1))), ConfigError);
  EXPECT_THROW(pseudospectra_run(Mat<Complex>::Identity(3, 4), ParamBox({-1, -1}, {1, 1}), 1e-3), DimensionError);
}
