#include <gtest/gtest.h>

#include "certspec/eig_framework.hpp"
#include "certspec/generators.hpp"

using namespace certspec;

namespace {

double lambda_min_dense(const RealMat& a) {
  Eigen::SelfAdjointEigenSolver<RealMat> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_relative_error(const RunTrace<double>& tr, const AffineOperator<double>& op, std::size_t points) {
  double worst = 0.0;
  for (const auto& mu : grid_points(op.box(), points)) {
    const double lm = lambda_min_dense(op.assemble_dense(mu));
    const double ub = tr.final_evaluator->upper_bound(mu);
    worst = std::max(worst, (ub - lm) / std::abs(lm));
  }
  return worst;
}

}  // namespace

TEST(EigFramework, ConstantOperatorCertifiesInOneIteration) {
  Rng rng(1);
  RealMat a = gen::wigner(20, rng);
  std::vector<AffineOperator<double>::Term> t;
  t.push_back({ThetaExpr::parse("1", 1), TermMatrix<double>(a, true)});
  AffineOperator<double> op(std::move(t), ParamBox({0.0}, {1.0}));
  FrameworkConfig cfg;
  cfg.epsilon = 1e-8;
  cfg.error_mode = ErrorMode::Absolute;
  auto tr = run(op, cfg);
  EXPECT_TRUE(tr.certified);
  ASSERT_EQ(tr.iterations.size(), 1u);
  EXPECT_LE(tr.iterations[0].eps_j, 1e-9 * (1 + std::abs(lambda_min_dense(a))));
}

TEST(EigFramework, ExpLinearPairCertifiesAndVerifies) {
  auto op = gen::exp_linear_pair(100, 2024);
  FrameworkConfig cfg;
  cfg.epsilon = 1e-8;
  cfg.error_mode = ErrorMode::Relative;
  auto tr = run(op, cfg);
  ASSERT_TRUE(tr.certified) << tr.message;
  EXPECT_LE(tr.basis.cols(), 64);
  EXPECT_LE(max_relative_error(tr, op, 1000), 1e-8);
  // Recorded before expansion; dims never shrink.
  for (std::size_t k = 1; k < tr.iterations.size(); ++k) {
    EXPECT_GE(tr.iterations[k].dim, tr.iterations[k - 1].dim);
    EXPECT_TRUE(std::isfinite(tr.iterations[k].eps_j));
  }
  EXPECT_LE(tr.iterations.back().eps_j, cfg.epsilon);
}

TEST(EigFramework, CertificateHoldsOnTwoParameterFamily) {
  auto op = gen::random_hermitian_family(40, 2, 2, 5);
  FrameworkConfig cfg;
  cfg.epsilon = 1e-5;
  cfg.error_mode = ErrorMode::Absolute;
  auto tr = run(op, cfg);
  ASSERT_TRUE(tr.certified) << tr.message;
  for (const auto& mu : grid_points(op.box(), 32)) {
    const double lm = lambda_min_dense(op.assemble_dense(mu));
    const double ub = tr.final_evaluator->upper_bound(mu);
    EXPECT_GE(ub, lm - 1e-9 * (1 + std::abs(lm)));
    EXPECT_LE(ub - lm, cfg.epsilon);
  }
}

TEST(EigFramework, RunningMaxSurrogateIsNonincreasing) {
  auto op = gen::random_hermitian_family(50, 2, 1, 6);
  FrameworkConfig cfg;
  cfg.epsilon = 1e-10;
  cfg.error_mode = ErrorMode::Absolute;
  cfg.lb_mode = LbMode::RunningMax;
  cfg.opt.method = OptMethod::Mesh;
  cfg.opt.mesh_points = 201;
  cfg.max_outer_iters = 12;
  auto tr = run(op, cfg);
  for (std::size_t k = 1; k < tr.iterations.size(); ++k)
    EXPECT_LE(tr.iterations[k].eps_j, tr.iterations[k - 1].eps_j + 1e-12) << "iteration " << k;
}

TEST(EigFramework, SurrogateInterpolatesAndBoundsTheError) {
  auto op = gen::random_hermitian_family(40, 2, 1, 7);
  auto prob = SpectralProblem<double>::hermitian(op);
  ReductionState<double> s(prob, {});
  for (double x : {-0.8, 0.1, 0.7}) s.add_point(choose_ell(*prob, {x}));
  s.refresh();
  Objective h = surrogate(s, ErrorMode::Absolute);
  for (const auto& p : s.points()) EXPECT_LE(std::abs(h(p.mu)), 1e-8 * (1 + std::abs(p.lambdas(0))));
  Rng rng(8);
  for (int k = 0; k < 100; ++k) {
    const Point mu{rng.uniform(-1, 1)};
    const double lm = lambda_min_dense(op.assemble_dense(mu));
    const double hv = h(mu);
    EXPECT_GE(hv, -1e-9 * (1 + std::abs(lm)));
    EXPECT_GE(hv, s.current().upper_bound(mu) - lm - 1e-9 * (1 + std::abs(lm)));
  }
}

TEST(EigFramework, InterpolationAfterEveryIterationAndNestedBases) {
  auto op = gen::random_hermitian_family(40, 3, 2, 9);
  auto prob = SpectralProblem<double>::hermitian(op);
  FrameworkConfig cfg;
  cfg.epsilon = 1e-7;
  cfg.error_mode = ErrorMode::Absolute;
  cfg.max_outer_iters = 5;
  auto short_run = run<double>(prob, cfg);
  cfg.max_outer_iters = 8;
  auto long_run = run<double>(prob, cfg);
  ASSERT_LE(short_run.basis.cols(), long_run.basis.cols());
  EXPECT_LT((long_run.basis.leftCols(short_run.basis.cols()) - short_run.basis).norm(), 1e-14);
  const auto& fin = *long_run.final_evaluator;
  ReductionState<double> check(prob, {});
  for (std::size_t i = 0; i < fin.point_count(); ++i) {
    check.add_point(choose_ell(*prob, fin.point(i)));
    check.refresh();
    for (std::size_t k = 0; k <= i; ++k) {
      auto ev = check.evaluate(fin.point(k));
      EXPECT_LE(std::abs(ev.H), 1e-8 * (1 + std::abs(ev.lambda_ub)));
    }
  }
}

TEST(EigFramework, GridInitMeshMethodAndLimits) {
  auto op = gen::random_hermitian_family(30, 2, 2, 10);
  FrameworkConfig cfg;
  cfg.init = InitMode::Grid;
  cfg.init_grid = 2;
  cfg.opt.method = OptMethod::Mesh;
  cfg.opt.mesh_points = 9;
  cfg.epsilon = 1e-6;
  cfg.error_mode = ErrorMode::Absolute;
  auto tr = run(op, cfg);
  EXPECT_EQ(tr.status, RunStatus::MeshTolerance);
  EXPECT_FALSE(tr.certified);
  EXPECT_GE(tr.iterations.front().j, 4u);
  EXPECT_TRUE(std::isnan(tr.iterations.front().ucert));

  FrameworkConfig lim;
  lim.epsilon = 1e-14;
  lim.error_mode = ErrorMode::Absolute;
  lim.max_outer_iters = 2;
  auto tl = run(op, lim);
  EXPECT_EQ(tl.status, RunStatus::MaxIterations);
  EXPECT_EQ(tl.iterations.size(), 2u);
  EXPECT_FALSE(tl.certified);
}

// Every mesh point is a sample point, so the surrogate vanishes on the mesh and
// the duplicate guard is never reached: the loop stops on tolerance at once.
TEST(EigFramework, MeshOfStoredPointsStopsOnTolerance) {
  auto op = gen::random_hermitian_family(20, 2, 1, 11);
  FrameworkConfig cfg;
  cfg.init_points = {{-1.0}, {0.0}, {1.0}};
  cfg.opt.method = OptMethod::Mesh;
  cfg.opt.mesh_points = 3;
  cfg.epsilon = 1e-300;
  cfg.error_mode = ErrorMode::Absolute;
  auto tr = run(op, cfg);
  EXPECT_EQ(tr.status, RunStatus::MeshTolerance);
  EXPECT_EQ(tr.iterations.size(), 1u);
  EXPECT_EQ(tr.iterations[0].eps_j, 0.0);
}

TEST(EigFramework, ClusteredSpectrumTakesSixteenVectors) {
  auto op = gen::clustered_family(120, 16, 1e-9, 12);
  FrameworkConfig cfg;
  cfg.epsilon = 1e-6;
  cfg.max_outer_iters = 3;
  auto tr = run(op, cfg);
  EXPECT_EQ(tr.init_ell, 16);
  EXPECT_EQ(tr.iterations.front().dim, 16);
}

TEST(EigFramework, DeterministicTrace) {
  auto op = gen::random_hermitian_family(30, 2, 1, 13);
  FrameworkConfig cfg;
  cfg.epsilon = 1e-8;
  auto a = run(op, cfg), b = run(op, cfg);
  ASSERT_EQ(a.iterations.size(), b.iterations.size());
  for (std::size_t k = 0; k < a.iterations.size(); ++k) {
    EXPECT_EQ(a.iterations[k].eps_j, b.iterations[k].eps_j);
    EXPECT_EQ(a.iterations[k].argmax, b.iterations[k].argmax);
  }
  EXPECT_EQ(a.basis, b.basis);
}

TEST(EigFramework, RejectsInvalidConfig) {
  auto op = gen::random_hermitian_family(10, 2, 1, 14);
  FrameworkConfig cfg;
  cfg.epsilon = 0;
  EXPECT_THROW(run(op, cfg), ConfigError);
  cfg.epsilon = 1e-6;
  cfg.init_points = {{5.0}};
  EXPECT_THROW(run(op, cfg), ConfigError);
  auto nonherm = gen::random_general_family(10, 2, 1, 1);
  EXPECT_THROW(run(nonherm, FrameworkConfig{}), ConfigError);
}
