#include <gtest/gtest.h>

#include <cmath>

#include "certspec/global_opt.hpp"

using namespace certspec;

namespace {

// Sum of plane waves with a known Lipschitz constant sum |a_k| * |w_k|.
struct Waves {
  std::vector<double> a, phase;
  std::vector<std::vector<double>> w;

  double operator()(const Point& x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      double arg = phase[k];
      for (std::size_t d = 0; d < x.size(); ++d) arg += w[k][d] * x[d];
      s += a[k] * std::sin(arg);
    }
    return s;
  }
  double lipschitz() const {
    double g = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      double n2 = 0.0;
      for (double v : w[k]) n2 += v * v;
      g += std::abs(a[k]) * std::sqrt(n2);
    }
    return g;
  }
};

Waves random_waves(Rng& rng, std::size_t dim, double amp) {
  Waves f;
  for (int k = 0; k < 3; ++k) {
    f.a.push_back(rng.uniform(0.2, 1.0) * amp);
    f.phase.push_back(rng.uniform(0, 6.283));
    std::vector<double> w(dim);
    for (auto& v : w) v = rng.uniform(-6, 6) / std::sqrt(static_cast<double>(dim));
    f.w.push_back(w);
  }
  return f;
}

// Uniform mesh with about `total` points, then repeated zooming around the
// best mesh point to resolve the continuous maximum far below the mesh width.
double mesh_oracle(const std::function<double(const Point&)>& f, const ParamBox& box, std::size_t total) {
  const std::size_t p = box.dim();
  const auto per = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(total), 1.0 / static_cast<double>(p))));
  auto scan = [&](const std::vector<double>& lo, const std::vector<double>& hi, std::size_t m, Point& best_x) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(p, 0);
    for (;;) {
      Point x(p);
      for (std::size_t d = 0; d < p; ++d) x[d] = lo[d] + (hi[d] - lo[d]) * static_cast<double>(idx[d]) / static_cast<double>(m - 1);
      const double v = f(x);
      if (v > best) {
        best = v;
        best_x = x;
      }
      std::size_t d = 0;
      while (d < p && ++idx[d] == m) idx[d++] = 0;
      if (d == p) break;
    }
    return best;
  };
  std::vector<double> lo(p), hi(p);
  for (std::size_t d = 0; d < p; ++d) {
    lo[d] = box.lower(d);
    hi[d] = box.upper(d);
  }
  Point x;
  double best = scan(lo, hi, per, x);
  std::vector<double> h(p);
  for (std::size_t d = 0; d < p; ++d) h[d] = (hi[d] - lo[d]) / static_cast<double>(per - 1);
  for (int round = 0; round < 6; ++round) {
    for (std::size_t d = 0; d < p; ++d) {
      lo[d] = std::max(box.lower(d), x[d] - h[d]);
      hi[d] = std::min(box.upper(d), x[d] + h[d]);
      h[d] = (hi[d] - lo[d]) / 20.0;
    }
    best = std::max(best, scan(lo, hi, 21, x));
  }
  return best;
}

ParamBox box1(double lo, double hi) { return ParamBox({lo}, {hi}); }

}  // namespace

TEST(GlobalOpt, ConstantObjectiveTerminatesImmediately) {
  for (std::size_t p = 1; p <= 3; ++p) {
    OptProblem op;
    op.objective = [](const Point&) { return 2.5; };
    op.box = ParamBox(std::vector<double>(p, -1.0), std::vector<double>(p, 2.0));
    OptOutcome r = maximize(op);
    EXPECT_EQ(r.terminated_by, Termination::Gap);
    EXPECT_EQ(r.value, 2.5);
    EXPECT_EQ(r.upper_certificate, 2.5);
    EXPECT_LE(r.evals_used, (std::size_t{1} << p) + 1);
  }
}

TEST(GlobalOpt, ConcaveQuadraticFindsInteriorMaximiser) {
  const Point star{0.3, -0.7};
  OptProblem op;
  op.box = ParamBox({-1.0, -1.0}, {1.0, 1.0});
  op.objective = [&](const Point& x) { return -distance(x, star) * distance(x, star); };
  op.lipschitz_gamma = 2.0 * op.box.diameter();
  op.tol = 1e-4;
  op.max_evals = 2'000'000;
  OptOutcome r = maximize(op);
  ASSERT_EQ(r.terminated_by, Termination::Gap);
  // value >= -tol means |argmax - star|^2 <= tol.
  EXPECT_LE(distance(r.argmax, star), std::sqrt(op.tol) + 1e-12);
  EXPECT_GE(r.upper_certificate, 0.0);
  EXPECT_LE(r.upper_certificate - r.value, op.tol);
}

TEST(GlobalOpt, MultiModalMatchesFineMesh) {
  auto f = [](const Point& x) { return std::sin(5 * x[0]) + 0.5 * std::sin(17 * x[0]); };
  OptProblem op;
  op.objective = f;
  op.box = box1(0, 3);
  op.lipschitz_gamma = 13.5;
  op.tol = 1e-6;
  op.max_evals = 1'000'000;
  OptOutcome r = maximize(op);
  ASSERT_EQ(r.terminated_by, Termination::Gap);
  double oracle = -1e300;
  for (int i = 0; i < 1'000'000; ++i) oracle = std::max(oracle, f({3.0 * i / 999'999.0}));
  EXPECT_NEAR(r.value, oracle, 1e-6);
  EXPECT_GE(r.upper_certificate, oracle);
  EXPECT_EQ(r.value, f(r.argmax));
}

TEST(GlobalOpt, CertificateIsSoundOnRandomLipschitzFunctions) {
  Rng rng(2024);
  for (int t = 0; t < 20; ++t) {
    const std::size_t p = 1 + static_cast<std::size_t>(t % 2);
    Waves w = random_waves(rng, p, p == 1 ? 1.0 : 0.02);
    OptProblem op;
    op.objective = w;
    op.box = ParamBox(std::vector<double>(p, -1.0), std::vector<double>(p, 1.5));
    op.lipschitz_gamma = w.lipschitz();
    op.tol = 1e-6;
    op.max_evals = 4'000'000;
    op.adapt_gamma = false;
    OptOutcome r = maximize(op);
    ASSERT_EQ(r.terminated_by, Termination::Gap) << "function " << t;
    const double oracle = mesh_oracle(w, op.box, 1'000'000);
    EXPECT_GE(r.upper_certificate, oracle) << "function " << t;
    EXPECT_NEAR(r.value, oracle, op.tol) << "function " << t;
    EXPECT_TRUE(op.box.contains(r.argmax));
  }
}

TEST(GlobalOpt, EstimatedGammaStillFindsTheMaximum) {
  auto f = [](const Point& x) { return std::sin(5 * x[0]) + 0.5 * std::sin(17 * x[0]); };
  OptProblem op;
  op.objective = f;
  op.box = box1(0, 3);
  op.tol = 1e-6;
  op.max_evals = 1'000'000;
  OptOutcome r = maximize(op);
  ASSERT_EQ(r.terminated_by, Termination::Gap);
  EXPECT_GT(r.gamma, 0.0);
  double oracle = -1e300;
  for (int i = 0; i < 200'000; ++i) oracle = std::max(oracle, f({3.0 * i / 199'999.0}));
  EXPECT_GE(r.value, oracle - 1e-6);
}

TEST(GlobalOpt, DeterministicAndWithinBudget) {
  Rng rng(5);
  Waves w = random_waves(rng, 2, 1.0);
  OptProblem op;
  op.objective = w;
  op.box = ParamBox({0.0, 0.0}, {2.0, 2.0});
  op.tol = 1e-9;
  op.max_evals = 5001;
  OptOutcome a = maximize(op), b = maximize(op);
  EXPECT_EQ(a.terminated_by, Termination::Budget);
  EXPECT_LE(a.evals_used, op.max_evals);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.argmax, b.argmax);
  EXPECT_EQ(a.evals_used, b.evals_used);
  EXPECT_EQ(a.upper_certificate, b.upper_certificate);
  EXPECT_GE(a.upper_certificate, a.value);
}

TEST(GlobalOpt, RejectsBadSettingsAndNonFiniteObjective) {
  OptProblem op;
  op.objective = [](const Point&) { return 0.0; };
  op.box = ParamBox({0.0, 0.0}, {1.0, 1.0});
  op.max_evals = 4;
  EXPECT_THROW(maximize(op), ConfigError);
  op.max_evals = 100;
  op.tol = 0;
  EXPECT_THROW(maximize(op), ConfigError);
  op.tol = 1e-6;
  op.objective = [](const Point& x) { return x[0] > 0.7 ? std::nan("") : x[0]; };
  EXPECT_THROW(maximize(op), NumericalError);
}

TEST(MeshMaximize, LinearPicksEndpointAndConstantPicksFirstPoint) {
  OptOutcome r = mesh_maximize([](const Point& x) { return x[0]; }, box1(0, 1), 7);
  EXPECT_EQ(r.argmax, Point{1.0});
  EXPECT_EQ(r.terminated_by, Termination::Mesh);
  EXPECT_TRUE(std::isnan(r.upper_certificate));
  OptOutcome c = mesh_maximize([](const Point&) { return 1.0; }, ParamBox({0.0, 2.0}, {1.0, 3.0}), 5);
  EXPECT_EQ(c.argmax, (Point{0.0, 2.0}));
  EXPECT_EQ(c.evals_used, 25u);
  EXPECT_THROW(mesh_maximize([](const Point&) { return 1.0; }, box1(0, 1), 1), ConfigError);
}

TEST(MeshMaximize, ChebyshevMeshBelowTrueMaxAndBelowCertifiedMax) {
  Rng rng(9);
  Waves w = random_waves(rng, 2, 0.1);
  ParamBox box({-1.0, -1.0}, {1.0, 1.0});
  OptOutcome m = mesh_maximize(w, box, 25);
  EXPECT_EQ(m.evals_used, 625u);
  const double oracle = mesh_oracle(w, box, 10'000);
  EXPECT_LE(m.value, oracle + 1e-12);
  OptProblem op;
  op.objective = w;
  op.box = box;
  op.lipschitz_gamma = w.lipschitz();
  op.tol = 1e-6;
  op.max_evals = 4'000'000;
  OptOutcome r = maximize(op);
  ASSERT_EQ(r.terminated_by, Termination::Gap);
  EXPECT_LE(m.value, r.value + op.tol);
}

TEST(MeshMaximize, ChebyshevPointsAreAscendingAndIncludeEndpoints) {
  auto x = chebyshev_points(-2, 4, 25);
  EXPECT_EQ(x.front(), -2.0);
  EXPECT_EQ(x.back(), 4.0);
  for (std::size_t i = 1; i < x.size(); ++i) EXPECT_LT(x[i - 1], x[i]);
  EXPECT_NEAR(x[12], 1.0, 1e-14);
}

TEST(GlobalOpt, FallsBackToMeshAboveFourParameters) {
  std::vector<std::string> msgs;
  ScopedWarningSink sink([&](const std::string& m) { msgs.push_back(m); });
  OptProblem op;
  op.objective = [](const Point& x) { return -x[0] * x[0]; };
  op.box = ParamBox(std::vector<double>(5, -1.0), std::vector<double>(5, 1.0));
  op.max_evals = 300;
  OptOutcome r = maximize(op);
  EXPECT_EQ(r.terminated_by, Termination::Mesh);
  EXPECT_LE(r.evals_used, op.max_evals);
  EXPECT_EQ(msgs.size(), 1u);
}
