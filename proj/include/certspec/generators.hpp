#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "certspec/affine_operator.hpp"
#include "certspec/rng.hpp"

namespace certspec::gen {

/// Real symmetric matrix with N(0, 1/n) entries (Wigner scaling, spectrum ~[-2, 2]).
inline RealMat wigner(Eigen::Index n, Rng& rng) {
  RealMat a(n, n);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) a(i, j) = a(j, i) = rng.normal() * s * (i == j ? std::sqrt(2.0) : 1.0);
  return a;
}

/// Random orthogonal matrix (QR of a Gaussian block).
inline RealMat random_orthogonal(Eigen::Index n, Rng& rng) {
  RealMat g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<RealMat> qr(g);
  return qr.householderQ() * RealMat::Identity(n, n);
}

inline RealMat symmetrize(const RealMat& a) { return 0.5 * (a + a.transpose()); }

/// Sparse random symmetric matrix with roughly `density` fill plus a diagonal.
inline SparseMat<double> sparse_symmetric(Eigen::Index n, double density, Rng& rng) {
  std::vector<Eigen::Triplet<double>> t;
  const auto per_col = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(density * static_cast<double>(n) / 2));
  for (Eigen::Index j = 0; j < n; ++j) {
    t.emplace_back(j, j, rng.normal());
    for (Eigen::Index k = 0; k < per_col; ++k) {
      const auto i = static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(n));
      if (i == j) continue;
      const double v = rng.normal() / std::sqrt(density * static_cast<double>(n));
      t.emplace_back(i, j, v);
      t.emplace_back(j, i, v);
    }
  }
  SparseMat<double> a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

/// Random dense Hermitian pair with theta = (exp(mu1), mu1) on [-1, 3]. A_1 is
/// shifted so that lambda_min(A(mu)) >= 0.5*exp(-1) on the whole interval,
/// keeping relative errors well defined.
inline AffineOperator<double> exp_linear_pair(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  RealMat a2 = wigner(n, rng);
  RealMat g = wigner(n, rng);
  const double g2 = a2.cwiseAbs().rowwise().sum().maxCoeff();  // >= ||A_2||
  Eigen::SelfAdjointEigenSolver<RealMat> es(g, Eigen::EigenvaluesOnly);
  const double shift = std::exp(1.0) * (g2 + 0.5) - es.eigenvalues()(0);
  RealMat a1 = g + shift * RealMat::Identity(n, n);
  std::vector<AffineOperator<double>::Term> terms;
  terms.push_back({ThetaExpr::parse("exp(mu1)", 1), TermMatrix<double>(a1, true)});
  terms.push_back({ThetaExpr::parse("mu1", 1), TermMatrix<double>(a2, true)});
  return AffineOperator<double>(std::move(terms), ParamBox({-1.0}, {3.0}));
}

/// Generic random Hermitian affine family: kappa dense terms, p parameters,
/// theta_1 = 1 and theta_m a smooth function of the parameters. For p = 2 the
/// second coefficient mixes both parameters so kappa = 2 is already 2-D.
inline AffineOperator<double> random_hermitian_family(Eigen::Index n, std::size_t kappa, std::size_t p,
                                                      std::uint64_t seed) {
  Rng rng(seed);
  static const char* kThetas1[] = {"1", "mu1", "exp(mu1)", "mu1^2"};
  static const char* kThetas2[] = {"1", "mu1 + 0.5*mu2", "mu2", "mu1*mu2"};
  std::vector<AffineOperator<double>::Term> terms;
  for (std::size_t m = 0; m < kappa; ++m) {
    RealMat a = wigner(n, rng);
    if (m == 0) a += 3.0 * RealMat::Identity(n, n);
    const char* th = p == 1 ? kThetas1[m % 4] : kThetas2[m % 4];
    terms.push_back({ThetaExpr::parse(th, p), TermMatrix<double>(a, true)});
  }
  return AffineOperator<double>(std::move(terms), ParamBox(std::vector<double>(p, -1.0), std::vector<double>(p, 1.0)));
}

/// Sparse Hermitian family: kappa sparse symmetric terms of fill ~`density`,
/// the first shifted by 3I; coefficients as in random_hermitian_family.
inline AffineOperator<double> sparse_hermitian_family(Eigen::Index n, std::size_t kappa, std::size_t p, double density,
                                                      std::uint64_t seed) {
  Rng rng(seed);
  static const char* kThetas1[] = {"1", "mu1", "exp(mu1)", "mu1^2"};
  static const char* kThetas2[] = {"1", "mu1", "mu2", "mu1*mu2"};
  std::vector<AffineOperator<double>::Term> terms;
  for (std::size_t m = 0; m < kappa; ++m) {
    SparseMat<double> a = sparse_symmetric(n, density, rng);
    if (m == 0) {
      SparseMat<double> eye(n, n);
      eye.setIdentity();
      a += 3.0 * eye;
    }
    const char* th = p == 1 ? kThetas1[m % 4] : kThetas2[m % 4];
    terms.push_back({ThetaExpr::parse(th, p), TermMatrix<double>(a, true)});
  }
  return AffineOperator<double>(std::move(terms), ParamBox(std::vector<double>(p, -1.0), std::vector<double>(p, 1.0)));
}

/// A(mu) = Q diag(d0 + mu1 * d1) Q^T with `cluster` near-degenerate smallest
/// eigenvalues at mu1 = 0 (spacing `spread`, below any sensible gap threshold).
inline AffineOperator<double> clustered_family(Eigen::Index n, Eigen::Index cluster, double spread, std::uint64_t seed) {
  Rng rng(seed);
  RealMat q = random_orthogonal(n, rng);
  RealVec d0(n), d1(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    d0(k) = k < cluster ? 1.0 + spread * static_cast<double>(k) : 2.0 + static_cast<double>(k - cluster) / static_cast<double>(n);
    d1(k) = 0.1 * rng.uniform(-1, 1);
  }
  RealMat a0 = symmetrize(q * d0.asDiagonal() * q.transpose());
  RealMat a1 = symmetrize(q * d1.asDiagonal() * q.transpose());
  std::vector<AffineOperator<double>::Term> terms;
  terms.push_back({ThetaExpr::parse("1", 1), TermMatrix<double>(a0, true)});
  terms.push_back({ThetaExpr::parse("mu1", 1), TermMatrix<double>(a1, true)});
  return AffineOperator<double>(std::move(terms), ParamBox({-1.0}, {1.0}));
}

namespace detail {

// A(mu) = (mu1^2 / 2) * A_diff + mu2 * A_conv on x in (0, 1), Dirichlet ends, with
// A_diff = -diffusion * X^2 D_2 and A_conv = I - convection * X D_1 on the unit stencil.
inline AffineOperator<double> black_scholes_terms(Eigen::Index n, std::uint64_t seed, double diffusion, double convection,
                                                  const ParamBox& box) {
  Rng rng(seed);
  const double h = 1.0 / static_cast<double>(n + 1);
  std::vector<Eigen::Triplet<double>> td, tc;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = static_cast<double>(i + 1) * h;
    const double w = diffusion * x * x;
    td.emplace_back(i, i, 2.0 * w * (1.0 + 0.01 * rng.uniform(-1, 1)));
    if (i > 0) td.emplace_back(i, i - 1, -w);
    if (i + 1 < n) td.emplace_back(i, i + 1, -w);
    const double c = convection * x;
    tc.emplace_back(i, i, 1.0 + 0.01 * rng.uniform(-1, 1));
    if (i > 0) tc.emplace_back(i, i - 1, c);
    if (i + 1 < n) tc.emplace_back(i, i + 1, -c);
  }
  SparseMat<double> ad(n, n), ac(n, n);
  ad.setFromTriplets(td.begin(), td.end());
  ac.setFromTriplets(tc.begin(), tc.end());
  std::vector<AffineOperator<double>::Term> terms;
  terms.push_back({ThetaExpr::parse("0.5*mu1^2", 2), TermMatrix<double>(ad, false)});
  terms.push_back({ThetaExpr::parse("mu2", 2), TermMatrix<double>(ac, false)});
  return AffineOperator<double>(std::move(terms), box);
}

}  // namespace detail

/// Black-Scholes-shaped sparse non-Hermitian family over (sigma, r) in
/// [0.05, 0.25] x [1e-3, 2e-2]. Stencil weights are fixed (600 x^2 diffusion,
/// 15 x convection) instead of scaling with 1/h^2, which keeps cond(A) near 1e4
/// for every n. A small seeded diagonal perturbation makes instances distinct.
inline AffineOperator<double> black_scholes(Eigen::Index n, std::uint64_t seed) {
  return detail::black_scholes_terms(n, seed, 600.0, 15.0, ParamBox({0.05, 1e-3}, {0.25, 2e-2}));
}

/// Black-Scholes finite-difference operator with the true mesh scaling
/// (1/h^2 diffusion, 1/(2h) convection) frozen at (sigma, r), as a complex matrix.
inline Mat<Complex> black_scholes_matrix(Eigen::Index n, double sigma, double rate, std::uint64_t seed) {
  const double h = 1.0 / static_cast<double>(n + 1);
  const auto op = detail::black_scholes_terms(n, seed, 1.0 / (h * h), 1.0 / (2.0 * h), ParamBox({0.0, 0.0}, {1.0, 1.0}));
  return op.assemble_dense_theta((RealVec(2) << 0.5 * sigma * sigma, rate).finished()).cast<Complex>();
}

/// Dense non-Hermitian random family: theta = (1, mu1, ...), well conditioned first term.
inline AffineOperator<double> random_general_family(Eigen::Index n, std::size_t kappa, std::size_t p,
                                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AffineOperator<double>::Term> terms;
  for (std::size_t m = 0; m < kappa; ++m) {
    RealMat a(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) a(i, j) = rng.normal() / std::sqrt(static_cast<double>(n));
    if (m == 0) a += 3.0 * RealMat::Identity(n, n);
    const std::string th = m == 0 ? "1" : "mu" + std::to_string(1 + (m - 1) % p);
    terms.push_back({ThetaExpr::parse(th, p), TermMatrix<double>(a, false)});
  }
  return AffineOperator<double>(std::move(terms), ParamBox(std::vector<double>(p, -1.0), std::vector<double>(p, 1.0)));
}

/// Non-normal upper-triangular matrix: random complex eigenvalues in the disc of
/// radius `radius` on the diagonal, unit superdiagonal and a decaying random
/// strict upper part.
inline Mat<Complex> nonnormal_matrix(Eigen::Index n, double radius, std::uint64_t seed) {
  Rng rng(seed);
  Mat<Complex> m = Mat<Complex>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = radius * std::sqrt(rng.uniform());
    const double t = rng.uniform(0, 2 * std::numbers::pi);
    m(i, i) = std::polar(r, t);
    if (i + 1 < n) m(i, i + 1) = 1.0;
    for (Eigen::Index j = i + 2; j < std::min(n, i + 6); ++j)
      m(i, j) = Complex(rng.normal(), rng.normal()) * 0.2 / static_cast<double>(j - i);
  }
  return m;
}

}  // namespace certspec::gen
