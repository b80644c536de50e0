#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "certspec/rng.hpp"
#include "certspec/types.hpp"

namespace certspec {

/// q smallest eigenpairs, values ascending, vectors orthonormal columns.
template <typename Scalar>
struct EigPairs {
  RealVec values;
  Mat<Scalar> vectors;
};

/// q smallest singular triplets, ascending; A * right.col(k) = values(k) * left.col(k).
template <typename Scalar>
struct SvdTriplets {
  RealVec values;
  Mat<Scalar> left;
  Mat<Scalar> right;
};

struct EigSettings {
  double tol_dense = 1e-10;
  double tol_iterative = 1e-8;
  Eigen::Index dense_max_n = 1000;
  double dense_min_density = 0.2;
  int krylov_dim = 0;  // 0: chosen from q
  int max_restarts = 300;
  std::uint64_t seed = 12345;
};

namespace detail {

/// Rotates each column so that its first entry of largest modulus is real and positive.
/// Returns the applied unit phases.
template <typename Scalar>
Vec<Scalar> fix_phases(Mat<Scalar>& v) {
  Vec<Scalar> phases(v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double a = std::abs(v(i, j));
      if (a > best_abs * (1.0 + 1e-12)) {
        best_abs = a;
        best = i;
      }
    }
    Scalar ph = Scalar(1);
    if (best_abs > 0) {
      if constexpr (is_complex_v<Scalar>) ph = std::conj(v(best, j)) / best_abs;
      else ph = v(best, j) < 0 ? -1.0 : 1.0;
    }
    v.col(j) *= ph;
    phases(j) = ph;
  }
  return phases;
}

template <typename Scalar>
double hermitian_deviation(const Mat<Scalar>& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

template <typename Scalar>
void require_hermitian(const Mat<Scalar>& a, double rel = 1e-10) {
  if (a.rows() != a.cols()) throw DimensionError("eigensolver needs a square matrix");
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  if (hermitian_deviation(a) > rel * scale) throw DimensionError("matrix is not Hermitian");
}

template <typename Scalar>
Mat<Scalar> random_block(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  Rng rng(seed);
  Mat<Scalar> x(n, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      if constexpr (is_complex_v<Scalar>) x(i, j) = Scalar(rng.normal(), rng.normal());
      else x(i, j) = rng.normal();
    }
  return x;
}

/// Orthogonalizes x against the orthonormal columns of q (two passes).
template <typename Scalar>
void orthogonalize(const Mat<Scalar>& q, Eigen::Index qcols, Vec<Scalar>& x) {
  if (qcols == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    Vec<Scalar> c = q.leftCols(qcols).adjoint() * x;
    x -= q.leftCols(qcols) * c;
  }
}

/// Largest `want` eigenpairs of a Hermitian operator given by its action,
/// by a restarted Krylov (Lanczos-equivalent) method with full
/// reorthogonalization and explicit Rayleigh-Ritz. Values descending.
template <typename Scalar>
EigPairs<Scalar> largest_eigs_operator(const std::function<Mat<Scalar>(const Mat<Scalar>&)>& op, Eigen::Index n,
                                       Eigen::Index want, double tol, const EigSettings& s) {
  const Eigen::Index m = std::min<Eigen::Index>(n, s.krylov_dim > 0 ? s.krylov_dim : std::max<Eigen::Index>(2 * want + 20, 40));
  const Eigen::Index keep = std::min<Eigen::Index>(m - 1, std::max<Eigen::Index>(want + 10, m / 2));
  Mat<Scalar> q(n, m + 1), w(n, m + 1);
  Eigen::Index k = 0;
  Vec<Scalar> next = random_block<Scalar>(n, 1, s.seed).col(0);
  std::uint64_t reseed = s.seed;
  double best_res = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart <= s.max_restarts; ++restart) {
    while (k < m) {
      orthogonalize<Scalar>(q, k, next);
      double nrm = next.norm();
      if (!(nrm > 1e-10)) {
        next = random_block<Scalar>(n, 1, ++reseed).col(0);
        orthogonalize<Scalar>(q, k, next);
        nrm = next.norm();
        if (!(nrm > 1e-10)) break;  // basis spans the whole space
      }
      q.col(k) = next / nrm;
      w.col(k) = op(Mat<Scalar>(q.col(k)));
      next = w.col(k);
      ++k;
    }
    Mat<Scalar> h = q.leftCols(k).adjoint() * w.leftCols(k);
    h = (0.5 * (h + h.adjoint())).eval();
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(h);
    if (es.info() != Eigen::Success) throw SolverError("Rayleigh-Ritz eigensolve failed", best_res);
    // Eigen returns ascending; reverse for largest-first.
    const Eigen::Index kk = k;
    RealVec theta(kk);
    Mat<Scalar> sv(kk, kk);
    for (Eigen::Index j = 0; j < kk; ++j) {
      theta(j) = es.eigenvalues()(kk - 1 - j);
      sv.col(j) = es.eigenvectors().col(kk - 1 - j);
    }
    const Eigen::Index nw = std::min(want, kk);
    const double scale = std::max(std::abs(theta(0)), 1e-300);
    bool converged = true;
    Eigen::Index first_bad = -1;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < nw; ++j) {
      Vec<Scalar> r = w.leftCols(kk) * sv.col(j) - theta(j) * (q.leftCols(kk) * sv.col(j));
      const double rn = r.norm();
      worst = std::max(worst, rn / scale);
      if (rn > tol * scale) {
        converged = false;
        if (first_bad < 0) {
          first_bad = j;
          next = r;
        }
      }
    }
    best_res = std::min(best_res, worst);
    if (converged || kk == n) {
      EigPairs<Scalar> out;
      out.values = theta.head(nw);
      out.vectors = q.leftCols(kk) * sv.leftCols(nw);
      return out;
    }
    // Thick restart: keep the leading Ritz vectors and their images.
    const Eigen::Index kept = std::min(keep, kk);
    Mat<Scalar> qn = q.leftCols(kk) * sv.leftCols(kept);
    Mat<Scalar> wn = w.leftCols(kk) * sv.leftCols(kept);
    q.leftCols(kept) = qn;
    w.leftCols(kept) = wn;
    k = kept;
  }
  throw SolverError("iterative eigensolver did not converge", best_res);
}

template <typename Scalar>
SparseMat<Scalar> to_row_major(const Eigen::SparseMatrix<Scalar>& a) {
  return SparseMat<Scalar>(a);
}

}  // namespace detail

/// Dense Hermitian eigensolve; returns the q smallest pairs.
template <typename Scalar>
EigPairs<Scalar> smallest_eigs_dense(const Mat<Scalar>& a, Eigen::Index q) {
  detail::require_hermitian(a);
  if (q < 0 || q > a.rows()) throw DimensionError("requested more eigenpairs than the dimension");
  Mat<Scalar> h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(h);
  if (es.info() != Eigen::Success) throw SolverError("dense Hermitian eigensolver failed", std::nan(""));
  EigPairs<Scalar> out;
  out.values = es.eigenvalues().head(q);
  out.vectors = es.eigenvectors().leftCols(q);
  detail::fix_phases(out.vectors);
  return out;
}

/// Shift-invert Lanczos for the q smallest eigenpairs of a sparse Hermitian matrix.
/// The shift is placed below the spectrum; the LDL^T inertia confirms that
/// no eigenvalue lies below it.
template <typename Scalar>
EigPairs<Scalar> smallest_eigs_shift_invert(const SparseMat<Scalar>& a_rm, Eigen::Index q, const EigSettings& s = {}) {
  using ColSparse = Eigen::SparseMatrix<Scalar>;
  const Eigen::Index n = a_rm.rows();
  if (a_rm.cols() != n) throw DimensionError("eigensolver needs a square matrix");
  if (q < 1 || q > n) throw DimensionError("requested eigenpair count out of range");
  ColSparse a(a_rm);
  const double anorm = std::max(static_cast<double>(a.norm()), 1e-300);

  // Estimate lambda_min with a short unshifted run.
  std::function<Mat<Scalar>(const Mat<Scalar>&)> neg = [&](const Mat<Scalar>& x) -> Mat<Scalar> { return -(a * x); };
  EigSettings coarse = s;
  coarse.max_restarts = 3;
  double lam_est = 0.0;
  try {
    auto e = detail::largest_eigs_operator<Scalar>(neg, n, 1, 1e-3, coarse);
    lam_est = -e.values(0);
  } catch (const SolverError&) {
    // Gershgorin lower bound.
    lam_est = std::numeric_limits<double>::infinity();
    SparseMat<Scalar> r(a);
    for (Eigen::Index i = 0; i < n; ++i) {
      double diag = 0.0, off = 0.0;
      for (typename SparseMat<Scalar>::InnerIterator it(r, i); it; ++it) {
        if (it.col() == i) diag = real_part(it.value());
        else off += std::abs(it.value());
      }
      lam_est = std::min(lam_est, diag - off);
    }
  }

  double delta = 1e-2 * anorm;
  ColSparse eye(n, n);
  eye.setIdentity();
  for (int attempt = 0; attempt < 60; ++attempt) {
    const double tau = lam_est - delta;
    ColSparse shifted = a - tau * eye;
    Eigen::SimplicialLDLT<ColSparse> ldlt(shifted);
    if (ldlt.info() != Eigen::Success) {
      delta *= 4.0;
      continue;
    }
    const auto& d = ldlt.vectorD();
    bool below = false;
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (real_part(d(i)) <= 0) below = true;
    if (below) {
      delta *= 4.0;
      continue;
    }
    std::function<Mat<Scalar>(const Mat<Scalar>&)> inv = [&](const Mat<Scalar>& x) -> Mat<Scalar> { return ldlt.solve(x); };
    auto big = detail::largest_eigs_operator<Scalar>(inv, n, q, 1e-2 * s.tol_iterative, s);
    EigPairs<Scalar> out;
    out.values.resize(q);
    out.vectors = big.vectors;
    for (Eigen::Index k = 0; k < q; ++k) out.values(k) = tau + 1.0 / big.values(k);
    // Rayleigh quotients with the original matrix sharpen the values.
    for (Eigen::Index k = 0; k < q; ++k) {
      Vec<Scalar> v = out.vectors.col(k);
      out.values(k) = real_part(v.dot(a * v)) / v.squaredNorm();
      const double res = (a * v - out.values(k) * v).norm();
      if (res > s.tol_iterative * anorm) throw SolverError("shift-invert Lanczos residual too large", res / anorm);
    }
    detail::fix_phases(out.vectors);
    return out;
  }
  throw SolverError("could not place a shift below the spectrum", std::nan(""));
}

/// Solver selection by size and density (dense for small or dense inputs).
template <typename Scalar>
EigPairs<Scalar> smallest_eigs(const Mat<Scalar>& a, Eigen::Index q, const EigSettings& = {}) {
  return smallest_eigs_dense(a, q);
}

template <typename Scalar>
EigPairs<Scalar> smallest_eigs(const SparseMat<Scalar>& a, Eigen::Index q, const EigSettings& s = {}) {
  const double density = static_cast<double>(a.nonZeros()) / (static_cast<double>(a.rows()) * static_cast<double>(a.cols()));
  if (a.rows() <= s.dense_max_n || density > s.dense_min_density) return smallest_eigs_dense(Mat<Scalar>(a), q);
  return smallest_eigs_shift_invert(a, q, s);
}

/// (lambda_min, lambda_max) of a Hermitian matrix.
template <typename Scalar>
std::pair<double, double> extreme_eigs(const Mat<Scalar>& a) {
  detail::require_hermitian(a);
  Mat<Scalar> h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("dense Hermitian eigensolver failed", std::nan(""));
  return {es.eigenvalues()(0), es.eigenvalues()(h.rows() - 1)};
}

template <typename Scalar>
std::pair<double, double> extreme_eigs(const SparseMat<Scalar>& a, const EigSettings& s = {}) {
  const double density = static_cast<double>(a.nonZeros()) / (static_cast<double>(a.rows()) * static_cast<double>(a.cols()));
  if (a.rows() <= s.dense_max_n || density > s.dense_min_density) return extreme_eigs(Mat<Scalar>(a));
  const double anorm = std::max(static_cast<double>(a.norm()), 1e-300);
  // Shift-invert on A and -A; Rayleigh quotients lie inside the spectrum, so
  // widening by the residual tolerance makes the interval enclose it.
  SparseMat<Scalar> neg = -a;
  const double lo = smallest_eigs_shift_invert(a, 1, s).values(0);
  const double hi = -smallest_eigs_shift_invert(neg, 1, s).values(0);
  const double pad = s.tol_iterative * anorm;
  return {lo - pad, hi + pad};
}

/// Dense SVD; q smallest triplets, ascending, with consistent phases.
template <typename Scalar>
SvdTriplets<Scalar> smallest_svds_dense(const Mat<Scalar>& a, Eigen::Index q) {
  const Eigen::Index r = std::min(a.rows(), a.cols());
  if (q < 0 || q > r) throw DimensionError("requested more singular triplets than min(rows, cols)");
  Eigen::BDCSVD<Mat<Scalar>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw SolverError("dense SVD failed", std::nan(""));
  SvdTriplets<Scalar> out;
  out.values.resize(q);
  out.left.resize(a.rows(), q);
  out.right.resize(a.cols(), q);
  for (Eigen::Index k = 0; k < q; ++k) {
    out.values(k) = svd.singularValues()(r - 1 - k);
    out.left.col(k) = svd.matrixU().col(r - 1 - k);
    out.right.col(k) = svd.matrixV().col(r - 1 - k);
  }
  Vec<Scalar> ph = detail::fix_phases(out.right);
  for (Eigen::Index k = 0; k < q; ++k) out.left.col(k) *= ph(k);
  return out;
}

/// Sparse path: Lanczos on (A^* A)^{-1} through one sparse LU of A.
template <typename Scalar>
SvdTriplets<Scalar> smallest_svds_sparse(const SparseMat<Scalar>& a_rm, Eigen::Index q, const EigSettings& s = {}) {
  using ColSparse = Eigen::SparseMatrix<Scalar>;
  const Eigen::Index n = a_rm.rows();
  if (a_rm.cols() != n) throw DimensionError("sparse SVD path needs a square matrix");
  ColSparse a(a_rm);
  Eigen::SparseLU<ColSparse> lu;
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success) return smallest_svds_dense(Mat<Scalar>(a), q);
  std::function<Mat<Scalar>(const Mat<Scalar>&)> op = [&](const Mat<Scalar>& x) -> Mat<Scalar> {
    Mat<Scalar> y = lu.adjoint().solve(x);
    return lu.solve(y);
  };
  auto big = detail::largest_eigs_operator<Scalar>(op, n, q, 1e-2 * s.tol_iterative, s);
  SvdTriplets<Scalar> out;
  out.values.resize(q);
  out.right = big.vectors;
  Vec<Scalar> ph = detail::fix_phases(out.right);
  (void)ph;
  out.left.resize(n, q);
  for (Eigen::Index k = 0; k < q; ++k) {
    Vec<Scalar> av = a * out.right.col(k);
    out.values(k) = av.norm();
    out.left.col(k) = out.values(k) > 0 ? Vec<Scalar>(av / out.values(k)) : av;
  }
  return out;
}

template <typename Scalar>
SvdTriplets<Scalar> smallest_svds(const Mat<Scalar>& a, Eigen::Index q, const EigSettings& = {}) {
  return smallest_svds_dense(a, q);
}

template <typename Scalar>
SvdTriplets<Scalar> smallest_svds(const SparseMat<Scalar>& a, Eigen::Index q, const EigSettings& s = {}) {
  const double density = static_cast<double>(a.nonZeros()) / (static_cast<double>(a.rows()) * static_cast<double>(a.cols()));
  if (a.rows() != a.cols() || a.rows() <= s.dense_max_n || density > s.dense_min_density)
    return smallest_svds_dense(Mat<Scalar>(a), q);
  return smallest_svds_sparse(a, q, s);
}

/// Extends the orthonormal basis v by the columns of w (classical Gram-Schmidt,
/// two passes). A column whose remaining norm falls below drop_tol times its
/// original norm is discarded. The first v.cols() columns are returned unchanged.
template <typename Scalar>
Mat<Scalar> orth_extend(const Mat<Scalar>& v, const Mat<Scalar>& w, double drop_tol = 1e-8) {
  if (v.cols() > 0 && v.rows() != w.rows()) throw DimensionError("orth_extend: row counts differ");
  const Eigen::Index n = w.rows();
  Mat<Scalar> out(n, v.cols() + w.cols());
  if (v.cols() > 0) out.leftCols(v.cols()) = v;
  Eigen::Index d = v.cols();
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    Vec<Scalar> x = w.col(j);
    const double orig = x.norm();
    if (!(orig > 0)) continue;
    detail::orthogonalize<Scalar>(out, d, x);
    const double rest = x.norm();
    if (rest < drop_tol * orig) continue;
    out.col(d++) = x / rest;
  }
  return out.leftCols(d);
}

}  // namespace certspec
