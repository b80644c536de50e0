#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "certspec/matrix_market.hpp"
#include "certspec/param_box.hpp"
#include "certspec/theta_expr.hpp"
#include "certspec/types.hpp"

namespace certspec {

/// One parameter-independent matrix A_m, stored dense or in compressed rows.
template <typename Scalar>
class TermMatrix {
 public:
  static constexpr double kHermitianTol = 1e-12;

  TermMatrix() = default;

  TermMatrix(Mat<Scalar> dense, bool hermitian) : storage_(std::move(dense)), hermitian_(hermitian) {
    check_shape();
    if (hermitian_) check_hermitian();
  }

  TermMatrix(SparseMat<Scalar> sparse, bool hermitian) : storage_(std::move(sparse)), hermitian_(hermitian) {
    std::get<SparseMat<Scalar>>(storage_).makeCompressed();
    check_shape();
    if (hermitian_) check_hermitian();
  }

  /// Builds from parsed Matrix Market data; symmetric/hermitian files set the flag.
  /// Storage is sparse unless the file is in array layout or dense enough.
  /// `declare_hermitian` marks a general-storage file as Hermitian (checked).
  static TermMatrix from_market(const mm::MarketData& d, bool declare_hermitian = false) {
    const bool herm = declare_hermitian || d.symmetry == mm::Symmetry::Hermitian ||
                      (d.symmetry == mm::Symmetry::Symmetric && d.field == mm::Field::Real);
    const double density =
        static_cast<double>(d.entries.size()) / (static_cast<double>(d.rows) * static_cast<double>(d.cols));
    if (d.layout == mm::Layout::Array || density > 0.2) return TermMatrix(mm::to_dense<Scalar>(d), herm);
    return TermMatrix(mm::to_sparse<Scalar>(d), herm);
  }

  Eigen::Index rows() const {
    return std::visit([](const auto& m) { return static_cast<Eigen::Index>(m.rows()); }, storage_);
  }
  Eigen::Index cols() const {
    return std::visit([](const auto& m) { return static_cast<Eigen::Index>(m.cols()); }, storage_);
  }
  bool hermitian() const { return hermitian_; }
  bool is_dense() const { return std::holds_alternative<Mat<Scalar>>(storage_); }
  const Mat<Scalar>& dense_ref() const { return std::get<Mat<Scalar>>(storage_); }
  const SparseMat<Scalar>& sparse_ref() const { return std::get<SparseMat<Scalar>>(storage_); }

  double density() const {
    if (is_dense()) return 1.0;
    return static_cast<double>(sparse_ref().nonZeros()) / (static_cast<double>(rows()) * static_cast<double>(cols()));
  }

  Mat<Scalar> dense() const {
    if (is_dense()) return dense_ref();
    return Mat<Scalar>(sparse_ref());
  }

  SparseMat<Scalar> sparse() const {
    if (!is_dense()) return sparse_ref();
    return dense_ref().sparseView();
  }

  double frobenius_norm() const {
    return std::visit([](const auto& m) { return static_cast<double>(m.norm()); }, storage_);
  }

  /// A * X for a block of vectors.
  Mat<Scalar> times(const Mat<Scalar>& x) const {
    if (x.rows() != cols()) throw DimensionError("term matrix applied to a block with wrong row count");
    return std::visit([&](const auto& m) -> Mat<Scalar> { return m * x; }, storage_);
  }

  /// A^* X for a block of vectors.
  Mat<Scalar> adjoint_times(const Mat<Scalar>& x) const {
    if (x.rows() != rows()) throw DimensionError("term matrix adjoint applied to a block with wrong row count");
    return std::visit([&](const auto& m) -> Mat<Scalar> { return m.adjoint() * x; }, storage_);
  }

  bool is_hermitian_within_tol() const {
    if (rows() != cols()) return false;
    Mat<Scalar> a = dense();
    double dev = (a - a.adjoint()).cwiseAbs().maxCoeff();
    return dev <= kHermitianTol * std::max(a.norm(), 1e-300);
  }

 private:
  void check_shape() const {
    if (rows() <= 0 || cols() <= 0) throw DimensionError("term matrix must be non-empty");
  }
  void check_hermitian() const {
    if (!is_hermitian_within_tol())
      throw DimensionError("term matrix flagged Hermitian is not Hermitian within tolerance");
  }

  std::variant<Mat<Scalar>, SparseMat<Scalar>> storage_;
  bool hermitian_ = false;
};

/// A(mu) = sum_m theta_m(mu) A_m over a parameter box.
template <typename Scalar>
class AffineOperator {
 public:
  struct Term {
    ThetaExpr theta;
    TermMatrix<Scalar> matrix;
  };

  AffineOperator() = default;

  AffineOperator(std::vector<Term> terms, ParamBox box) : terms_(std::move(terms)), box_(std::move(box)) {
    if (terms_.empty()) throw ConfigError("affine operator needs at least one term");
    rows_ = terms_.front().matrix.rows();
    cols_ = terms_.front().matrix.cols();
    for (const auto& t : terms_) {
      if (t.matrix.rows() != rows_ || t.matrix.cols() != cols_)
        throw DimensionError("all term matrices must share the same dimensions");
      if (t.theta.params() != box_.dim())
        throw ConfigError("coefficient '" + t.theta.to_string() + "' declared for a different parameter count");
    }
  }

  std::size_t kappa() const { return terms_.size(); }
  Eigen::Index n() const { return cols_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  const ParamBox& box() const { return box_; }
  const std::vector<Term>& terms() const { return terms_; }
  const Term& term(std::size_t m) const { return terms_[m]; }

  bool hermitian() const {
    for (const auto& t : terms_)
      if (!t.matrix.hermitian()) return false;
    return true;
  }

  /// theta(mu); throws if mu is outside the box beyond the membership slack.
  RealVec theta(const Point& mu) const {
    if (!box_.contains(mu)) throw DimensionError("parameter point outside the parameter box");
    return theta_unchecked(mu);
  }

  RealVec theta_unchecked(const Point& mu) const {
    if (mu.size() != box_.dim()) throw DimensionError("parameter point has wrong dimension");
    RealVec th(static_cast<Eigen::Index>(kappa()));
    for (std::size_t m = 0; m < kappa(); ++m) {
      th(static_cast<Eigen::Index>(m)) = terms_[m].theta(mu);
      if (!std::isfinite(th(static_cast<Eigen::Index>(m))))
        throw DegenerateCoefficientError("coefficient " + std::to_string(m + 1) + " is not finite at the requested point");
    }
    return th;
  }

  Vec<Scalar> apply(const Point& mu, const Vec<Scalar>& x) const {
    if (x.size() != cols_) throw DimensionError("vector length does not match operator dimension");
    Mat<Scalar> r = apply_block(theta(mu), x);
    return r.col(0);
  }

  Mat<Scalar> apply_block(const RealVec& th, const Mat<Scalar>& x) const {
    Mat<Scalar> y = Mat<Scalar>::Zero(rows_, x.cols());
    for (std::size_t m = 0; m < kappa(); ++m) y += th(static_cast<Eigen::Index>(m)) * terms_[m].matrix.times(x);
    return y;
  }

  Mat<Scalar> assemble_dense(const Point& mu) const { return assemble_dense_theta(theta(mu)); }

  Mat<Scalar> assemble_dense_theta(const RealVec& th) const {
    Mat<Scalar> a = Mat<Scalar>::Zero(rows_, cols_);
    for (std::size_t m = 0; m < kappa(); ++m) {
      const auto& t = terms_[m].matrix;
      const double c = th(static_cast<Eigen::Index>(m));
      if (t.is_dense()) a += c * t.dense_ref();
      else a += c * Mat<Scalar>(t.sparse_ref());
    }
    return a;
  }

  SparseMat<Scalar> assemble_sparse(const Point& mu) const {
    const RealVec th = theta(mu);
    SparseMat<Scalar> a(rows_, cols_);
    for (std::size_t m = 0; m < kappa(); ++m) a += th(static_cast<Eigen::Index>(m)) * terms_[m].matrix.sparse();
    return a;
  }

  /// Largest term density; used to choose dense vs iterative kernels.
  double density() const {
    double d = 0.0;
    for (const auto& t : terms_) d = std::max(d, t.matrix.density());
    return d;
  }

  /// Galerkin projection V^* A_m V for every term (square operators only).
  AffineOperator project(const Mat<Scalar>& v) const {
    if (v.rows() != cols_ || rows_ != cols_) throw DimensionError("projection basis has wrong row count");
    const Eigen::Index d = v.cols();
    if (d > 0) {
      const double orth = (v.adjoint() * v - Mat<Scalar>::Identity(d, d)).norm();
      if (orth > 1e-10) throw NumericalError("projection basis is not orthonormal");
    }
    std::vector<Term> out;
    out.reserve(kappa());
    for (const auto& t : terms_) {
      Mat<Scalar> p = v.adjoint() * t.matrix.times(v);
      if (t.matrix.hermitian()) p = (0.5 * (p + p.adjoint())).eval();
      out.push_back({t.theta, TermMatrix<Scalar>(std::move(p), t.matrix.hermitian())});
    }
    return AffineOperator(std::move(out), box_);
  }

 private:
  std::vector<Term> terms_;
  ParamBox box_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
};

/// Affine expansion of A(mu)^* A(mu): one term theta_a^2 A_a^* A_a per a and
/// one term theta_a theta_b (A_a^* A_b + A_b^* A_a) per pair a < b.
template <typename Scalar>
AffineOperator<Scalar> normal_operator(const AffineOperator<Scalar>& op) {
  using Term = typename AffineOperator<Scalar>::Term;
  std::vector<Term> out;
  const std::size_t k = op.kappa();
  out.reserve(k * (k + 1) / 2);
  auto product = [](const TermMatrix<Scalar>& a, const TermMatrix<Scalar>& b) -> TermMatrix<Scalar> {
    if (a.is_dense() || b.is_dense()) {
      Mat<Scalar> p = a.adjoint_times(b.dense());
      return TermMatrix<Scalar>(Mat<Scalar>(0.5 * (p + p.adjoint())), true);
    }
    SparseMat<Scalar> p = SparseMat<Scalar>(a.sparse_ref().adjoint()) * b.sparse_ref();
    SparseMat<Scalar> h = 0.5 * (p + SparseMat<Scalar>(p.adjoint()));
    h.prune(Scalar(0));
    return TermMatrix<Scalar>(std::move(h), true);
  };
  auto cross = [](const TermMatrix<Scalar>& a, const TermMatrix<Scalar>& b) -> TermMatrix<Scalar> {
    if (a.is_dense() || b.is_dense()) {
      Mat<Scalar> p = a.adjoint_times(b.dense());
      return TermMatrix<Scalar>(Mat<Scalar>(p + p.adjoint()), true);
    }
    SparseMat<Scalar> p = SparseMat<Scalar>(a.sparse_ref().adjoint()) * b.sparse_ref();
    SparseMat<Scalar> h = p + SparseMat<Scalar>(p.adjoint());
    h.prune(Scalar(0));
    return TermMatrix<Scalar>(std::move(h), true);
  };
  for (std::size_t a = 0; a < k; ++a) {
    const auto& ta = op.term(a);
    out.push_back({ThetaExpr::square(ta.theta), product(ta.matrix, ta.matrix)});
    for (std::size_t b = a + 1; b < k; ++b) {
      const auto& tb = op.term(b);
      out.push_back({ThetaExpr::product(ta.theta, tb.theta), cross(ta.matrix, tb.matrix)});
    }
  }
  return AffineOperator<Scalar>(std::move(out), op.box());
}

}  // namespace certspec
