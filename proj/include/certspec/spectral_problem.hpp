#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "certspec/affine_operator.hpp"
#include "certspec/diag.hpp"
#include "certspec/eig_core.hpp"

namespace certspec {

/// Hermitian: the target is A(mu) itself. Normal: the target is A(mu)^* A(mu),
/// whose eigendata come from singular triplets of A(mu).
enum class ProblemKind { Hermitian, Normal };

/// How many eigenvectors to take at a new sample point.
struct EllPolicy {
  bool dynamic = true;
  Eigen::Index fixed = 1;
  double gap_threshold = 1e-7;
  Eigen::Index ell_max = 32;
};

/// Eigendata of the target at one sample point.
template <typename Scalar>
struct SamplePointData {
  Point mu;
  RealVec lambdas;           // lambda_1 <= ... <= lambda_ell
  double lambda_next = 0.0;  // lambda_{ell+1}
  Mat<Scalar> vectors;       // n x ell (right singular vectors for Normal)
  Mat<Scalar> left;          // Normal only: left singular vectors
  RealVec sigmas;            // Normal only: sigma_1..sigma_ell
  double sigma_next = 0.0;   // Normal only
  Eigen::Index ell = 0;
  bool ell_capped = false;
};

template <typename Scalar>
class SpectralProblem {
 public:
  using Ptr = std::shared_ptr<const SpectralProblem>;

  static Ptr hermitian(AffineOperator<Scalar> op, EigSettings s = {}) {
    if (!op.hermitian()) throw ConfigError("eigenvalue problem requires Hermitian term matrices");
    auto p = std::shared_ptr<SpectralProblem>(new SpectralProblem());
    p->kind_ = ProblemKind::Hermitian;
    p->base_ = std::move(op);
    p->settings_ = s;
    p->compute_term_bounds(p->base_);
    return p;
  }

  static Ptr normal(AffineOperator<Scalar> op, EigSettings s = {}) {
    auto p = std::shared_ptr<SpectralProblem>(new SpectralProblem());
    p->kind_ = ProblemKind::Normal;
    p->base_ = std::move(op);
    p->normal_ = std::make_unique<AffineOperator<Scalar>>(normal_operator(p->base_));
    p->settings_ = s;
    p->compute_term_bounds(*p->normal_);
    return p;
  }

  ProblemKind kind() const { return kind_; }
  const AffineOperator<Scalar>& base() const { return base_; }
  const AffineOperator<Scalar>& target() const { return kind_ == ProblemKind::Normal ? *normal_ : base_; }
  const ParamBox& box() const { return base_.box(); }
  const RealVec& term_lo() const { return lo_; }
  const RealVec& term_up() const { return up_; }
  const EigSettings& eig_settings() const { return settings_; }
  Eigen::Index n() const { return base_.n(); }

  /// Coefficients of the target's affine expansion (the LP objective).
  RealVec lp_theta(const Point& mu) const { return target().theta(mu); }

  /// Upper estimate of ||target(mu)||_2 from the term spectral bounds.
  double target_norm_estimate(const RealVec& th) const {
    double s = 0.0;
    for (Eigen::Index m = 0; m < th.size(); ++m) s += std::abs(th(m)) * std::max(std::abs(lo_(m)), std::abs(up_(m)));
    return s;
  }

  bool dense_path() const {
    return base_.n() <= settings_.dense_max_n || base_.density() > settings_.dense_min_density;
  }

  /// The q smallest eigenpairs of the target at mu (values ascending).
  SamplePointData<Scalar> spectrum_head(const Point& mu, Eigen::Index q) const {
    SamplePointData<Scalar> out;
    out.mu = mu;
    if (kind_ == ProblemKind::Hermitian) {
      EigPairs<Scalar> e = dense_path() ? smallest_eigs_dense(base_.assemble_dense(mu), q)
                                        : smallest_eigs_shift_invert(base_.assemble_sparse(mu), q, settings_);
      out.lambdas = e.values;
      out.vectors = std::move(e.vectors);
    } else {
      SvdTriplets<Scalar> t = dense_path() ? smallest_svds_dense(base_.assemble_dense(mu), q)
                                           : smallest_svds(base_.assemble_sparse(mu), q, settings_);
      out.sigmas = t.values;
      out.lambdas = t.values.array().square().matrix();
      out.vectors = std::move(t.right);
      out.left = std::move(t.left);
    }
    return out;
  }

 private:
  SpectralProblem() = default;

  void compute_term_bounds(const AffineOperator<Scalar>& t) {
    const auto k = static_cast<Eigen::Index>(t.kappa());
    lo_.resize(k);
    up_.resize(k);
    for (Eigen::Index m = 0; m < k; ++m) {
      const auto& tm = t.term(static_cast<std::size_t>(m)).matrix;
      auto [a, b] = tm.is_dense() ? extreme_eigs(tm.dense_ref()) : extreme_eigs(tm.sparse_ref(), settings_);
      lo_(m) = a;
      up_(m) = b;
    }
  }

  ProblemKind kind_ = ProblemKind::Hermitian;
  AffineOperator<Scalar> base_;
  std::unique_ptr<AffineOperator<Scalar>> normal_;
  EigSettings settings_;
  RealVec lo_, up_;
};

/// Eigendata at mu with the number of vectors chosen by the policy: the
/// smallest ell with lambda_{ell+1} - lambda_1 > gap_threshold, capped.
template <typename Scalar>
SamplePointData<Scalar> choose_ell(const SpectralProblem<Scalar>& prob, const Point& mu, const EllPolicy& pol = {}) {
  if (pol.gap_threshold <= 0) throw ConfigError("gap threshold must be positive");
  const Eigen::Index n = prob.n();
  auto finish = [&](SamplePointData<Scalar> head, Eigen::Index ell) {
    SamplePointData<Scalar> s;
    s.mu = head.mu;
    s.ell = ell;
    s.lambdas = head.lambdas.head(ell);
    s.lambda_next = head.lambdas.size() > ell ? head.lambdas(ell) : head.lambdas(ell - 1);
    s.vectors = head.vectors.leftCols(ell);
    if (prob.kind() == ProblemKind::Normal) {
      s.sigmas = head.sigmas.head(ell);
      s.sigma_next = head.sigmas.size() > ell ? head.sigmas(ell) : head.sigmas(ell - 1);
      s.left = head.left.leftCols(ell);
    }
    return s;
  };
  if (n == 1) return finish(prob.spectrum_head(mu, 1), 1);
  const Eigen::Index cap = std::max<Eigen::Index>(1, std::min(pol.ell_max, n - 1));
  if (!pol.dynamic) {
    const Eigen::Index ell = std::clamp<Eigen::Index>(pol.fixed, 1, cap);
    return finish(prob.spectrum_head(mu, ell + 1), ell);
  }
  Eigen::Index q = prob.dense_path() ? cap + 1 : std::min<Eigen::Index>(cap + 1, 8);
  for (;;) {
    SamplePointData<Scalar> head = prob.spectrum_head(mu, q);
    for (Eigen::Index ell = 1; ell < q; ++ell) {
      if (head.lambdas(ell) - head.lambdas(0) > pol.gap_threshold) return finish(std::move(head), ell);
    }
    if (q >= cap + 1) {
      warn("spectral gap below threshold for all ell <= " + std::to_string(cap) + "; accepting ell = " +
           std::to_string(cap));
      auto s = finish(std::move(head), cap);
      s.ell_capped = true;
      return s;
    }
    q = std::min(2 * q, cap + 1);
  }
}

}  // namespace certspec
