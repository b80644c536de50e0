#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/QR>

#include "certspec/lp.hpp"
#include "certspec/spectral_problem.hpp"

namespace certspec {

/// Which lower bound is reported.
///  Plain: f(eta*).  Scm: the LP value without beta.  SharperMax: max of both.
///  RunningMax: max over all stored iterations of the plain bound.
enum class LbMode { Plain, Scm, SharperMax, RunningMax };

struct BoundSettings {
  Eigen::Index r = 1;  // Ritz vectors in U
  LbMode mode = LbMode::Plain;
  bool rho_zero_machine = false;  // zero rho below eps * ||target(mu)||
  double rho_zero_reldist = 0.0;  // zero rho when min_i |mu - mu_i| / diam is below this
  bool compute_scm = false;       // also report the SCM bound in Plain/RunningMax
  std::size_t history_window = 0; // running-max depth; 0 keeps every iteration
  double lp_feas_tol = 1e-9;
};

/// Ritz data of the reduced problem at one mu.
template <typename Scalar>
struct RitzBlock {
  RealVec values;  // ascending Ritz values lambda_k^V(mu), k <= r
  Mat<Scalar> w;   // d x r coefficient vectors: U = V w
  Mat<Scalar> left;  // Normal: compressed A(mu)V w (left vectors scaled by sigma)
  RealVec sigmas;    // Normal: singular values
};

struct BoundEvaluation {
  Point mu;
  double lambda_ub = 0.0;
  RealVec ritz_values;
  double rho_sq = 0.0;
  bool rho_zeroed = false;
  std::vector<double> betas;
  double eta = 0.0;
  double lambda_lb_plain = 0.0;
  double lambda_lb = 0.0;  // after applying the bound mode
  std::optional<double> lambda_scm;
  double H = 0.0;
  double H_rel = 0.0;  // NaN when the upper bound is too close to zero
  bool lp_fallback = false;
  int lp_active = 0;
  double lp_basis_sigma_min = std::numeric_limits<double>::quiet_NaN();
};

/// f(eta) = min(lambda, eta) - 2 rho^2 / (|lambda - eta| + sqrt(|lambda - eta|^2 + 4 rho^2)).
inline double f_correction(double lambda_ub_1, double eta, double rho_sq) {
  if (rho_sq < 0) throw NumericalError("f_correction called with negative rho^2");
  const double gap = std::abs(lambda_ub_1 - eta);
  const double base = std::min(lambda_ub_1, eta);
  if (gap < 1e-30 && rho_sq < 1e-30) return base;
  return base - 2.0 * rho_sq / (gap + std::sqrt(gap * gap + 4.0 * rho_sq));
}

namespace detail {

template <typename Scalar>
struct ThinQr {
  Mat<Scalar> q;
  Mat<Scalar> r;
};

template <typename Scalar>
ThinQr<Scalar> thin_qr(const Mat<Scalar>& m) {
  Eigen::HouseholderQR<Mat<Scalar>> qr(m);
  const Eigen::Index k = std::min(m.rows(), m.cols());
  ThinQr<Scalar> out;
  out.q = qr.householderQ() * Mat<Scalar>::Identity(m.rows(), k);
  out.r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  return out;
}

inline double spectral_norm_sq(const auto& z) {
  if (z.cols() == 1) return z.squaredNorm();
  using M = std::decay_t<decltype(z.eval())>;
  Eigen::JacobiSVD<M> svd(z.eval());
  const double s = svd.singularValues()(0);
  return s * s;
}

}  // namespace detail

/// Eigen-decomposition of the reduced Hermitian matrix sum_m theta_m P_m.
/// Shared by in-run evaluation and stored-model evaluation so both agree bitwise.
template <typename Scalar>
Eigen::SelfAdjointEigenSolver<Mat<Scalar>> reduced_hermitian_eig(const std::vector<Mat<Scalar>>& p, const RealVec& th) {
  Mat<Scalar> h = Mat<Scalar>::Zero(p.front().rows(), p.front().cols());
  for (std::size_t m = 0; m < p.size(); ++m) h += th(static_cast<Eigen::Index>(m)) * p[m];
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(h);
  if (es.info() != Eigen::Success) throw SolverError("reduced eigensolve failed", std::nan(""));
  return es;
}

/// Thin SVD of the compressed tall matrix sum_m theta_m R_m (singular values descending).
template <typename Scalar>
struct ReducedSingular {
  RealVec sigmas;  // ascending
  Mat<Scalar> w;   // right singular vectors in reduced coordinates
  Mat<Scalar> aw;  // (sum theta_m R_m) w, column norms = sigmas
};

/// The `count` smallest singular values of sum_m theta_m R_m. Right vectors come
/// from the Hermitian Gram eigenproblem; sigma is then recomputed as ||a w||,
/// which keeps absolute accuracy ~eps*||a|| and is never below sigma_min(a).
template <typename Scalar>
ReducedSingular<Scalar> reduced_smallest_sv(const std::vector<Mat<Scalar>>& r, const RealVec& th, Eigen::Index count) {
  Mat<Scalar> a = Mat<Scalar>::Zero(r.front().rows(), r.front().cols());
  for (std::size_t m = 0; m < r.size(); ++m) a += th(static_cast<Eigen::Index>(m)) * r[m];
  Mat<Scalar> g = a.adjoint() * a;
  g = 0.5 * (g + g.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(g);
  if (es.info() != Eigen::Success) throw SolverError("reduced Gram eigensolver failed", std::nan(""));
  ReducedSingular<Scalar> out;
  out.w = es.eigenvectors().leftCols(count);
  out.aw = a * out.w;
  out.sigmas = out.aw.colwise().norm().transpose();
  return out;
}

/// Frozen bound evaluator for one iteration (basis V_j and points mu_1..mu_j).
/// All members are computed at construction; evaluation is read-only.
template <typename Scalar>
class BoundEvaluator {
 public:
  using ProblemPtr = typename SpectralProblem<Scalar>::Ptr;

  BoundEvaluator(ProblemPtr prob, const Mat<Scalar>& v, const std::vector<SamplePointData<Scalar>>& points,
                 const BoundSettings& settings)
      : prob_(std::move(prob)), settings_(settings), d_(v.cols()) {
    if (settings_.r < 1) throw ConfigError("Ritz count r must be at least 1");
    const auto& base = prob_->base();
    const std::size_t kappa = base.kappa();
    r_ = std::min<Eigen::Index>(settings_.r, d_);
    for (const auto& p : points) r_ = std::min(r_, p.ell);
    if (d_ > 0) {
      std::vector<Mat<Scalar>> av;
      av.reserve(kappa);
      for (std::size_t m = 0; m < kappa; ++m) av.push_back(base.term(m).matrix.times(v));
      if (prob_->kind() == ProblemKind::Hermitian) {
        for (std::size_t m = 0; m < kappa; ++m) {
          Mat<Scalar> pm = v.adjoint() * av[m];
          proj_.push_back(0.5 * (pm + pm.adjoint()));
        }
        Mat<Scalar> stack(v.rows(), static_cast<Eigen::Index>(kappa + 1) * d_);
        for (std::size_t m = 0; m < kappa; ++m) stack.middleCols(static_cast<Eigen::Index>(m) * d_, d_) = av[m];
        stack.rightCols(d_) = v;
        auto qr = detail::thin_qr(stack);
        for (std::size_t m = 0; m < kappa; ++m) res_.push_back(qr.r.middleCols(static_cast<Eigen::Index>(m) * d_, d_));
        res_v_ = qr.r.rightCols(d_);
      } else {
        Mat<Scalar> stack(v.rows(), static_cast<Eigen::Index>(kappa) * d_);
        for (std::size_t m = 0; m < kappa; ++m) stack.middleCols(static_cast<Eigen::Index>(m) * d_, d_) = av[m];
        auto qr = detail::thin_qr(stack);
        for (std::size_t m = 0; m < kappa; ++m) comp_.push_back(qr.r.middleCols(static_cast<Eigen::Index>(m) * d_, d_));
        // Second compression for A(mu)^* Q u - sigma V w.
        const Eigen::Index k = qr.q.cols();
        Mat<Scalar> stack2(v.rows(), static_cast<Eigen::Index>(kappa) * k + d_);
        for (std::size_t m = 0; m < kappa; ++m)
          stack2.middleCols(static_cast<Eigen::Index>(m) * k, k) = base.term(m).matrix.adjoint_times(qr.q);
        stack2.rightCols(d_) = v;
        auto qr2 = detail::thin_qr(stack2);
        for (std::size_t m = 0; m < kappa; ++m) res_.push_back(qr2.r.middleCols(static_cast<Eigen::Index>(m) * k, k));
        res_v_ = qr2.r.rightCols(d_);
      }
    }
    for (const auto& p : points) {
      PointInfo info;
      info.mu = p.mu;
      info.theta = prob_->lp_theta(p.mu);
      info.lambdas = p.lambdas;
      info.lambda_next = p.lambda_next;
      if (d_ > 0) info.overlap = p.vectors.adjoint() * v;
      points_.push_back(std::move(info));
    }
  }

  const SpectralProblem<Scalar>& problem() const { return *prob_; }
  const BoundSettings& settings() const { return settings_; }
  Eigen::Index dim() const { return d_; }
  Eigen::Index ritz_count() const { return r_; }
  std::size_t point_count() const { return points_.size(); }
  const Point& point(std::size_t i) const { return points_[i].mu; }
  /// Hermitian: V^* A_m V.  Normal: compressed factors R_m with A_m V = Q R_m.
  const std::vector<Mat<Scalar>>& reduced_terms() const {
    return prob_->kind() == ProblemKind::Hermitian ? proj_ : comp_;
  }

  RitzBlock<Scalar> ritz(const RealVec& th) const {
    if (d_ == 0) throw DimensionError("Ritz block requested on an empty subspace");
    RitzBlock<Scalar> rb;
    if (prob_->kind() == ProblemKind::Hermitian) {
      auto es = reduced_hermitian_eig(proj_, th);
      rb.values = es.eigenvalues().head(r_);
      rb.w = es.eigenvectors().leftCols(r_);
    } else {
      auto sv = reduced_smallest_sv(comp_, th, r_);
      rb.sigmas = sv.sigmas;
      rb.w = std::move(sv.w);
      rb.left = std::move(sv.aw);  // unnormalized: R w, i.e. sigma * left vector
      rb.values = rb.sigmas.array().square().matrix();
    }
    return rb;
  }

  /// Smallest Ritz value only (the upper bound).
  double upper_bound(const Point& mu) const { return ritz(prob_->base().theta(mu)).values(0); }

  /// ||target(mu) U - U Lambda||_2^2, evaluated in the compressed coordinates.
  double rho_squared(const RealVec& th, const RitzBlock<Scalar>& rb) const {
    Mat<Scalar> z;
    if (prob_->kind() == ProblemKind::Hermitian) {
      z = -res_v_ * rb.w * rb.values.asDiagonal();
      for (std::size_t m = 0; m < res_.size(); ++m) z += th(static_cast<Eigen::Index>(m)) * (res_[m] * rb.w);
    } else {
      z = -res_v_ * rb.w * rb.sigmas.asDiagonal();
      z = z * rb.sigmas.asDiagonal();
      for (std::size_t m = 0; m < res_.size(); ++m) z += th(static_cast<Eigen::Index>(m)) * (res_[m] * rb.left);
    }
    return detail::spectral_norm_sq(z);
  }

  /// beta^(i) = lambda_min((Lambda - lambda_1) - B B^* (Lambda - lambda_next)), B = V^(i)^* U,
  /// through the Hermitian similar matrix (Lambda - lambda_1) + D^{1/2} B B^* D^{1/2}.
  double beta(std::size_t i, const RitzBlock<Scalar>& rb) const {
    const PointInfo& p = points_[i];
    const Mat<Scalar> b = p.overlap * rb.w;
    const Eigen::Index ell = p.lambdas.size();
    const double l1 = p.lambdas(0);
    RealVec dsq(ell);
    for (Eigen::Index k = 0; k < ell; ++k) dsq(k) = std::sqrt(std::max(0.0, p.lambda_next - p.lambdas(k)));
    double beta = 0.0;
    if (ell == 1) {
      beta = dsq(0) * dsq(0) * b.squaredNorm();
    } else {
      Mat<Scalar> db = dsq.asDiagonal() * b;
      Mat<Scalar> m = db * db.adjoint();
      for (Eigen::Index k = 0; k < ell; ++k) m(k, k) += p.lambdas(k) - l1;
      Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(m, Eigen::EigenvaluesOnly);
      beta = es.eigenvalues()(0);
    }
    return std::max(beta, 0.0);
  }

  /// eta* = min theta(mu)^T y over the box and the half-spaces
  /// theta(mu_i)^T y >= lambda_1^(i) + beta_i (beta omitted when empty).
  LpResult eta(const RealVec& th_lp, const std::vector<double>& betas, bool diagnostics = false) const {
    const auto t0 = std::chrono::steady_clock::now();
    BoxLp lp;
    lp.c = th_lp;
    lp.lo = prob_->term_lo();
    lp.up = prob_->term_up();
    const auto m = static_cast<Eigen::Index>(points_.size());
    lp.a.resize(m, th_lp.size());
    lp.b.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& p = points_[static_cast<std::size_t>(i)];
      lp.a.row(i) = p.theta.transpose();
      lp.b(i) = p.lambdas(0) + (betas.empty() ? 0.0 : betas[static_cast<std::size_t>(i)]);
    }
    LpResult res = solve_box_lp(lp, settings_.lp_feas_tol);
    if (diagnostics) select_basis(lp, res);
    lp_ns_ += std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
    ++lp_calls_;
    return res;
  }

  /// Box-only bound sum_m min(theta_m lo_m, theta_m up_m).
  double box_bound(const RealVec& th_lp) const {
    double s = 0.0;
    for (Eigen::Index m = 0; m < th_lp.size(); ++m)
      s += std::min(th_lp(m) * prob_->term_lo()(m), th_lp(m) * prob_->term_up()(m));
    return s;
  }

  double min_relative_distance(const Point& mu) const {
    double best = std::numeric_limits<double>::infinity();
    const double diam = std::max(prob_->box().diameter(), 1e-300);
    for (const auto& p : points_) best = std::min(best, distance(mu, p.mu) / diam);
    return best;
  }

  /// Plain (and optionally SCM) bounds at mu; lambda_lb is left equal to the plain bound.
  BoundEvaluation evaluate(const Point& mu, bool want_scm, bool diagnostics = false) const {
    BoundEvaluation ev;
    ev.mu = mu;
    const RealVec th = prob_->base().theta(mu);
    const RealVec th_lp = prob_->kind() == ProblemKind::Hermitian ? th : prob_->lp_theta(mu);
    if (d_ == 0) {
      ev.lambda_ub = std::numeric_limits<double>::infinity();
      ev.eta = box_bound(th_lp);
      ev.lambda_lb_plain = ev.lambda_lb = ev.eta;
      if (want_scm) ev.lambda_scm = ev.eta;
      ev.H = ev.H_rel = std::numeric_limits<double>::infinity();
      return ev;
    }
    const RitzBlock<Scalar> rb = ritz(th);
    ev.lambda_ub = rb.values(0);
    ev.ritz_values = rb.values;
    if (points_.empty()) {
      ev.eta = box_bound(th_lp);
      ev.lambda_lb_plain = ev.lambda_lb = ev.eta;
      if (want_scm) ev.lambda_scm = ev.eta;
      finish(ev);
      return ev;
    }
    ev.rho_sq = rho_squared(th, rb);
    if (settings_.rho_zero_machine &&
        std::sqrt(ev.rho_sq) <= std::numeric_limits<double>::epsilon() * prob_->target_norm_estimate(th_lp)) {
      ev.rho_sq = 0.0;
      ev.rho_zeroed = true;
    }
    if (settings_.rho_zero_reldist > 0 && min_relative_distance(mu) < settings_.rho_zero_reldist) {
      ev.rho_sq = 0.0;
      ev.rho_zeroed = true;
    }
    ev.betas.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) ev.betas[i] = beta(i, rb);
    LpResult lp = eta(th_lp, ev.betas, diagnostics);
    if (lp.status != LpStatus::Optimal) {
      ev.lp_fallback = true;
      warn("lower-bound LP infeasible; falling back to constraints without beta");
      lp = eta(th_lp, {}, diagnostics);
    }
    ev.eta = lp.status == LpStatus::Optimal ? lp.value : box_bound(th_lp);
    ev.lp_active = static_cast<int>(lp.active_constraints.size() + lp.active_lower.size() + lp.active_upper.size());
    ev.lp_basis_sigma_min = lp.basis_sigma_min;
    ev.lambda_lb_plain = f_correction(ev.lambda_ub, ev.eta, ev.rho_sq);
    ev.lambda_lb = ev.lambda_lb_plain;
    if (want_scm) {
      LpResult scm = eta(th_lp, {});
      ev.lambda_scm = scm.status == LpStatus::Optimal ? scm.value : box_bound(th_lp);
    }
    finish(ev);
    return ev;
  }

  double lp_seconds() const { return static_cast<double>(lp_ns_.load()) * 1e-9; }
  long long lp_calls() const { return lp_calls_.load(); }

 private:
  struct PointInfo {
    Point mu;
    RealVec theta;  // lp coefficients at mu_i
    RealVec lambdas;
    double lambda_next = 0.0;
    Mat<Scalar> overlap;  // V^(i)^* V
  };

  static void finish(BoundEvaluation& ev) {
    ev.H = ev.lambda_ub - ev.lambda_lb;
    if (std::abs(ev.lambda_ub) > 1e-30) ev.H_rel = ev.H / std::abs(ev.lambda_ub);
    else ev.H_rel = ev.H <= 0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  }

  ProblemPtr prob_;
  BoundSettings settings_;
  Eigen::Index d_ = 0;
  Eigen::Index r_ = 1;
  std::vector<Mat<Scalar>> proj_;  // Hermitian: V^* A_m V
  std::vector<Mat<Scalar>> comp_;  // Normal: R_m
  std::vector<Mat<Scalar>> res_;   // residual compression blocks
  Mat<Scalar> res_v_;
  std::vector<PointInfo> points_;
  mutable std::atomic<long long> lp_ns_{0};
  mutable std::atomic<long long> lp_calls_{0};
};

/// Iteration state: sample points, basis, and the frozen evaluator of every
/// iteration so far (needed by the running-max bound).
template <typename Scalar>
class ReductionState {
 public:
  using ProblemPtr = typename SpectralProblem<Scalar>::Ptr;
  using EvaluatorPtr = std::shared_ptr<const BoundEvaluator<Scalar>>;

  ReductionState(ProblemPtr prob, BoundSettings settings) : prob_(std::move(prob)), settings_(settings) {
    v_.resize(prob_->n(), 0);
  }

  const SpectralProblem<Scalar>& problem() const { return *prob_; }
  ProblemPtr problem_ptr() const { return prob_; }
  const BoundSettings& settings() const { return settings_; }
  const Mat<Scalar>& basis() const { return v_; }
  const std::vector<SamplePointData<Scalar>>& points() const { return points_; }
  std::size_t j() const { return points_.size(); }

  /// Stores eigendata at a new point and extends the basis with its vectors.
  void add_point(SamplePointData<Scalar> s) {
    v_ = orth_extend(v_, s.vectors);
    points_.push_back(std::move(s));
  }

  /// Extends the basis without adding a sample point.
  void extend_basis(const Mat<Scalar>& w) { v_ = orth_extend(v_, w); }

  /// Freezes the current basis and points into a new evaluator snapshot.
  const BoundEvaluator<Scalar>& refresh() {
    history_.push_back(std::make_shared<const BoundEvaluator<Scalar>>(prob_, v_, points_, settings_));
    if (settings_.history_window > 0 && history_.size() > settings_.history_window)
      history_.erase(history_.begin(), history_.end() - static_cast<std::ptrdiff_t>(settings_.history_window));
    return *history_.back();
  }

  bool has_evaluator() const { return !history_.empty(); }
  const BoundEvaluator<Scalar>& current() const {
    if (history_.empty()) throw Error("reduction state has no evaluator; call refresh()");
    return *history_.back();
  }
  const std::vector<EvaluatorPtr>& history() const { return history_; }

  /// Full bound record with the configured mode applied.
  BoundEvaluation evaluate(const Point& mu, bool diagnostics = false) const {
    const auto& cur = current();
    const bool want_scm =
        settings_.compute_scm || settings_.mode == LbMode::Scm || settings_.mode == LbMode::SharperMax;
    BoundEvaluation ev = cur.evaluate(mu, want_scm, diagnostics);
    switch (settings_.mode) {
      case LbMode::Plain: break;
      case LbMode::Scm: ev.lambda_lb = *ev.lambda_scm; break;
      case LbMode::SharperMax: ev.lambda_lb = std::max(ev.lambda_lb_plain, *ev.lambda_scm); break;
      case LbMode::RunningMax:
        for (std::size_t k = 0; k + 1 < history_.size(); ++k)
          ev.lambda_lb = std::max(ev.lambda_lb, history_[k]->evaluate(mu, false).lambda_lb_plain);
        break;
    }
    ev.H = ev.lambda_ub - ev.lambda_lb;
    if (std::abs(ev.lambda_ub) > 1e-30) ev.H_rel = ev.H / std::abs(ev.lambda_ub);
    else ev.H_rel = ev.H <= 0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return ev;
  }

 private:
  ProblemPtr prob_;
  BoundSettings settings_;
  Mat<Scalar> v_;
  std::vector<SamplePointData<Scalar>> points_;
  std::vector<EvaluatorPtr> history_;
};

// Free-function interface over the current evaluator of a state.

template <typename Scalar>
RitzBlock<Scalar> ritz_block(const ReductionState<Scalar>& s, const Point& mu) {
  return s.current().ritz(s.problem().base().theta(mu));
}

template <typename Scalar>
double rho_squared(const ReductionState<Scalar>& s, const Point& mu, const RitzBlock<Scalar>& rb) {
  return s.current().rho_squared(s.problem().base().theta(mu), rb);
}

template <typename Scalar>
double beta(const ReductionState<Scalar>& s, std::size_t i, const RitzBlock<Scalar>& rb) {
  if (i >= s.current().point_count()) throw DimensionError("beta: point index out of range");
  return s.current().beta(i, rb);
}

template <typename Scalar>
LpResult eta_star(const ReductionState<Scalar>& s, const Point& mu, const std::vector<double>& betas) {
  return s.current().eta(s.problem().lp_theta(mu), betas, true);
}

template <typename Scalar>
double scm_bound(const ReductionState<Scalar>& s, const Point& mu) {
  const auto& cur = s.current();
  const RealVec th = s.problem().lp_theta(mu);
  if (cur.point_count() == 0) return cur.box_bound(th);
  LpResult r = cur.eta(th, {});
  return r.status == LpStatus::Optimal ? r.value : cur.box_bound(th);
}

template <typename Scalar>
BoundEvaluation evaluate_bounds(const ReductionState<Scalar>& s, const Point& mu) {
  return s.evaluate(mu);
}

}  // namespace certspec
