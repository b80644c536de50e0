#pragma once

#include <chrono>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "certspec/eig_framework.hpp"

namespace certspec {

/// sigma_min of sum_m theta_m R_m; shared by in-run evaluation and reloaded models.
template <typename Scalar>
double reduced_sigma_min(const std::vector<Mat<Scalar>>& r, const RealVec& th) {
  return reduced_smallest_sv(r, th, 1).sigmas(0);
}

struct SvEvaluation {
  Point mu;
  double sigma_ub = 0.0;  // sigma_min(A(mu) V)
  double sigma_vu = 0.0;  // || U^* A(mu) V v_ub ||
  double S = 0.0;
  double S_rel = 0.0;     // NaN when sigma_ub ~ 0 and S > 0
};

/// Frozen two-sided reduced data: A_m V = Q R_m and G_m = U^* A_m V.
template <typename Scalar>
class SvEvaluator {
 public:
  SvEvaluator(const AffineOperator<Scalar>& op, const Mat<Scalar>& v, const Mat<Scalar>& u) : d_(v.cols()) {
    if (u.cols() != v.cols()) throw DimensionError("left and right bases must have equal dimension");
    if (d_ == 0) throw DimensionError("empty reduced basis");
    const std::size_t kappa = op.kappa();
    Mat<Scalar> stack(v.rows(), static_cast<Eigen::Index>(kappa) * d_);
    for (std::size_t m = 0; m < kappa; ++m) {
      Mat<Scalar> av = op.term(m).matrix.times(v);
      g_.push_back(u.adjoint() * av);
      stack.middleCols(static_cast<Eigen::Index>(m) * d_, d_) = av;
    }
    auto qr = detail::thin_qr(stack);
    for (std::size_t m = 0; m < kappa; ++m) comp_.push_back(qr.r.middleCols(static_cast<Eigen::Index>(m) * d_, d_));
    box_ = op.box();
    for (std::size_t m = 0; m < kappa; ++m) theta_.push_back(op.term(m).theta);
  }

  Eigen::Index dim() const { return d_; }
  const std::vector<Mat<Scalar>>& reduced_terms() const { return comp_; }

  RealVec theta(const Point& mu) const {
    RealVec th(static_cast<Eigen::Index>(theta_.size()));
    for (std::size_t m = 0; m < theta_.size(); ++m) th(static_cast<Eigen::Index>(m)) = theta_[m](mu);
    return th;
  }

  /// (sigma_min(A(mu) V), coefficient vector of v_ub in V).
  std::pair<double, Vec<Scalar>> sigma_ub(const RealVec& th) const {
    auto sv = reduced_smallest_sv(comp_, th, 1);
    return {sv.sigmas(0), sv.w.col(0)};
  }

  double sigma_lb_surrogate(const RealVec& th, const Vec<Scalar>& w) const {
    Vec<Scalar> y = Vec<Scalar>::Zero(d_);
    for (std::size_t m = 0; m < g_.size(); ++m) y += th(static_cast<Eigen::Index>(m)) * (g_[m] * w);
    return y.norm();
  }

  double upper_bound(const Point& mu) const { return reduced_sigma_min(comp_, theta(mu)); }

  SvEvaluation evaluate(const Point& mu) const {
    SvEvaluation ev;
    ev.mu = mu;
    const RealVec th = theta(mu);
    auto [s, w] = sigma_ub(th);
    ev.sigma_ub = s;
    ev.sigma_vu = sigma_lb_surrogate(th, w);
    ev.S = ev.sigma_ub - ev.sigma_vu;
    if (ev.sigma_ub > 1e-30) ev.S_rel = ev.S / ev.sigma_ub;
    else ev.S_rel = ev.S <= 0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    return ev;
  }

 private:
  Eigen::Index d_ = 0;
  std::vector<Mat<Scalar>> comp_, g_;
  std::vector<ThetaExpr> theta_;
  ParamBox box_;
};

/// Two-sided greedy state with right basis V and left basis U of equal dimension.
template <typename Scalar>
class SvState {
 public:
  using ProblemPtr = typename SpectralProblem<Scalar>::Ptr;

  explicit SvState(ProblemPtr prob, std::uint64_t seed = 777) : prob_(std::move(prob)), rng_(seed) {
    if (prob_->kind() != ProblemKind::Normal) throw ConfigError("singular-value state needs a normal-kind problem");
    v_.resize(prob_->n(), 0);
    u_.resize(prob_->base().rows(), 0);
  }

  const SpectralProblem<Scalar>& problem() const { return *prob_; }
  const Mat<Scalar>& right() const { return v_; }
  const Mat<Scalar>& left() const { return u_; }
  const std::vector<SamplePointData<Scalar>>& points() const { return points_; }

  /// Adds l right and l left singular vectors, then pads the shorter basis.
  void add_point(SamplePointData<Scalar> s) {
    const Eigen::Index v0 = v_.cols(), u0 = u_.cols();
    v_ = orth_extend(v_, s.vectors);
    u_ = orth_extend(u_, s.left);
    const auto& a = prob_->base();
    // Pad with images of the new vectors, then random vectors as a last resort.
    if (u_.cols() < v_.cols()) {
      Mat<Scalar> cand = a.apply_block(a.theta(s.mu), Mat<Scalar>(v_.middleCols(v0, v_.cols() - v0)));
      pad(u_, v_.cols(), cand);
    } else if (v_.cols() < u_.cols()) {
      Mat<Scalar> cand = adjoint_apply(s.mu, Mat<Scalar>(u_.middleCols(u0, u_.cols() - u0)));
      pad(v_, u_.cols(), cand);
    }
    points_.push_back(std::move(s));
  }

  const SvEvaluator<Scalar>& refresh() {
    current_ = std::make_shared<const SvEvaluator<Scalar>>(prob_->base(), v_, u_);
    return *current_;
  }
  const SvEvaluator<Scalar>& current() const {
    if (!current_) throw Error("singular-value state has no evaluator; call refresh()");
    return *current_;
  }
  std::shared_ptr<const SvEvaluator<Scalar>> current_ptr() const { return current_; }

 private:
  Mat<Scalar> adjoint_apply(const Point& mu, const Mat<Scalar>& x) const {
    const auto& a = prob_->base();
    const RealVec th = a.theta(mu);
    Mat<Scalar> y = Mat<Scalar>::Zero(a.cols(), x.cols());
    for (std::size_t m = 0; m < a.kappa(); ++m) y += th(static_cast<Eigen::Index>(m)) * a.term(m).matrix.adjoint_times(x);
    return y;
  }

  void pad(Mat<Scalar>& b, Eigen::Index target, const Mat<Scalar>& cand) {
    for (Eigen::Index j = 0; j < cand.cols() && b.cols() < target; ++j) b = orth_extend(b, Mat<Scalar>(cand.col(j)));
    while (b.cols() < target) {
      Mat<Scalar> r(b.rows(), 1);
      for (Eigen::Index i = 0; i < b.rows(); ++i) {
        if constexpr (is_complex_v<Scalar>) r(i, 0) = Scalar(rng_.normal(), rng_.normal());
        else r(i, 0) = rng_.normal();
      }
      b = orth_extend(b, r);
    }
  }

  ProblemPtr prob_;
  Rng rng_;
  Mat<Scalar> v_, u_;
  std::vector<SamplePointData<Scalar>> points_;
  std::shared_ptr<const SvEvaluator<Scalar>> current_;
};

template <typename Scalar>
std::pair<double, Vec<Scalar>> sigma_ub(const SvState<Scalar>& s, const Point& mu) {
  const auto& ev = s.current();
  auto [sig, w] = ev.sigma_ub(ev.theta(mu));
  return {sig, s.right() * w};
}

/// sigma^{V,U}(mu) = || U U^* A(mu) v_ub || for a full-length unit vector v_ub in span(V).
template <typename Scalar>
double sigma_lb_surrogate(const SvState<Scalar>& s, const Point& mu, const Vec<Scalar>& v_ub) {
  const auto& ev = s.current();
  return ev.sigma_lb_surrogate(ev.theta(mu), Vec<Scalar>(s.right().adjoint() * v_ub));
}

struct SvConfig {
  double epsilon = 1e-4;
  ErrorMode error_mode = ErrorMode::Relative;
  EllPolicy ell;
  InitMode init = InitMode::Center;
  std::size_t init_grid = 3;
  std::vector<Point> init_points;
  std::size_t max_outer_iters = 100;
  OptimizerSettings opt;

  void validate() const {
    if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
    if (!(ell.gap_threshold > 0)) throw ConfigError("gap threshold must be positive");
    if (!ell.dynamic && ell.fixed < 1) throw ConfigError("fixed ell must be at least 1");
    if (max_outer_iters < 1) throw ConfigError("max_outer_iters must be at least 1");
  }
};

template <typename Scalar>
struct SvTrace {
  std::vector<IterationRecord> iterations;
  RunStatus status = RunStatus::MaxIterations;
  bool converged = false;  // surrogate below epsilon; not a certificate
  std::string message;
  std::vector<Point> points;
  Mat<Scalar> right, left;
  std::shared_ptr<const SvEvaluator<Scalar>> final_evaluator;
};

template <typename Scalar>
Objective sv_surrogate(const SvState<Scalar>& s, ErrorMode mode) {
  return [&s, mode](const Point& mu) {
    SvEvaluation ev = s.current().evaluate(mu);
    if (mode == ErrorMode::Absolute) return ev.S;
    if (std::isnan(ev.S_rel)) throw NumericalError("relative singular-value surrogate undefined (sigma ~ 0)");
    return ev.S_rel;
  };
}

/// Pre-seeded initial sample: eigendata already computed by the caller.
template <typename Scalar>
using SeedPoints = std::vector<SamplePointData<Scalar>>;

/// Two-sided greedy loop for sigma_min(A(mu)).
template <typename Scalar>
SvTrace<Scalar> run_sv(typename SpectralProblem<Scalar>::Ptr prob, const SvConfig& cfg, SeedPoints<Scalar> seeds = {},
                       const IterationObserver& observer = {}) {
  cfg.validate();
  const ParamBox& box = prob->box();
  const double diam = std::max(box.diameter(), 1e-300);
  SvState<Scalar> state(prob);
  double t_init = 0.0;
  if (seeds.empty()) {
    std::vector<Point> init = cfg.init_points;
    if (init.empty()) init = cfg.init == InitMode::Grid ? grid_points(box, cfg.init_grid) : std::vector<Point>{box.center()};
    for (const auto& mu : init) {
      if (!box.contains(mu)) throw ConfigError("initial point outside the parameter box");
      const auto t0 = std::chrono::steady_clock::now();
      state.add_point(choose_ell(*prob, mu, cfg.ell));
      t_init += seconds_since(t0);
    }
  } else {
    for (auto& s : seeds) state.add_point(std::move(s));
  }

  SvTrace<Scalar> trace;
  const double opt_tol = cfg.opt.tol > 0 ? cfg.opt.tol : cfg.epsilon / 10.0;
  for (std::size_t iter = 0;; ++iter) {
    state.refresh();
    IterationRecord rec;
    rec.j = state.points().size();
    rec.dim = state.right().cols();
    if (iter == 0) rec.t_eig = t_init;
    auto t0 = std::chrono::steady_clock::now();
    Objective obj = sv_surrogate(state, cfg.error_mode);
    OptOutcome out;
    if (cfg.opt.method == OptMethod::Mesh) {
      out = mesh_maximize(obj, box, cfg.opt.mesh_points);
    } else {
      OptProblem op;
      op.objective = obj;
      op.box = box;
      op.lipschitz_gamma = cfg.opt.gamma;
      op.tol = opt_tol;
      op.rel_tol = cfg.opt.rel_tol;
      op.max_evals = cfg.opt.max_evals;
      op.seed = cfg.opt.seed;
      op.quick_constant = false;  // surrogates vanish on whole neighbourhoods of sample points
      out = maximize(op);
    }
    rec.t_opt = seconds_since(t0);
    rec.eps_j = out.value;
    rec.ucert = out.upper_certificate;
    rec.argmax = out.argmax;
    rec.opt_terminated_by = out.terminated_by;
    rec.evals = out.evals_used;
    rec.gamma = out.gamma;

    bool stop = false;
    if (out.value <= cfg.epsilon &&
        (cfg.opt.method == OptMethod::Mesh || out.terminated_by == Termination::Gap || out.upper_certificate <= cfg.epsilon)) {
      stop = true;
      trace.converged = true;
      trace.status = cfg.opt.method == OptMethod::Mesh ? RunStatus::MeshTolerance : RunStatus::Certified;
      trace.message = "singular-value surrogate below epsilon (uncertified against the true sigma_min)";
    }
    if (!stop && iter + 1 >= cfg.max_outer_iters) {
      stop = true;
      trace.status = RunStatus::MaxIterations;
      trace.message = "outer iteration limit reached";
    }
    if (!stop) {
      double dmin = std::numeric_limits<double>::infinity();
      for (const auto& p : state.points()) dmin = std::min(dmin, distance(p.mu, out.argmax));
      if (dmin <= 1e-12 * diam) {
        stop = true;
        trace.status = RunStatus::Stagnation;
        trace.message = "maximizer coincides with a stored sample point";
      }
    }
    if (!stop) {
      t0 = std::chrono::steady_clock::now();
      auto data = choose_ell(*prob, out.argmax, cfg.ell);
      rec.t_eig += seconds_since(t0);
      rec.ell = data.ell;
      rec.ell_capped = data.ell_capped;
      rec.expanded = true;
      state.add_point(std::move(data));
    }
    trace.iterations.push_back(rec);
    if (observer) observer(rec);
    if (stop) break;
  }
  trace.final_evaluator = state.current_ptr();
  trace.right = state.right();
  trace.left = state.left();
  for (const auto& p : state.points()) trace.points.push_back(p.mu);
  return trace;
}

struct HybridConfig {
  double eps_hat = 1e-4;
  SvConfig stage1;
  FrameworkConfig stage2;
  bool rho_zero_machine = true;
  double rho_zero_reldist = 0.1;

  void validate() const {
    if (!(eps_hat > 0)) throw ConfigError("eps_hat must be positive");
    if (!(eps_hat < 0.5)) throw ConfigError("eps_hat must be below 1/2");
  }
};

template <typename Scalar>
struct HybridResult {
  SvTrace<Scalar> stage1;
  RunTrace<Scalar> stage2;
  bool certified = false;
  double eps_hat = 0.0;
  double sigma_rel_bound = 0.0;  // certified (sigma_ub - sigma) / sigma_ub bound: 1 - sqrt(1 - 2 eps_hat)
  std::vector<LoggedValue> logged;  // final sigma upper bounds
  /// Final reduced model: sigma_min(A(mu) V) = sigma_min(sum theta_m R_m).
  std::vector<Mat<Scalar>> reduced_terms() const { return stage2.final_evaluator->reduced_terms(); }
  double sigma_upper(const Point& mu) const {
    return reduced_sigma_min(reduced_terms(), stage2.final_evaluator->problem().base().theta(mu));
  }
};

/// Stage 1: two-sided greedy to eps_hat. Stage 2: the eigenvalue framework on
/// A^*A with epsilon 2*eps_hat (relative), seeded with the stage-1 right basis.
template <typename Scalar>
HybridResult<Scalar> run_hybrid(typename SpectralProblem<Scalar>::Ptr prob, const HybridConfig& cfg,
                                 SeedPoints<Scalar> seeds = {}, const IterationObserver& obs1 = {},
                                 const IterationObserver& obs2 = {}) {
  cfg.validate();
  HybridResult<Scalar> res;
  res.eps_hat = cfg.eps_hat;
  SvConfig c1 = cfg.stage1;
  c1.epsilon = cfg.eps_hat;
  try {
    res.stage1 = run_sv<Scalar>(prob, c1, std::move(seeds), obs1);
  } catch (const Error& e) {
    throw Error(std::string("hybrid stage 1: ") + e.what());
  }
  FrameworkConfig c2 = cfg.stage2;
  c2.epsilon = 2.0 * cfg.eps_hat;
  c2.error_mode = ErrorMode::Relative;
  c2.rho_zero_machine = cfg.rho_zero_machine;
  c2.rho_zero_reldist = cfg.rho_zero_reldist;
  c2.init_points = res.stage1.points;
  try {
    res.stage2 = run<Scalar>(prob, c2, res.stage1.right, obs2);
  } catch (const Error& e) {
    throw Error(std::string("hybrid stage 2: ") + e.what());
  }
  res.certified = res.stage2.certified;
  res.sigma_rel_bound = 1.0 - std::sqrt(1.0 - 2.0 * cfg.eps_hat);
  for (const auto& lv : res.stage2.logged) res.logged.push_back({lv.mu, res.sigma_upper(lv.mu)});
  return res;
}

template <typename Scalar>
HybridResult<Scalar> run_hybrid(const AffineOperator<Scalar>& op, const HybridConfig& cfg, const EigSettings& es = {}) {
  return run_hybrid<Scalar>(SpectralProblem<Scalar>::normal(op, es), cfg);
}

/// A(mu) = M - mu1 I - mu2 i I over a box of the complex plane.
inline AffineOperator<Complex> shifted_family(const Mat<Complex>& m, const ParamBox& region) {
  if (m.rows() != m.cols()) throw DimensionError("pseudospectra need a square matrix");
  if (region.dim() != 2) throw ConfigError("pseudospectra region must be a 2-D box (Re z, Im z)");
  const Eigen::Index n = m.rows();
  SparseMat<Complex> eye(n, n), ieye(n, n);
  eye.setIdentity();
  ieye.setIdentity();
  eye *= Complex(-1.0, 0.0);
  ieye *= Complex(0.0, -1.0);
  std::vector<AffineOperator<Complex>::Term> terms;
  terms.push_back({ThetaExpr::parse("1", 2), TermMatrix<Complex>(m, false)});
  terms.push_back({ThetaExpr::parse("mu1", 2), TermMatrix<Complex>(eye, false)});
  terms.push_back({ThetaExpr::parse("mu2", 2), TermMatrix<Complex>(ieye, false)});
  return AffineOperator<Complex>(std::move(terms), region);
}

struct PseudospectraResult {
  HybridResult<Complex> hybrid;
  std::vector<Complex> interior_eigenvalues;
  Eigen::Index init_triplets = 0;  // singular triplets taken at interior eigenvalues
  Eigen::Index init_dim = 0;       // basis dimension after initialization

  double sigma(double re, double im) const { return hybrid.sigma_upper({re, im}); }
  double resolvent_norm(double re, double im) const { return 1.0 / sigma(re, im); }
};

/// Eigenvalue-seeded pseudospectra run: singular triplets of M - zI with
/// sigma < 1e-8 ||M|| at every eigenvalue z inside the region start both bases.
inline PseudospectraResult pseudospectra_run(const Mat<Complex>& m, const ParamBox& region, double eps_hat,
                                             HybridConfig cfg = {}, const EigSettings& es = {},
                                             const IterationObserver& obs1 = {}, const IterationObserver& obs2 = {}) {
  PseudospectraResult out;
  auto op = shifted_family(m, region);
  auto prob = SpectralProblem<Complex>::normal(op, es);
  Eigen::ComplexEigenSolver<Mat<Complex>> ces(m, false);
  if (ces.info() != Eigen::Success) throw SolverError("eigen decomposition of M failed", std::nan(""));
  const double mnorm = m.norm();
  SeedPoints<Complex> seeds;
  for (Eigen::Index k = 0; k < ces.eigenvalues().size(); ++k) {
    const Complex z = ces.eigenvalues()(k);
    const Point mu{z.real(), z.imag()};
    if (!region.contains(mu)) continue;
    out.interior_eigenvalues.push_back(z);
    const Mat<Complex> shifted = m - z * Mat<Complex>::Identity(m.rows(), m.cols());
    auto t = smallest_svds_dense(shifted, std::min<Eigen::Index>(m.rows(), 8));
    Eigen::Index cnt = 0;
    while (cnt < t.values.size() && t.values(cnt) < 1e-8 * mnorm) ++cnt;
    cnt = std::max<Eigen::Index>(cnt, 1);
    SamplePointData<Complex> s;
    s.mu = region.clamp(mu);
    s.ell = cnt;
    s.sigmas = t.values.head(cnt);
    s.lambdas = s.sigmas.array().square().matrix();
    s.sigma_next = t.values.size() > cnt ? t.values(cnt) : t.values(cnt - 1);
    s.lambda_next = s.sigma_next * s.sigma_next;
    s.vectors = t.right.leftCols(cnt);
    s.left = t.left.leftCols(cnt);
    out.init_triplets += cnt;
    seeds.push_back(std::move(s));
  }
  if (seeds.empty()) warn("no eigenvalue of M inside the region; starting from the region center");
  cfg.eps_hat = eps_hat;
  if (!seeds.empty()) {
    SvState<Complex> probe(prob);
    for (const auto& s : seeds) probe.add_point(s);
    out.init_dim = probe.right().cols();
  }
  out.hybrid = run_hybrid<Complex>(prob, cfg, std::move(seeds), obs1, obs2);
  return out;
}

/// Rows (Re z, Im z, sigma_approx, resolvent_norm_approx) over a uniform grid.
inline void write_pseudospectra_csv(const PseudospectraResult& res, const ParamBox& region, std::size_t nx, std::size_t ny,
                                    const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "re,im,sigma,resolvent_norm\n" << std::setprecision(17);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const double re = nx == 1 ? region.center()[0] : region.lower(0) + region.width(0) * static_cast<double>(i) / static_cast<double>(nx - 1);
      const double im = ny == 1 ? region.center()[1] : region.lower(1) + region.width(1) * static_cast<double>(j) / static_cast<double>(ny - 1);
      const double s = res.sigma(re, im);
      f << re << ',' << im << ',' << s << ',' << 1.0 / s << '\n';
    }
}

}  // namespace certspec
