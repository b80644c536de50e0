#pragma once

#include <chrono>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "certspec/global_opt.hpp"
#include "certspec/lower_bound.hpp"

namespace certspec {

enum class ErrorMode { Absolute, Relative };
enum class InitMode { Center, Grid };
enum class OptMethod { Lipschitz, Mesh };

struct OptimizerSettings {
  OptMethod method = OptMethod::Lipschitz;
  double tol = 0.0;        // <= 0: epsilon / 10
  double rel_tol = 0.1;    // gap may also be rel_tol * current value
  double gamma = 0.0;      // <= 0: estimated per iteration
  std::size_t max_evals = 20000;
  std::size_t mesh_points = 25;  // per dimension, Mesh method
  std::uint64_t seed = 1;
};

struct FrameworkConfig {
  double epsilon = 1e-8;
  ErrorMode error_mode = ErrorMode::Relative;
  EllPolicy ell;
  Eigen::Index r = 1;
  InitMode init = InitMode::Center;
  std::size_t init_grid = 3;       // points per dimension for Grid
  std::vector<Point> init_points;  // overrides init when non-empty
  LbMode lb_mode = LbMode::Plain;
  std::size_t history_window = 0;
  bool compute_scm = false;
  bool rho_zero_machine = false;
  double rho_zero_reldist = 0.0;
  std::size_t max_outer_iters = 100;
  std::size_t probe_points = 11;  // per dimension, plain-mode monotonicity diagnostic; 0 disables
  OptimizerSettings opt;

  void validate() const {
    if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
    if (!ell.dynamic && ell.fixed < 1) throw ConfigError("fixed ell must be at least 1");
    if (!(ell.gap_threshold > 0)) throw ConfigError("gap threshold must be positive");
    if (r < 1) throw ConfigError("Ritz count r must be at least 1");
    if (max_outer_iters < 1) throw ConfigError("max_outer_iters must be at least 1");
    if (init == InitMode::Grid && init_grid < 1) throw ConfigError("init grid needs at least one point per dimension");
    if (opt.method == OptMethod::Mesh && opt.mesh_points < 2) throw ConfigError("mesh needs at least 2 points per dimension");
  }

  BoundSettings bound_settings() const {
    BoundSettings b;
    b.r = r;
    b.mode = lb_mode;
    b.rho_zero_machine = rho_zero_machine;
    b.rho_zero_reldist = rho_zero_reldist;
    b.compute_scm = compute_scm;
    b.history_window = history_window;
    return b;
  }
};

enum class RunStatus { Certified, MeshTolerance, MaxIterations, Stagnation };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Certified: return "certified";
    case RunStatus::MeshTolerance: return "mesh-tolerance";
    case RunStatus::MaxIterations: return "max-iterations";
    case RunStatus::Stagnation: return "stagnation";
  }
  return "?";
}

struct IterationRecord {
  std::size_t j = 0;           // points in the state when eps_j was measured
  Eigen::Index dim = 0;        // dim V_j
  double eps_j = 0.0;          // computed surrogate maximum
  double ucert = 0.0;          // optimizer envelope bound (NaN for mesh)
  Point argmax;                // mu_{j+1} candidate
  Termination opt_terminated_by = Termination::Gap;
  std::size_t evals = 0;
  double gamma = 0.0;
  bool expanded = false;       // a point was added after this record
  Eigen::Index ell = 0;        // vectors taken at mu_{j+1}
  bool ell_capped = false;
  double t_eig = 0.0, t_opt = 0.0, t_lp = 0.0;
};

struct LoggedValue {
  Point mu;
  double ub = 0.0;  // final-model upper bound at mu
};

template <typename Scalar>
struct RunTrace {
  std::vector<IterationRecord> iterations;
  RunStatus status = RunStatus::MaxIterations;
  bool certified = false;
  double epsilon = 0.0;
  ErrorMode error_mode = ErrorMode::Relative;
  std::string message;
  std::vector<Point> points;
  Eigen::Index init_ell = 0;  // largest ell among the initial points
  bool init_ell_capped = false;
  Mat<Scalar> basis;
  std::shared_ptr<const BoundEvaluator<Scalar>> final_evaluator;  // certified snapshot
  std::vector<LoggedValue> logged;
  std::size_t monotonicity_violations = 0;  // pointwise LB decreases on the probe mesh
  std::size_t eps_increases = 0;            // eps_j > eps_{j-1}
};

/// Surrogate H (absolute) or H_r (relative) over the frozen state.
template <typename Scalar>
Objective surrogate(const ReductionState<Scalar>& state, ErrorMode mode) {
  return [&state, mode](const Point& mu) {
    BoundEvaluation ev = state.evaluate(mu);
    if (mode == ErrorMode::Absolute) return ev.H;
    if (std::isnan(ev.H_rel)) {
      std::ostringstream os;
      os << "relative surrogate undefined (upper bound ~ 0) at mu = (";
      for (std::size_t k = 0; k < mu.size(); ++k) os << (k ? ", " : "") << mu[k];
      os << ")";
      throw NumericalError(os.str());
    }
    return ev.H_rel;
  };
}

inline std::vector<Point> grid_points(const ParamBox& box, std::size_t per_dim) {
  const std::size_t p = box.dim();
  std::vector<Point> out;
  std::vector<std::size_t> idx(p, 0);
  for (;;) {
    Point mu(p);
    for (std::size_t k = 0; k < p; ++k)
      mu[k] = per_dim == 1 ? 0.5 * (box.lower(k) + box.upper(k))
                           : box.lower(k) + box.width(k) * static_cast<double>(idx[k]) / static_cast<double>(per_dim - 1);
    out.push_back(std::move(mu));
    std::size_t k = p;
    while (k-- > 0) {
      if (++idx[k] < per_dim) break;
      idx[k] = 0;
    }
    if (k == static_cast<std::size_t>(-1)) break;
  }
  return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

using IterationObserver = std::function<void(const IterationRecord&)>;

/// Greedy subspace loop on a prepared problem. `seed_basis` (may be empty)
/// is placed in V before the initial points are added.
template <typename Scalar>
RunTrace<Scalar> run(typename SpectralProblem<Scalar>::Ptr prob, const FrameworkConfig& cfg,
                     const Mat<Scalar>& seed_basis = {}, const IterationObserver& observer = {}) {
  cfg.validate();
  const ParamBox& box = prob->box();
  const double diam = std::max(box.diameter(), 1e-300);
  ReductionState<Scalar> state(prob, cfg.bound_settings());
  if (seed_basis.size() > 0) state.extend_basis(seed_basis);

  std::vector<Point> init = cfg.init_points;
  if (init.empty()) init = cfg.init == InitMode::Grid ? grid_points(box, cfg.init_grid) : std::vector<Point>{box.center()};
  double t_init = 0.0;
  Eigen::Index first_ell = 0;
  bool first_capped = false;
  for (const auto& mu : init) {
    if (!box.contains(mu)) throw ConfigError("initial point outside the parameter box");
    const auto t0 = std::chrono::steady_clock::now();
    auto data = choose_ell(*prob, mu, cfg.ell);
    t_init += seconds_since(t0);
    first_ell = std::max(first_ell, data.ell);
    first_capped = first_capped || data.ell_capped;
    state.add_point(std::move(data));
  }

  RunTrace<Scalar> trace;
  trace.epsilon = cfg.epsilon;
  trace.error_mode = cfg.error_mode;
  trace.init_ell = first_ell;
  trace.init_ell_capped = first_capped;
  const double opt_tol = cfg.opt.tol > 0 ? cfg.opt.tol : cfg.epsilon / 10.0;
  const double slack_scale = 1e-9;

  std::vector<Point> probes;
  if (cfg.lb_mode == LbMode::Plain && cfg.probe_points > 0) probes = grid_points(box, cfg.probe_points);
  std::vector<double> probe_prev;

  for (std::size_t iter = 0;; ++iter) {
    const auto& ev = state.refresh();
    const double lp_before = ev.lp_seconds();
    IterationRecord rec;
    rec.j = state.j();
    rec.dim = state.basis().cols();
    if (iter == 0) rec.t_eig = t_init;

    auto t0 = std::chrono::steady_clock::now();
    OptOutcome out;
    Objective obj = surrogate(state, cfg.error_mode);
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
    rec.t_lp = ev.lp_seconds() - lp_before;
    rec.eps_j = out.value;
    rec.ucert = out.upper_certificate;
    rec.argmax = out.argmax;
    rec.opt_terminated_by = out.terminated_by;
    rec.evals = out.evals_used;
    rec.gamma = out.gamma;
    if (!trace.iterations.empty() && rec.eps_j > trace.iterations.back().eps_j) ++trace.eps_increases;

    if (!probes.empty()) {
      std::vector<double> cur(probes.size());
      for (std::size_t k = 0; k < probes.size(); ++k) cur[k] = state.evaluate(probes[k]).lambda_lb;
      if (!probe_prev.empty())
        for (std::size_t k = 0; k < probes.size(); ++k)
          if (cur[k] < probe_prev[k] - slack_scale * (1 + std::abs(probe_prev[k]))) ++trace.monotonicity_violations;
      probe_prev = std::move(cur);
    }

    bool stop = false;
    if (out.value <= cfg.epsilon) {
      stop = true;
      if (cfg.opt.method == OptMethod::Mesh) {
        trace.status = RunStatus::MeshTolerance;
        trace.message = "surrogate below epsilon on the optimization mesh (no continuum certificate)";
      } else if (out.terminated_by == Termination::Gap || out.upper_certificate <= cfg.epsilon) {
        trace.status = RunStatus::Certified;
        trace.certified = true;
        trace.message = "surrogate maximum below epsilon";
      } else {
        // Budget ran out before the envelope closed: keep refining with a new point.
        stop = false;
      }
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

  trace.final_evaluator = state.history().back();
  trace.basis = state.basis();
  for (const auto& p : state.points()) trace.points.push_back(p.mu);
  // Upper bounds of the final model at every sample point and every optimizer argmax.
  const auto& fin = *trace.final_evaluator;
  for (std::size_t i = 0; i < fin.point_count(); ++i) trace.logged.push_back({fin.point(i), fin.upper_bound(fin.point(i))});
  for (const auto& rec : trace.iterations) trace.logged.push_back({rec.argmax, fin.upper_bound(rec.argmax)});
  return trace;
}

/// Algorithm entry on a Hermitian affine operator.
template <typename Scalar>
RunTrace<Scalar> run(const AffineOperator<Scalar>& op, const FrameworkConfig& cfg, const EigSettings& es = {},
                     const IterationObserver& observer = {}) {
  return run<Scalar>(SpectralProblem<Scalar>::hermitian(op, es), cfg, Mat<Scalar>{}, observer);
}

}  // namespace certspec
