#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "certspec/config.hpp"
#include "certspec/generators.hpp"
#include "certspec/reduced_model.hpp"

namespace certspec {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- problem setup

/// True if any term file (or the pseudospectra matrix) is complex.
inline bool config_is_complex(const RunConfig& c) {
  if (c.problem.kind == RunKind::Pseudospectra) return true;
  for (const auto& t : c.problem.terms)
    if (mm::read_file(c.resolve(t.matrix)).field == mm::Field::Complex) return true;
  return false;
}

inline std::uint64_t generator_seed(const RunConfig& c) {
  return c.problem.generator && c.problem.generator->seed ? *c.problem.generator->seed : c.seed;
}

inline AffineOperator<double> generate_operator(const GeneratorSpec& g, std::uint64_t seed) {
  if (g.n < 2) throw ConfigError("generator: n must be at least 2");
  if (g.type == "exp_linear_pair") return gen::exp_linear_pair(g.n, seed);
  if (g.type == "hermitian_family") return gen::random_hermitian_family(g.n, g.kappa, g.p, seed);
  if (g.type == "sparse_family") return gen::sparse_hermitian_family(g.n, g.kappa, g.p, g.density, seed);
  if (g.type == "clustered") return gen::clustered_family(g.n, g.cluster, g.spread, seed);
  if (g.type == "black_scholes") return gen::black_scholes(g.n, seed);
  if (g.type == "general_family") return gen::random_general_family(g.n, g.kappa, g.p, seed);
  throw ConfigError("generator: unknown type '" + g.type + "'");
}

template <typename Scalar>
AffineOperator<Scalar> cast_operator(const AffineOperator<double>& op) {
  if constexpr (std::is_same_v<Scalar, double>) {
    return op;
  } else {
    std::vector<typename AffineOperator<Scalar>::Term> terms;
    for (const auto& t : op.terms()) {
      if (t.matrix.is_dense())
        terms.push_back({t.theta, TermMatrix<Scalar>(Mat<Scalar>(t.matrix.dense_ref().template cast<Scalar>()), t.matrix.hermitian())});
      else
        terms.push_back({t.theta, TermMatrix<Scalar>(SparseMat<Scalar>(t.matrix.sparse_ref().template cast<Scalar>()), t.matrix.hermitian())});
    }
    return AffineOperator<Scalar>(std::move(terms), op.box());
  }
}

inline Mat<Complex> pseudospectra_matrix(const RunConfig& c) {
  if (!c.problem.matrix.empty()) return mm::to_dense<Complex>(mm::read_file(c.resolve(c.problem.matrix)));
  if (!c.problem.generator) throw ConfigError("pseudospectra: give 'matrix' or a matrix generator");
  const auto& g = *c.problem.generator;
  const auto seed = generator_seed(c);
  if (g.type == "black_scholes_matrix") return gen::black_scholes_matrix(g.n, g.sigma, g.rate, seed);
  if (g.type == "nonnormal") return gen::nonnormal_matrix(g.n, g.radius, seed);
  throw ConfigError("pseudospectra generator must be 'black_scholes_matrix' or 'nonnormal', got '" + g.type + "'");
}

/// The affine operator described by a config (not used for pseudospectra).
template <typename Scalar>
AffineOperator<Scalar> build_operator(const RunConfig& c) {
  if (c.problem.kind == RunKind::Pseudospectra) {
    if constexpr (is_complex_v<Scalar>) return shifted_family(pseudospectra_matrix(c), *c.problem.box);
    else throw ConfigError("pseudospectra problems are complex");
  }
  if (c.problem.generator) {
    auto op = generate_operator(*c.problem.generator, generator_seed(c));
    if (c.problem.box) op = AffineOperator<double>(op.terms(), *c.problem.box);
    return cast_operator<Scalar>(op);
  }
  const std::size_t p = c.problem.box->dim();
  std::vector<typename AffineOperator<Scalar>::Term> terms;
  for (std::size_t k = 0; k < c.problem.terms.size(); ++k) {
    const auto& t = c.problem.terms[k];
    ThetaExpr th;
    try {
      th = ThetaExpr::parse(t.theta, p);
    } catch (const Error& e) {
      throw ConfigError("problem.terms[" + std::to_string(k) + "].theta: " + e.what());
    }
    auto d = mm::read_file(c.resolve(t.matrix));
    terms.push_back({th, TermMatrix<Scalar>::from_market(d, t.hermitian)});
  }
  AffineOperator<Scalar> op(std::move(terms), *c.problem.box);
  for (const auto& t : op.terms()) t.theta.validate_on(op.box());
  return op;
}

// ---------------------------------------------------------------- outputs

inline json point_json(const Point& p) { return json(p); }

inline json iteration_json(const IterationRecord& r, bool with_times = true) {
  json j = {{"j", r.j},
            {"dim", r.dim},
            {"eps_j", r.eps_j},
            {"ucert", std::isfinite(r.ucert) ? json(r.ucert) : json(nullptr)},
            {"argmax", r.argmax},
            {"optimizer_termination", r.opt_terminated_by == Termination::Gap      ? "gap"
                                      : r.opt_terminated_by == Termination::Budget ? "budget"
                                                                                   : "mesh"},
            {"evals", r.evals},
            {"gamma", r.gamma},
            {"expanded", r.expanded},
            {"ell", r.ell},
            {"ell_capped", r.ell_capped}};
  if (with_times) j["seconds"] = {{"eig", r.t_eig}, {"opt", r.t_opt}, {"lp", r.t_lp}};
  return j;
}

template <typename Scalar>
json trace_json(const RunTrace<Scalar>& t, bool with_times = true) {
  json it = json::array();
  for (const auto& r : t.iterations) it.push_back(iteration_json(r, with_times));
  return {{"status", to_string(t.status)},
          {"certified", t.certified},
          {"message", t.message},
          {"epsilon", t.epsilon},
          {"error_mode", enum_name(t.error_mode)},
          {"init_ell", t.init_ell},
          {"init_ell_capped", t.init_ell_capped},
          {"dim", t.basis.cols()},
          {"points", t.points},
          {"monotonicity_violations", t.monotonicity_violations},
          {"eps_increases", t.eps_increases},
          {"iterations", it}};
}

template <typename Scalar>
json trace_json(const SvTrace<Scalar>& t, bool with_times = true) {
  json it = json::array();
  for (const auto& r : t.iterations) it.push_back(iteration_json(r, with_times));
  return {{"status", to_string(t.status)},
          {"converged", t.converged},
          {"certified", false},
          {"message", t.message},
          {"dim", t.right.cols()},
          {"points", t.points},
          {"iterations", it}};
}

/// Bound sweep: mu..., lambda_ub, lambda_lb, [lambda_scm], H, H_rel over a uniform grid.
template <typename Scalar>
void write_bound_sweep(const BoundEvaluator<Scalar>& ev, std::size_t per_dim, const std::string& path, bool scm) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  const ParamBox& box = ev.problem().box();
  for (std::size_t k = 0; k < box.dim(); ++k) f << "mu" << k + 1 << ',';
  f << "lambda_ub,lambda_lb," << (scm ? "lambda_scm," : "") << "H,H_rel\n" << std::setprecision(17);
  for (const auto& mu : grid_points(box, per_dim)) {
    const BoundEvaluation e = ev.evaluate(mu, scm);
    for (double x : mu) f << x << ',';
    f << e.lambda_ub << ',' << e.lambda_lb << ',';
    if (scm) f << e.lambda_scm.value_or(std::nan("")) << ',';
    f << e.H << ',' << e.H_rel << '\n';
  }
}

// ---------------------------------------------------------------- verification

struct VerifyReport {
  std::string measure;  // absolute | relative | sigma-relative | sigma-absolute
  double tolerance = 0.0;
  std::size_t points = 0;
  double max_error = 0.0;
  double mean_error = 0.0;
  Point worst;
  std::vector<std::pair<Point, double>> violations;  // error above tolerance or bound below the oracle
  bool iterative_oracle = false;

  bool passed() const { return violations.empty(); }
  json to_json() const {
    json v = json::array();
    for (const auto& [mu, e] : violations) v.push_back({{"mu", mu}, {"error", e}});
    return {{"measure", measure},       {"tolerance", tolerance}, {"points", points},
            {"max_error", max_error},   {"mean_error", mean_error}, {"worst", worst},
            {"violations", v},          {"violation_count", violations.size()},
            {"iterative_oracle", iterative_oracle}, {"passed", passed()}};
  }
};

/// Uniform mesh size: per_dim points in each direction, capped at max_points in total.
inline std::size_t mesh_per_dim(std::size_t per_dim, std::size_t max_points, std::size_t p) {
  if (per_dim == 0 || max_points == 0) throw ConfigError("verification mesh is empty");
  auto cap = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(max_points), 1.0 / static_cast<double>(p)) + 1e-9));
  return std::max<std::size_t>(1, std::min(per_dim, cap));
}

/// Exact lambda_min or sigma_min of the full operator.
template <typename Scalar>
double full_oracle(const AffineOperator<Scalar>& op, const Point& mu, ModelKind kind, bool& iterative) {
  constexpr Eigen::Index kDenseBudget = 2000;
  const bool dense = op.n() <= kDenseBudget;
  iterative = iterative || !dense;
  if (kind == ModelKind::Eigenvalue) {
    if (dense) return smallest_eigs_dense(op.assemble_dense(mu), 1).values(0);
    return smallest_eigs_shift_invert(op.assemble_sparse(mu), 1).values(0);
  }
  if (dense) return smallest_svds_dense(op.assemble_dense(mu), 1).values(0);
  return smallest_svds(op.assemble_sparse(mu), 1).values(0);
}

template <typename Scalar>
VerifyReport verify_model(const ReducedModel<Scalar>& model, const AffineOperator<Scalar>& op, std::size_t per_dim,
                          std::size_t max_points = 100000) {
  if (op.kappa() != model.terms.size()) throw DimensionError("model and operator have different term counts");
  if (op.n() != model.basis.rows()) throw DimensionError("model basis does not match the operator size");
  const std::size_t pd = mesh_per_dim(per_dim, max_points, model.box.dim());
  VerifyReport rep;
  const std::string mode = model.meta.value("error_mode", "relative");
  const bool relative = mode == "relative";
  rep.tolerance = model.meta.value("tolerance", model.meta.value("epsilon", 0.0));
  rep.measure = model.kind == ModelKind::Eigenvalue ? mode : (relative ? "sigma-relative" : "sigma-absolute");
  if (op.n() > 2000) warn("verification above the dense budget uses iterative oracles");
  double sum = 0.0;
  for (const auto& mu : grid_points(model.box, pd)) {
    const double ub = model.value(mu);
    const double exact = full_oracle(op, mu, model.kind, rep.iterative_oracle);
    const double diff = ub - exact;
    double err = diff;
    if (relative) err = model.kind == ModelKind::Eigenvalue ? diff / std::abs(exact) : diff / ub;
    const double below = 1e-9 * (1.0 + std::abs(exact));
    if (err > rep.tolerance || diff < -below) rep.violations.emplace_back(mu, err);
    if (rep.points == 0 || err > rep.max_error) {
      rep.max_error = err;
      rep.worst = mu;
    }
    sum += err;
    ++rep.points;
  }
  rep.mean_error = sum / static_cast<double>(rep.points);
  return rep;
}

// ---------------------------------------------------------------- commands

enum ExitCode { kExitCertified = 0, kExitError = 1, kExitUncertified = 2 };

struct BuildResult {
  int exit_code = kExitError;
  bool certified = false;
  std::string status;
  std::string model_dir;
  Eigen::Index dim = 0;
  std::size_t iterations = 0;
  json logged = json::array();
};

namespace clidetail {

inline json logged_json(const std::vector<LoggedValue>& v) {
  json out = json::array();
  for (const auto& l : v) out.push_back({{"mu", l.mu}, {"value", l.ub}});
  return out;
}

template <typename Scalar>
void finish_build(const RunConfig& c, ReducedModel<Scalar>& model, BuildResult& res, const json& trace) {
  const fs::path out(c.output.directory);
  fs::create_directories(out);
  res.model_dir = (out / "model").string();
  model.meta["logged"] = res.logged;
  save_model(model, res.model_dir);
  if (c.wants("json")) {
    write_json_file((out / "trace.json").string(), trace);
    write_json_file((out / "config.json").string(), to_json(c));
  }
  res.exit_code = res.certified ? kExitCertified : kExitUncertified;
}

template <typename Scalar>
void maybe_verify(const RunConfig& c, const ReducedModel<Scalar>& model, const AffineOperator<Scalar>& op, BuildResult& res) {
  if (!c.verify.enabled) return;
  VerifyReport rep = verify_model(model, op, c.verify.points_per_dim, c.verify.max_points);
  write_json_file((fs::path(c.output.directory) / "verify.json").string(), rep.to_json());
  if (!rep.passed()) res.exit_code = kExitUncertified;
}

template <typename Scalar>
BuildResult build_eig(const RunConfig& c, const IterationObserver& obs) {
  auto op = build_operator<Scalar>(c);
  auto prob = SpectralProblem<Scalar>::hermitian(op);
  auto tr = run<Scalar>(prob, c.framework, Mat<Scalar>{}, obs);
  BuildResult res;
  res.certified = tr.certified;
  res.status = to_string(tr.status);
  res.dim = tr.basis.cols();
  res.iterations = tr.iterations.size();
  res.logged = logged_json(tr.logged);
  ReducedModel<Scalar> model;
  model.kind = ModelKind::Eigenvalue;
  model.box = op.box();
  for (const auto& t : op.terms()) model.thetas.push_back(t.theta);
  model.terms = tr.final_evaluator->reduced_terms();
  model.basis = tr.basis;
  model.meta = {{"run_kind", "eig"},
                {"status", res.status},
                {"certified", tr.certified},
                {"epsilon", c.framework.epsilon},
                {"tolerance", c.framework.epsilon},
                {"error_mode", enum_name(c.framework.error_mode)},
                {"points", tr.points}};
  finish_build(c, model, res, trace_json(tr));
  if (c.wants("csv") && c.output.sweep_points > 0)
    write_bound_sweep(*tr.final_evaluator, c.output.sweep_points, (fs::path(c.output.directory) / "sweep.csv").string(),
                      c.framework.compute_scm || c.framework.lb_mode == LbMode::Scm);
  maybe_verify(c, model, op, res);
  return res;
}

template <typename Scalar>
BuildResult build_sv(const RunConfig& c, const IterationObserver& obs) {
  auto op = build_operator<Scalar>(c);
  auto tr = run_sv<Scalar>(SpectralProblem<Scalar>::normal(op), c.sv, {}, obs);
  BuildResult res;
  res.certified = false;  // the two-sided surrogate is not an error bound
  res.status = to_string(tr.status);
  res.dim = tr.right.cols();
  res.iterations = tr.iterations.size();
  std::vector<LoggedValue> logged;
  for (const auto& mu : tr.points) logged.push_back({mu, tr.final_evaluator->upper_bound(mu)});
  for (const auto& r : tr.iterations) logged.push_back({r.argmax, tr.final_evaluator->upper_bound(r.argmax)});
  res.logged = logged_json(logged);
  ReducedModel<Scalar> model;
  model.kind = ModelKind::SingularValue;
  model.box = op.box();
  for (const auto& t : op.terms()) model.thetas.push_back(t.theta);
  model.terms = tr.final_evaluator->reduced_terms();
  model.basis = tr.right;
  model.meta = {{"run_kind", "sv"},
                {"status", res.status},
                {"certified", false},
                {"uncertified_reason", "two-sided surrogate only; run hybrid for a certificate"},
                {"epsilon", c.sv.epsilon},
                {"tolerance", c.sv.epsilon},
                {"error_mode", enum_name(c.sv.error_mode)},
                {"points", tr.points}};
  finish_build(c, model, res, trace_json(tr));
  maybe_verify(c, model, op, res);
  res.exit_code = kExitUncertified;
  return res;
}

template <typename Scalar>
ReducedModel<Scalar> hybrid_model(const AffineOperator<Scalar>& op, const HybridResult<Scalar>& h, const char* kind) {
  ReducedModel<Scalar> model;
  model.kind = ModelKind::SingularValue;
  model.box = op.box();
  for (const auto& t : op.terms()) model.thetas.push_back(t.theta);
  model.terms = h.reduced_terms();
  model.basis = h.stage2.basis;
  model.meta = {{"run_kind", kind},
                {"status", to_string(h.stage2.status)},
                {"certified", h.certified},
                {"epsilon", h.eps_hat},
                {"tolerance", h.sigma_rel_bound},
                {"error_mode", "relative"},
                {"stage1_dim", h.stage1.right.cols()},
                {"points", h.stage2.points}};
  return model;
}

template <typename Scalar>
json hybrid_trace(const HybridResult<Scalar>& h) {
  return {{"certified", h.certified},
          {"eps_hat", h.eps_hat},
          {"sigma_rel_bound", h.sigma_rel_bound},
          {"stage1", trace_json(h.stage1)},
          {"stage2", trace_json(h.stage2)}};
}

template <typename Scalar>
BuildResult build_hybrid(const RunConfig& c, const IterationObserver& obs) {
  auto op = build_operator<Scalar>(c);
  auto h = run_hybrid<Scalar>(SpectralProblem<Scalar>::normal(op), c.hybrid, {}, obs, obs);
  BuildResult res;
  res.certified = h.certified;
  res.status = to_string(h.stage2.status);
  res.dim = h.stage2.basis.cols();
  res.iterations = h.stage1.iterations.size() + h.stage2.iterations.size();
  res.logged = logged_json(h.logged);
  auto model = hybrid_model(op, h, "hybrid");
  finish_build(c, model, res, hybrid_trace(h));
  if (c.wants("csv") && c.output.sweep_points > 0)
    write_bound_sweep(*h.stage2.final_evaluator, c.output.sweep_points,
                      (fs::path(c.output.directory) / "sweep.csv").string(), false);
  maybe_verify(c, model, op, res);
  return res;
}

inline BuildResult build_pseudospectra(const RunConfig& c, const IterationObserver& obs) {
  const Mat<Complex> m = pseudospectra_matrix(c);
  const ParamBox& region = *c.problem.box;
  auto ps = pseudospectra_run(m, region, c.hybrid.eps_hat, c.hybrid, {}, obs, obs);
  const auto op = shifted_family(m, region);
  BuildResult res;
  res.certified = ps.hybrid.certified;
  res.status = to_string(ps.hybrid.stage2.status);
  res.dim = ps.hybrid.stage2.basis.cols();
  res.iterations = ps.hybrid.stage1.iterations.size() + ps.hybrid.stage2.iterations.size();
  res.logged = logged_json(ps.hybrid.logged);
  auto model = hybrid_model(op, ps.hybrid, "pseudospectra");
  json ev = json::array();
  for (const auto& z : ps.interior_eigenvalues) ev.push_back({z.real(), z.imag()});
  model.meta["interior_eigenvalues"] = ev;
  model.meta["init_triplets"] = ps.init_triplets;
  model.meta["init_dim"] = ps.init_dim;
  json trace = hybrid_trace(ps.hybrid);
  trace["interior_eigenvalues"] = ev;
  trace["init_dim"] = ps.init_dim;
  finish_build(c, model, res, trace);
  if (c.wants("csv") && c.output.grid_points > 0)
    write_pseudospectra_csv(ps, region, c.output.grid_points, c.output.grid_points,
                            (fs::path(c.output.directory) / "pseudospectra.csv").string());
  maybe_verify(c, model, op, res);
  return res;
}

}  // namespace clidetail

/// Runs the configured framework and writes the result bundle.
/// Exit code 0: certified; 2: finished without a certificate.
inline BuildResult cmd_build(const RunConfig& c, const IterationObserver& obs = {}) {
  switch (c.problem.kind) {
    case RunKind::Eig:
      return config_is_complex(c) ? clidetail::build_eig<Complex>(c, obs) : clidetail::build_eig<double>(c, obs);
    case RunKind::Sv:
      return config_is_complex(c) ? clidetail::build_sv<Complex>(c, obs) : clidetail::build_sv<double>(c, obs);
    case RunKind::Hybrid:
      return config_is_complex(c) ? clidetail::build_hybrid<Complex>(c, obs) : clidetail::build_hybrid<double>(c, obs);
    case RunKind::Pseudospectra:
      return clidetail::build_pseudospectra(c, obs);
  }
  throw ConfigError("unknown problem kind");
}

struct EvalRow {
  Point mu;
  double value = 0.0;
  bool extrapolated = false;
};

/// Online evaluation at the given points, in order. Points outside the box
/// are evaluated anyway and flagged.
template <typename Scalar>
std::vector<EvalRow> cmd_eval(const ReducedModel<Scalar>& model, const std::vector<Point>& points) {
  std::vector<EvalRow> rows;
  rows.reserve(points.size());
  std::size_t outside = 0;
  for (const auto& mu : points) {
    EvalRow r;
    r.mu = mu;
    r.extrapolated = !model.box.contains(mu);
    outside += r.extrapolated;
    r.value = model.value(mu);
    rows.push_back(std::move(r));
  }
  if (outside > 0) warn(std::to_string(outside) + " evaluation point(s) outside the parameter box; values are extrapolated");
  return rows;
}

inline void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows, ModelKind kind, std::size_t p) {
  for (std::size_t k = 0; k < p; ++k) out << "mu" << k + 1 << ',';
  out << (kind == ModelKind::Eigenvalue ? "lambda_ub" : "sigma_ub") << ",extrapolated\n" << std::setprecision(17);
  for (const auto& r : rows) {
    for (double x : r.mu) out << x << ',';
    out << r.value << ',' << (r.extrapolated ? 1 : 0) << '\n';
  }
}

/// Verification of a stored model against the operator of the original config.
inline VerifyReport cmd_verify(const std::string& model_dir, const RunConfig& c, std::size_t per_dim, std::size_t max_points) {
  if (model_is_complex(model_dir)) {
    auto m = load_model<Complex>(model_dir);
    return verify_model(m, build_operator<Complex>(c), per_dim, max_points);
  }
  auto m = load_model<double>(model_dir);
  return verify_model(m, build_operator<double>(c), per_dim, max_points);
}

/// Writes the generator's term matrices as Matrix Market files plus a ready-to-run
/// config (problem.json) referencing them. Output is a pure function of the generator settings and seed.
inline std::vector<std::string> gen_synthetic(const GeneratorSpec& g, std::uint64_t seed, const std::string& dir,
                                              RunKind kind = RunKind::Eig) {
  fs::create_directories(dir);
  const auto op = generate_operator(g, seed);
  RunConfig c;
  c.problem.kind = kind;
  c.problem.box = op.box();
  c.seed = seed;
  std::vector<std::string> files;
  for (std::size_t k = 0; k < op.kappa(); ++k) {
    const auto& t = op.term(k);
    const std::string name = "term_" + std::to_string(k + 1) + ".mtx";
    const std::string path = (fs::path(dir) / name).string();
    const auto sym = t.matrix.hermitian() ? mm::Symmetry::Symmetric : mm::Symmetry::General;
    mm::write_coordinate_file(path, t.matrix.sparse(), sym);
    files.push_back(path);
    c.problem.terms.push_back({t.theta.to_string(), name, t.matrix.hermitian()});
  }
  const std::string cfg = (fs::path(dir) / "problem.json").string();
  save_config(c, cfg);
  files.push_back(cfg);
  return files;
}

}  // namespace certspec
