#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "certspec/sv_framework.hpp"

namespace certspec {

using json = nlohmann::json;

enum class RunKind { Eig, Sv, Hybrid, Pseudospectra };

struct TermSpec {
  std::string theta;
  std::string matrix;      // Matrix Market path, relative to the config file
  bool hermitian = false;  // declare Hermitian even for general storage
};

/// Seeded synthetic problem in place of term files.
struct GeneratorSpec {
  std::string type;  // exp_linear_pair | hermitian_family | sparse_family | clustered | black_scholes | general_family
                     // pseudospectra: black_scholes_matrix | nonnormal
  Eigen::Index n = 100;
  std::size_t kappa = 2;
  std::size_t p = 1;
  double density = 0.05;
  Eigen::Index cluster = 16;
  double spread = 1e-9;
  double sigma = 0.1;   // black_scholes_matrix
  double rate = 0.01;   // black_scholes_matrix
  double radius = 1.0;  // nonnormal
  std::optional<std::uint64_t> seed;  // falls back to the run seed
};

struct ProblemSpec {
  RunKind kind = RunKind::Eig;
  std::vector<TermSpec> terms;
  std::optional<GeneratorSpec> generator;
  std::string matrix;            // pseudospectra: M as a Matrix Market file
  std::optional<ParamBox> box;   // parameter box (region for pseudospectra)
};

struct OutputSpec {
  std::string directory = "certspec-out";
  std::vector<std::string> formats{"mtx", "json", "csv"};
  std::size_t sweep_points = 101;  // bound-sweep CSV points per dimension; 0 disables
  std::size_t grid_points = 50;    // pseudospectra CSV grid per dimension
};

struct VerifySpec {
  bool enabled = false;
  std::size_t points_per_dim = 1000;
  std::size_t max_points = 100000;
};

struct RunConfig {
  ProblemSpec problem;
  FrameworkConfig framework;
  SvConfig sv;
  HybridConfig hybrid;
  OutputSpec output;
  VerifySpec verify;
  std::uint64_t seed = 1;
  std::string base_dir = ".";  // directory of the config file; not serialized

  std::string resolve(const std::string& path) const {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).lexically_normal().string();
  }
  bool wants(const std::string& format) const {
    return std::find(output.formats.begin(), output.formats.end(), format) != output.formats.end();
  }
};

namespace cfgdetail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename E>
struct EnumNames;

template <>
struct EnumNames<RunKind> {
  static constexpr std::pair<RunKind, const char*> map[] = {
      {RunKind::Eig, "eig"}, {RunKind::Sv, "sv"}, {RunKind::Hybrid, "hybrid"}, {RunKind::Pseudospectra, "pseudospectra"}};
};
template <>
struct EnumNames<ErrorMode> {
  static constexpr std::pair<ErrorMode, const char*> map[] = {{ErrorMode::Absolute, "absolute"},
                                                              {ErrorMode::Relative, "relative"}};
};
template <>
struct EnumNames<InitMode> {
  static constexpr std::pair<InitMode, const char*> map[] = {{InitMode::Center, "center"}, {InitMode::Grid, "grid"}};
};
template <>
struct EnumNames<LbMode> {
  static constexpr std::pair<LbMode, const char*> map[] = {{LbMode::Plain, "plain"},
                                                           {LbMode::Scm, "scm"},
                                                           {LbMode::SharperMax, "sharper-max"},
                                                           {LbMode::RunningMax, "running-max"}};
};
template <>
struct EnumNames<OptMethod> {
  static constexpr std::pair<OptMethod, const char*> map[] = {{OptMethod::Lipschitz, "lipschitz"},
                                                              {OptMethod::Mesh, "mesh"}};
};

}  // namespace cfgdetail

template <typename E>
const char* enum_name(E e) {
  for (const auto& [v, s] : cfgdetail::EnumNames<E>::map)
    if (v == e) return s;
  return "?";
}

template <typename E>
E enum_parse(const std::string& text, const std::string& where) {
  std::string choices;
  for (const auto& [v, s] : cfgdetail::EnumNames<E>::map) {
    if (text == s) return v;
    choices += std::string(choices.empty() ? "" : ", ") + s;
  }
  throw ConfigError(where + ": '" + text + "' is not one of " + choices);
}

namespace cfgdetail {

template <typename E>
void get_enum(const json& j, const char* key, E& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a string");
  out = enum_parse<E>(j.at(key).get<std::string>(), where + "." + key);
}

inline ParamBox parse_box(const json& j, const std::string& where) {
  check_keys(j, where, {"lower", "upper"});
  std::vector<double> lo, up;
  get(j, "lower", lo, where);
  get(j, "upper", up, where);
  return ParamBox(lo, up);
}

inline json box_json(const ParamBox& b) { return {{"lower", b.lower()}, {"upper", b.upper()}}; }

inline void parse_ell(const json& j, EllPolicy& e, const std::string& where) {
  check_keys(j, where, {"dynamic", "fixed", "gap_threshold", "max"});
  get(j, "dynamic", e.dynamic, where);
  get(j, "fixed", e.fixed, where);
  get(j, "gap_threshold", e.gap_threshold, where);
  get(j, "max", e.ell_max, where);
}

inline json ell_json(const EllPolicy& e) {
  return {{"dynamic", e.dynamic}, {"fixed", e.fixed}, {"gap_threshold", e.gap_threshold}, {"max", e.ell_max}};
}

inline void parse_opt(const json& j, OptimizerSettings& o, const std::string& where) {
  check_keys(j, where, {"method", "tol", "rel_tol", "gamma", "max_evals", "mesh_points", "seed"});
  get_enum(j, "method", o.method, where);
  get(j, "tol", o.tol, where);
  get(j, "rel_tol", o.rel_tol, where);
  get(j, "gamma", o.gamma, where);
  get(j, "max_evals", o.max_evals, where);
  get(j, "mesh_points", o.mesh_points, where);
  get(j, "seed", o.seed, where);
}

inline json opt_json(const OptimizerSettings& o) {
  return {{"method", enum_name(o.method)}, {"tol", o.tol},         {"rel_tol", o.rel_tol},
          {"gamma", o.gamma},              {"max_evals", o.max_evals}, {"mesh_points", o.mesh_points},
          {"seed", o.seed}};
}

inline void parse_framework(const json& j, FrameworkConfig& f, const std::string& where) {
  check_keys(j, where,
             {"epsilon", "error_mode", "ell", "r", "init", "init_grid", "init_points", "lb_mode", "history_window",
              "compute_scm", "rho_zero_machine", "rho_zero_reldist", "max_outer_iters", "probe_points", "optimizer"});
  get(j, "epsilon", f.epsilon, where);
  get_enum(j, "error_mode", f.error_mode, where);
  if (j.contains("ell")) parse_ell(j.at("ell"), f.ell, where + ".ell");
  get(j, "r", f.r, where);
  get_enum(j, "init", f.init, where);
  get(j, "init_grid", f.init_grid, where);
  get(j, "init_points", f.init_points, where);
  get_enum(j, "lb_mode", f.lb_mode, where);
  get(j, "history_window", f.history_window, where);
  get(j, "compute_scm", f.compute_scm, where);
  get(j, "rho_zero_machine", f.rho_zero_machine, where);
  get(j, "rho_zero_reldist", f.rho_zero_reldist, where);
  get(j, "max_outer_iters", f.max_outer_iters, where);
  get(j, "probe_points", f.probe_points, where);
  if (j.contains("optimizer")) parse_opt(j.at("optimizer"), f.opt, where + ".optimizer");
}

inline json framework_json(const FrameworkConfig& f) {
  return {{"epsilon", f.epsilon},
          {"error_mode", enum_name(f.error_mode)},
          {"ell", ell_json(f.ell)},
          {"r", f.r},
          {"init", enum_name(f.init)},
          {"init_grid", f.init_grid},
          {"init_points", f.init_points},
          {"lb_mode", enum_name(f.lb_mode)},
          {"history_window", f.history_window},
          {"compute_scm", f.compute_scm},
          {"rho_zero_machine", f.rho_zero_machine},
          {"rho_zero_reldist", f.rho_zero_reldist},
          {"max_outer_iters", f.max_outer_iters},
          {"probe_points", f.probe_points},
          {"optimizer", opt_json(f.opt)}};
}

inline void parse_sv(const json& j, SvConfig& s, const std::string& where) {
  check_keys(j, where, {"epsilon", "error_mode", "ell", "init", "init_grid", "init_points", "max_outer_iters", "optimizer"});
  get(j, "epsilon", s.epsilon, where);
  get_enum(j, "error_mode", s.error_mode, where);
  if (j.contains("ell")) parse_ell(j.at("ell"), s.ell, where + ".ell");
  get_enum(j, "init", s.init, where);
  get(j, "init_grid", s.init_grid, where);
  get(j, "init_points", s.init_points, where);
  get(j, "max_outer_iters", s.max_outer_iters, where);
  if (j.contains("optimizer")) parse_opt(j.at("optimizer"), s.opt, where + ".optimizer");
}

inline json sv_json(const SvConfig& s) {
  return {{"epsilon", s.epsilon},       {"error_mode", enum_name(s.error_mode)}, {"ell", ell_json(s.ell)},
          {"init", enum_name(s.init)},  {"init_grid", s.init_grid},             {"init_points", s.init_points},
          {"max_outer_iters", s.max_outer_iters}, {"optimizer", opt_json(s.opt)}};
}

inline void parse_generator(const json& j, GeneratorSpec& g, const std::string& where) {
  check_keys(j, where, {"type", "n", "kappa", "p", "density", "cluster", "spread", "sigma", "rate", "radius", "seed"});
  if (!j.contains("type")) throw ConfigError(where + ": missing 'type'");
  get(j, "type", g.type, where);
  get(j, "n", g.n, where);
  get(j, "kappa", g.kappa, where);
  get(j, "p", g.p, where);
  get(j, "density", g.density, where);
  get(j, "cluster", g.cluster, where);
  get(j, "spread", g.spread, where);
  get(j, "sigma", g.sigma, where);
  get(j, "rate", g.rate, where);
  get(j, "radius", g.radius, where);
  if (j.contains("seed")) g.seed = j.at("seed").get<std::uint64_t>();
}

inline json generator_json(const GeneratorSpec& g) {
  json j = {{"type", g.type},       {"n", g.n},         {"kappa", g.kappa},   {"p", g.p},
            {"density", g.density}, {"cluster", g.cluster}, {"spread", g.spread}, {"sigma", g.sigma},
            {"rate", g.rate},       {"radius", g.radius}};
  if (g.seed) j["seed"] = *g.seed;
  return j;
}

}  // namespace cfgdetail

/// Parses a run configuration; relative matrix paths resolve against `base_dir`.
inline RunConfig parse_config(const json& j, const std::string& base_dir = ".", bool check_paths = true) {
  using namespace cfgdetail;
  RunConfig c;
  c.base_dir = base_dir;
  check_keys(j, "config", {"problem", "framework", "sv", "hybrid", "output", "verify", "seed"});
  get(j, "seed", c.seed, "config");
  if (!j.contains("problem")) throw ConfigError("config: missing 'problem' section");
  const json& p = j.at("problem");
  check_keys(p, "problem", {"kind", "terms", "generator", "matrix", "box"});
  get_enum(p, "kind", c.problem.kind, "problem");
  if (p.contains("terms")) {
    if (!p.at("terms").is_array()) throw ConfigError("problem.terms: expected a list");
    for (std::size_t k = 0; k < p.at("terms").size(); ++k) {
      const json& t = p.at("terms")[k];
      const std::string where = "problem.terms[" + std::to_string(k) + "]";
      check_keys(t, where, {"theta", "matrix", "hermitian"});
      TermSpec ts;
      if (!t.contains("theta") || !t.contains("matrix")) throw ConfigError(where + ": needs 'theta' and 'matrix'");
      get(t, "theta", ts.theta, where);
      get(t, "matrix", ts.matrix, where);
      get(t, "hermitian", ts.hermitian, where);
      c.problem.terms.push_back(ts);
    }
  }
  if (p.contains("generator")) {
    GeneratorSpec g;
    parse_generator(p.at("generator"), g, "problem.generator");
    c.problem.generator = g;
  }
  get(p, "matrix", c.problem.matrix, "problem");
  if (p.contains("box")) c.problem.box = parse_box(p.at("box"), "problem.box");

  const int sources = !c.problem.terms.empty() + c.problem.generator.has_value() + !c.problem.matrix.empty();
  if (sources != 1) throw ConfigError("problem: give exactly one of 'terms', 'generator', 'matrix'");
  if (!c.problem.matrix.empty() && c.problem.kind != RunKind::Pseudospectra)
    throw ConfigError("problem.matrix is only used by kind 'pseudospectra'");
  if (!c.problem.terms.empty() && !c.problem.box) throw ConfigError("problem: term files need a 'box'");
  if (c.problem.kind == RunKind::Pseudospectra && !c.problem.box)
    throw ConfigError("problem: pseudospectra need a 'box' region over (Re z, Im z)");
  if (check_paths) {
    for (const auto& t : c.problem.terms)
      if (!std::filesystem::exists(c.resolve(t.matrix))) throw IoError("matrix file not found: '" + c.resolve(t.matrix) + "'");
    if (!c.problem.matrix.empty() && !std::filesystem::exists(c.resolve(c.problem.matrix)))
      throw IoError("matrix file not found: '" + c.resolve(c.problem.matrix) + "'");
  }

  if (j.contains("framework")) parse_framework(j.at("framework"), c.framework, "framework");
  if (j.contains("sv")) parse_sv(j.at("sv"), c.sv, "sv");
  if (j.contains("hybrid")) {
    const json& h = j.at("hybrid");
    check_keys(h, "hybrid", {"eps_hat", "rho_zero_machine", "rho_zero_reldist", "stage1", "stage2"});
    get(h, "eps_hat", c.hybrid.eps_hat, "hybrid");
    get(h, "rho_zero_machine", c.hybrid.rho_zero_machine, "hybrid");
    get(h, "rho_zero_reldist", c.hybrid.rho_zero_reldist, "hybrid");
    if (h.contains("stage1")) parse_sv(h.at("stage1"), c.hybrid.stage1, "hybrid.stage1");
    if (h.contains("stage2")) parse_framework(h.at("stage2"), c.hybrid.stage2, "hybrid.stage2");
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, "output", {"directory", "formats", "sweep_points", "grid_points"});
    get(o, "directory", c.output.directory, "output");
    get(o, "formats", c.output.formats, "output");
    get(o, "sweep_points", c.output.sweep_points, "output");
    get(o, "grid_points", c.output.grid_points, "output");
    for (const auto& f : c.output.formats)
      if (f != "mtx" && f != "json" && f != "csv") throw ConfigError("output.formats: unknown format '" + f + "'");
  }
  if (j.contains("verify")) {
    const json& v = j.at("verify");
    check_keys(v, "verify", {"enabled", "points_per_dim", "max_points"});
    get(v, "enabled", c.verify.enabled, "verify");
    get(v, "points_per_dim", c.verify.points_per_dim, "verify");
    get(v, "max_points", c.verify.max_points, "verify");
  }
  c.framework.validate();
  c.sv.validate();
  c.hybrid.validate();
  return c;
}

inline json to_json(const RunConfig& c) {
  using namespace cfgdetail;
  json p = {{"kind", enum_name(c.problem.kind)}};
  if (!c.problem.terms.empty()) {
    json terms = json::array();
    for (const auto& t : c.problem.terms) terms.push_back({{"theta", t.theta}, {"matrix", t.matrix}, {"hermitian", t.hermitian}});
    p["terms"] = terms;
  }
  if (c.problem.generator) p["generator"] = generator_json(*c.problem.generator);
  if (!c.problem.matrix.empty()) p["matrix"] = c.problem.matrix;
  if (c.problem.box) p["box"] = box_json(*c.problem.box);
  return {{"problem", p},
          {"framework", framework_json(c.framework)},
          {"sv", sv_json(c.sv)},
          {"hybrid",
           {{"eps_hat", c.hybrid.eps_hat},
            {"rho_zero_machine", c.hybrid.rho_zero_machine},
            {"rho_zero_reldist", c.hybrid.rho_zero_reldist},
            {"stage1", sv_json(c.hybrid.stage1)},
            {"stage2", framework_json(c.hybrid.stage2)}}},
          {"output",
           {{"directory", c.output.directory},
            {"formats", c.output.formats},
            {"sweep_points", c.output.sweep_points},
            {"grid_points", c.output.grid_points}}},
          {"verify",
           {{"enabled", c.verify.enabled}, {"points_per_dim", c.verify.points_per_dim}, {"max_points", c.verify.max_points}}},
          {"seed", c.seed}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline RunConfig load_config(const std::string& path) {
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_config(read_json_file(path), base.empty() ? "." : base);
}

inline void save_config(const RunConfig& c, const std::string& path) { write_json_file(path, to_json(c)); }

}  // namespace certspec
