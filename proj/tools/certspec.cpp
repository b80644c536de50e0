#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "certspec/certspec.hpp"

using namespace certspec;

namespace {

Point parse_point(const std::string& text) {
  Point mu;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      mu.push_back(std::stod(part, &used));
      if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw ConfigError("--mu: cannot parse '" + text + "' as comma-separated numbers");
    }
  }
  if (mu.empty()) throw ConfigError("--mu: empty point");
  return mu;
}

void apply_overrides(RunConfig& c, const std::string& out, std::optional<std::uint64_t> seed, const std::string& mode,
                     std::size_t mesh) {
  if (!out.empty()) c.output.directory = out;
  if (seed) c.seed = *seed;
  if (!mode.empty()) c.problem.kind = enum_parse<RunKind>(mode, "--mode");
  if (mesh > 0) {
    c.verify.enabled = true;
    c.verify.points_per_dim = mesh;
  }
}

void report(const BuildResult& r) {
  std::cout << "status: " << r.status << (r.certified ? " (certified)" : " (not certified)") << "\n"
            << "dimension: " << r.dim << "\niterations: " << r.iterations << "\nmodel: " << r.model_dir << "\n";
}

template <typename Scalar>
int eval_model(const std::string& dir, const std::vector<std::string>& mus, std::size_t mesh, const std::string& out) {
  const auto model = load_model<Scalar>(dir);
  std::vector<Point> pts;
  for (const auto& s : mus) pts.push_back(parse_point(s));
  if (mesh > 0) {
    auto g = grid_points(model.box, mesh);
    pts.insert(pts.end(), g.begin(), g.end());
  }
  if (pts.empty()) throw ConfigError("eval: give --mu or --mesh");
  const auto rows = cmd_eval(model, pts);
  if (out.empty()) {
    write_eval_csv(std::cout, rows, model.kind, model.box.dim());
  } else {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write '" + out + "'");
    write_eval_csv(f, rows, model.kind, model.box.dim());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified reduced bounds for smallest eigenvalues and singular values of parametric matrices"};
  app.require_subcommand(1);

  std::string config, out, mode, model_dir, eval_out;
  std::optional<std::uint64_t> seed;
  std::size_t mesh = 0;
  std::vector<std::string> mus;

  auto* build = app.add_subcommand("build", "run the configured framework and write a result bundle");
  build->add_option("--config", config, "run configuration (JSON)")->required();
  build->add_option("--out", out, "output directory (overrides output.directory)");
  build->add_option("--seed", seed, "generator seed (overrides seed)");
  build->add_option("--mode", mode, "problem kind: eig | sv | hybrid | pseudospectra");
  build->add_option("--mesh", mesh, "verify afterwards on this many points per dimension");

  auto* ps = app.add_subcommand("pseudospectra", "certified pseudospectra of the matrix in the config");
  ps->add_option("--config", config, "run configuration (JSON)")->required();
  ps->add_option("--out", out, "output directory");
  ps->add_option("--seed", seed, "generator seed");
  ps->add_option("--mesh", mesh, "CSV grid points per dimension");

  auto* ev = app.add_subcommand("eval", "evaluate a stored reduced model");
  ev->add_option("--model", model_dir, "reduced-model directory")->required();
  ev->add_option("--mu", mus, "parameter point, comma-separated (repeatable)");
  ev->add_option("--mesh", mesh, "uniform grid with this many points per dimension");
  ev->add_option("--out", eval_out, "CSV file (default: stdout)");

  auto* ver = app.add_subcommand("verify", "compare a stored model with exact values on a mesh");
  std::size_t max_points = 100000;
  ver->add_option("--model", model_dir, "reduced-model directory")->required();
  ver->add_option("--config", config, "configuration the model was built from")->required();
  ver->add_option("--mesh", mesh, "points per dimension (default 1000)");
  ver->add_option("--max-points", max_points, "total point cap");
  ver->add_option("--out", eval_out, "report file (JSON; default: stdout)");
  ver->add_option("--seed", seed, "generator seed");

  auto* gen = app.add_subcommand("gen", "write seeded synthetic term matrices and a matching config");
  GeneratorSpec g;
  std::uint64_t gen_seed = 1;
  gen->add_option("--type", g.type, "exp_linear_pair | hermitian_family | sparse_family | clustered | black_scholes | general_family")
      ->required();
  gen->add_option("--n", g.n, "matrix size");
  gen->add_option("--kappa", g.kappa, "number of terms");
  gen->add_option("--p", g.p, "number of parameters");
  gen->add_option("--density", g.density, "sparse_family density");
  gen->add_option("--cluster", g.cluster, "clustered: near-degenerate eigenvalue count");
  gen->add_option("--spread", g.spread, "clustered: cluster width");
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--mode", mode, "problem kind written to problem.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitError;
  }

  try {
    if (*build || *ps) {
      RunConfig c = load_config(config);
      apply_overrides(c, out, seed, *ps ? "pseudospectra" : mode, *ps ? 0 : mesh);
      if (*ps && mesh > 0) c.output.grid_points = mesh;
      const BuildResult r = cmd_build(c);
      report(r);
      return r.exit_code;
    }
    if (*ev) {
      return model_is_complex(model_dir) ? eval_model<Complex>(model_dir, mus, mesh, eval_out)
                                         : eval_model<double>(model_dir, mus, mesh, eval_out);
    }
    if (*ver) {
      RunConfig c = load_config(config);
      if (seed) c.seed = *seed;
      const VerifyReport rep = cmd_verify(model_dir, c, mesh > 0 ? mesh : 1000, max_points);
      if (eval_out.empty()) std::cout << rep.to_json().dump(2) << "\n";
      else write_json_file(eval_out, rep.to_json());
      std::cerr << rep.points << " points, max error " << rep.max_error << ", " << rep.violations.size() << " violation(s)\n";
      return rep.passed() ? kExitCertified : kExitUncertified;
    }
    if (*gen) {
      RunKind kind = RunKind::Eig;
      if (!mode.empty()) kind = enum_parse<RunKind>(mode, "--mode");
      for (const auto& f : gen_synthetic(g, gen_seed, out, kind)) std::cout << f << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
