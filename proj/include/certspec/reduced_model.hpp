#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "certspec/config.hpp"
#include "certspec/matrix_market.hpp"

namespace certspec {

/// Eigenvalue models store V^* A_m V and return lambda_min^V(mu).
/// Singular-value models store R_m with A_m V = Q R_m and return sigma_min(A(mu) V).
enum class ModelKind { Eigenvalue, SingularValue };

inline const char* to_string(ModelKind k) { return k == ModelKind::Eigenvalue ? "eigenvalue" : "singular-value"; }

/// Online part of a run: small term matrices, coefficient texts, box and basis.
template <typename Scalar>
struct ReducedModel {
  ModelKind kind = ModelKind::Eigenvalue;
  std::vector<ThetaExpr> thetas;
  ParamBox box;
  std::vector<Mat<Scalar>> terms;
  Mat<Scalar> basis;
  json meta = json::object();  // run status, tolerance, logged values, ...

  Eigen::Index dim() const { return basis.cols(); }

  RealVec theta(const Point& mu) const {
    if (mu.size() != box.dim()) throw DimensionError("parameter point has wrong dimension");
    RealVec th(static_cast<Eigen::Index>(thetas.size()));
    for (std::size_t m = 0; m < thetas.size(); ++m) th(static_cast<Eigen::Index>(m)) = thetas[m](mu);
    return th;
  }

  /// lambda_min^V(mu) or sigma_min(A(mu) V); no check against the box.
  double value(const Point& mu) const {
    const RealVec th = theta(mu);
    if (kind == ModelKind::Eigenvalue) return reduced_hermitian_eig(terms, th).eigenvalues()(0);
    return reduced_sigma_min(terms, th);
  }

  /// Reduced data for an arbitrary basis, computed exactly as the in-run evaluators do.
  static ReducedModel from_basis(const AffineOperator<Scalar>& op, const Mat<Scalar>& v, ModelKind kind) {
    if (v.cols() == 0) throw DimensionError("empty basis");
    ReducedModel m;
    m.kind = kind;
    m.box = op.box();
    m.basis = v;
    for (const auto& t : op.terms()) m.thetas.push_back(t.theta);
    if (kind == ModelKind::Eigenvalue) {
      for (const auto& t : op.terms()) {
        Mat<Scalar> pm = v.adjoint() * t.matrix.times(v);
        m.terms.push_back(0.5 * (pm + pm.adjoint()));
      }
    } else {
      const Eigen::Index d = v.cols();
      Mat<Scalar> stack(v.rows(), static_cast<Eigen::Index>(op.kappa()) * d);
      for (std::size_t k = 0; k < op.kappa(); ++k) stack.middleCols(static_cast<Eigen::Index>(k) * d, d) = op.term(k).matrix.times(v);
      auto qr = detail::thin_qr(stack);
      for (std::size_t k = 0; k < op.kappa(); ++k) m.terms.push_back(qr.r.middleCols(static_cast<Eigen::Index>(k) * d, d));
    }
    return m;
  }
};

inline const char* field_name(bool complex) { return complex ? "complex" : "real"; }

template <typename Scalar>
void save_model(const ReducedModel<Scalar>& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  json meta = m.meta;
  meta["kind"] = to_string(m.kind);
  meta["field"] = field_name(is_complex_v<Scalar>);
  meta["params"] = m.box.dim();
  meta["box"] = {{"lower", m.box.lower()}, {"upper", m.box.upper()}};
  meta["dim"] = m.dim();
  meta["rows"] = m.basis.rows();
  json terms = json::array();
  for (std::size_t k = 0; k < m.terms.size(); ++k) {
    const std::string file = "term_" + std::to_string(k + 1) + ".mtx";
    mm::write_array_file((std::filesystem::path(dir) / file).string(), m.terms[k]);
    terms.push_back({{"theta", m.thetas[k].to_string()}, {"matrix", file}});
  }
  meta["terms"] = terms;
  mm::write_array_file((std::filesystem::path(dir) / "basis.mtx").string(), m.basis);
  write_json_file((std::filesystem::path(dir) / "meta.json").string(), meta);
}

inline json read_model_meta(const std::string& dir) {
  const auto path = (std::filesystem::path(dir) / "meta.json").string();
  if (!std::filesystem::exists(path)) throw IoError("not a reduced-model directory (no meta.json): '" + dir + "'");
  return read_json_file(path);
}

inline bool model_is_complex(const std::string& dir) { return read_model_meta(dir).value("field", "real") == "complex"; }

template <typename Scalar>
ReducedModel<Scalar> load_model(const std::string& dir) {
  const json meta = read_model_meta(dir);
  ReducedModel<Scalar> m;
  try {
    const std::string kind = meta.at("kind").get<std::string>();
    if (kind == "eigenvalue") m.kind = ModelKind::Eigenvalue;
    else if (kind == "singular-value") m.kind = ModelKind::SingularValue;
    else throw ConfigError("reduced model: unknown kind '" + kind + "'");
    if ((meta.at("field").get<std::string>() == "complex") != is_complex_v<Scalar>)
      throw ConfigError("reduced model field does not match the requested scalar type");
    const auto p = meta.at("params").get<std::size_t>();
    m.box = ParamBox(meta.at("box").at("lower").get<std::vector<double>>(), meta.at("box").at("upper").get<std::vector<double>>());
    for (const auto& t : meta.at("terms")) {
      m.thetas.push_back(ThetaExpr::parse(t.at("theta").get<std::string>(), p));
      const auto file = (std::filesystem::path(dir) / t.at("matrix").get<std::string>()).string();
      m.terms.push_back(mm::to_dense<Scalar>(mm::read_file(file)));
    }
    m.basis = mm::to_dense<Scalar>(mm::read_file((std::filesystem::path(dir) / "basis.mtx").string()));
  } catch (const json::exception& e) {
    throw ConfigError("reduced model '" + dir + "': malformed meta.json: " + e.what());
  }
  if (m.terms.empty()) throw ConfigError("reduced model '" + dir + "' has no terms");
  m.meta = meta;
  return m;
}

}  // namespace certspec
