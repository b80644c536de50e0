#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "certspec/types.hpp"

namespace certspec::mm {

enum class Layout { Coordinate, Array };
enum class Field { Real, Complex };
enum class Symmetry { General, Symmetric, Hermitian };

struct Entry {
  Eigen::Index row;
  Eigen::Index col;
  Complex value;
};

/// Contents of a Matrix Market file with symmetric storage already expanded.
struct MarketData {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Layout layout = Layout::Coordinate;
  Field field = Field::Real;
  Symmetry symmetry = Symmetry::General;
  std::vector<Entry> entries;  // 0-based, full (both triangles)
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline MarketData read_stream(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(name + ": empty Matrix Market file");
  std::istringstream header(line);
  std::string banner, object, layout, field, symmetry;
  header >> banner >> object >> layout >> field >> symmetry;
  if (banner != "%%MatrixMarket" || detail::lower(object) != "matrix")
    throw IoError(name + ": missing %%MatrixMarket matrix header");

  MarketData out;
  layout = detail::lower(layout);
  field = detail::lower(field);
  symmetry = detail::lower(symmetry);
  if (layout == "coordinate") out.layout = Layout::Coordinate;
  else if (layout == "array") out.layout = Layout::Array;
  else throw IoError(name + ": unsupported layout '" + layout + "'");
  if (field == "real" || field == "double" || field == "integer") out.field = Field::Real;
  else if (field == "complex") out.field = Field::Complex;
  else throw IoError(name + ": unsupported field '" + field + "'");
  if (symmetry == "general") out.symmetry = Symmetry::General;
  else if (symmetry == "symmetric") out.symmetry = Symmetry::Symmetric;
  else if (symmetry == "hermitian") out.symmetry = Symmetry::Hermitian;
  else throw IoError(name + ": unsupported symmetry '" + symmetry + "'");

  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream sizes(line);
  long long nnz = 0;
  long long r = 0, c = 0;
  if (out.layout == Layout::Coordinate) {
    if (!(sizes >> r >> c >> nnz)) throw IoError(name + ": malformed size line");
  } else {
    if (!(sizes >> r >> c)) throw IoError(name + ": malformed size line");
  }
  if (r <= 0 || c <= 0) throw IoError(name + ": non-positive dimensions");
  out.rows = r;
  out.cols = c;
  const bool symmetric = out.symmetry != Symmetry::General;
  if (symmetric && r != c) throw IoError(name + ": symmetric storage requires a square matrix");

  auto read_value = [&](std::istream& is) {
    double re = 0, im = 0;
    if (!(is >> re)) throw IoError(name + ": truncated data");
    if (out.field == Field::Complex && !(is >> im)) throw IoError(name + ": truncated complex data");
    return Complex(re, im);
  };
  auto push = [&](Eigen::Index i, Eigen::Index j, Complex v) {
    out.entries.push_back({i, j, v});
    if (symmetric && i != j) {
      out.entries.push_back({j, i, out.symmetry == Symmetry::Hermitian ? std::conj(v) : v});
    }
  };

  if (out.layout == Layout::Coordinate) {
    out.entries.reserve(static_cast<std::size_t>(symmetric ? 2 * nnz : nnz));
    for (long long k = 0; k < nnz; ++k) {
      long long i = 0, j = 0;
      if (!(in >> i >> j)) throw IoError(name + ": truncated coordinate data");
      if (i < 1 || i > r || j < 1 || j > c) throw IoError(name + ": index out of range");
      Complex v = read_value(in);
      if (symmetric && j > i) throw IoError(name + ": symmetric storage must hold the lower triangle");
      push(i - 1, j - 1, v);
    }
  } else {
    // Column-major; symmetric arrays list the lower triangle column by column.
    for (long long j = 0; j < c; ++j) {
      for (long long i = symmetric ? j : 0; i < r; ++i) push(i, j, read_value(in));
    }
  }
  return out;
}

inline MarketData read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file '" + path + "'");
  return read_stream(in, path);
}

template <typename Scalar>
Scalar cast_entry(const Complex& v) {
  if constexpr (is_complex_v<Scalar>) return v;
  else return v.real();
}

template <typename Scalar>
SparseMat<Scalar> to_sparse(const MarketData& d) {
  std::vector<Eigen::Triplet<Scalar>> trip;
  trip.reserve(d.entries.size());
  for (const auto& e : d.entries) trip.emplace_back(e.row, e.col, cast_entry<Scalar>(e.value));
  SparseMat<Scalar> m(d.rows, d.cols);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

template <typename Scalar>
Mat<Scalar> to_dense(const MarketData& d) {
  Mat<Scalar> m = Mat<Scalar>::Zero(d.rows, d.cols);
  for (const auto& e : d.entries) m(e.row, e.col) += cast_entry<Scalar>(e.value);
  return m;
}

/// Writes a dense matrix in array layout (general storage, column-major).
template <typename Derived>
void write_array(std::ostream& out, const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  constexpr bool cplx = is_complex_v<Scalar>;
  out << "%%MatrixMarket matrix array " << (cplx ? "complex" : "real") << " general\n";
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if constexpr (cplx) out << detail::fmt(m(i, j).real()) << ' ' << detail::fmt(m(i, j).imag()) << '\n';
      else out << detail::fmt(m(i, j)) << '\n';
    }
  }
}

/// Writes a sparse matrix in coordinate layout. With `symmetry` other than
/// General only the lower triangle is emitted.
template <typename Scalar>
void write_coordinate(std::ostream& out, const SparseMat<Scalar>& m, Symmetry symmetry = Symmetry::General) {
  constexpr bool cplx = is_complex_v<Scalar>;
  const char* sym = symmetry == Symmetry::General ? "general"
                    : symmetry == Symmetry::Symmetric ? "symmetric"
                                                      : "hermitian";
  std::vector<Entry> entries;
  for (Eigen::Index i = 0; i < m.outerSize(); ++i) {
    for (typename SparseMat<Scalar>::InnerIterator it(m, i); it; ++it) {
      if (symmetry != Symmetry::General && it.col() > it.row()) continue;
      entries.push_back({it.row(), it.col(), Complex(it.value())});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  out << "%%MatrixMarket matrix coordinate " << (cplx ? "complex" : "real") << ' ' << sym << '\n';
  out << m.rows() << ' ' << m.cols() << ' ' << entries.size() << '\n';
  for (const auto& e : entries) {
    out << e.row + 1 << ' ' << e.col + 1 << ' ' << detail::fmt(e.value.real());
    if (cplx) out << ' ' << detail::fmt(e.value.imag());
    out << '\n';
  }
}

template <typename Derived>
void write_array_file(const std::string& path, const Eigen::MatrixBase<Derived>& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_array(out, m);
}

template <typename Scalar>
void write_coordinate_file(const std::string& path, const SparseMat<Scalar>& m,
                           Symmetry symmetry = Symmetry::General) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_coordinate(out, m, symmetry);
}

}  // namespace certspec::mm
