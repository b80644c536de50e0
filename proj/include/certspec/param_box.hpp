#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "certspec/types.hpp"

namespace certspec {

/// Axis-aligned compact parameter domain [lower_1, upper_1] x ... x [lower_p, upper_p].
class ParamBox {
 public:
  static constexpr double kMembershipSlack = 1e-12;

  ParamBox() = default;
  ParamBox(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.empty()) throw ConfigError("parameter box needs at least one dimension");
    if (lower_.size() != upper_.size())
      throw ConfigError("parameter box bounds have different lengths");
    for (std::size_t k = 0; k < lower_.size(); ++k) {
      if (!std::isfinite(lower_[k]) || !std::isfinite(upper_[k]) || lower_[k] > upper_[k])
        throw ConfigError("parameter box dimension " + std::to_string(k + 1) +
                          " has invalid bounds");
    }
  }

  std::size_t dim() const { return lower_.size(); }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  double lower(std::size_t k) const { return lower_[k]; }
  double upper(std::size_t k) const { return upper_[k]; }
  double width(std::size_t k) const { return upper_[k] - lower_[k]; }

  Point center() const {
    Point c(dim());
    for (std::size_t k = 0; k < dim(); ++k) c[k] = 0.5 * (lower_[k] + upper_[k]);
    return c;
  }

  /// Euclidean diameter.
  double diameter() const {
    double s = 0.0;
    for (std::size_t k = 0; k < dim(); ++k) s += width(k) * width(k);
    return std::sqrt(s);
  }

  bool contains(const Point& mu, double slack = kMembershipSlack) const {
    if (mu.size() != dim()) return false;
    for (std::size_t k = 0; k < dim(); ++k) {
      if (!(mu[k] >= lower_[k] - slack && mu[k] <= upper_[k] + slack)) return false;
    }
    return true;
  }

  Point clamp(Point mu) const {
    for (std::size_t k = 0; k < dim(); ++k) mu[k] = std::clamp(mu[k], lower_[k], upper_[k]);
    return mu;
  }

  friend bool operator==(const ParamBox&, const ParamBox&) = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

inline double distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

/// Uniform tensor grid with `per_dim` points per coordinate (lexicographic,
/// first coordinate slowest).
inline std::vector<Point> uniform_grid(const ParamBox& box, std::size_t per_dim) {
  const std::size_t p = box.dim();
  std::size_t total = 1;
  for (std::size_t k = 0; k < p; ++k) total *= per_dim;
  std::vector<Point> pts;
  pts.reserve(total);
  std::vector<std::size_t> idx(p, 0);
  for (std::size_t t = 0; t < total; ++t) {
    Point mu(p);
    for (std::size_t k = 0; k < p; ++k) {
      mu[k] = per_dim == 1 ? 0.5 * (box.lower(k) + box.upper(k))
                           : box.lower(k) + box.width(k) * static_cast<double>(idx[k]) /
                                                static_cast<double>(per_dim - 1);
    }
    pts.push_back(std::move(mu));
    for (std::size_t k = p; k-- > 0;) {
      if (++idx[k] < per_dim) break;
      idx[k] = 0;
    }
  }
  return pts;
}

}  // namespace certspec
