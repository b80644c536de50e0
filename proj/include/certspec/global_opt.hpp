#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "certspec/diag.hpp"
#include "certspec/param_box.hpp"
#include "certspec/rng.hpp"

namespace certspec {

using Objective = std::function<double(const Point&)>;

struct OptProblem {
  Objective objective;
  ParamBox box;
  double lipschitz_gamma = 0.0;  // <= 0: estimated from samples
  double tol = 1e-6;             // absolute gap tolerance
  double rel_tol = 0.0;          // gap may also be rel_tol * |value|
  std::size_t max_evals = 20000;
  std::uint64_t seed = 1;
  bool adapt_gamma = true;       // raise gamma when observations contradict it
  bool quick_constant = true;    // accept gamma = 0 after 2^p flat probes, skipping the pairs
};

enum class Termination { Gap, Budget, Mesh };

struct OptOutcome {
  Point argmax;
  double value = -std::numeric_limits<double>::infinity();
  double upper_certificate = std::numeric_limits<double>::infinity();
  std::size_t evals_used = 0;
  Termination terminated_by = Termination::Budget;
  double gamma = 0.0;
};

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Gap: return "gap";
    case Termination::Budget: return "budget";
    case Termination::Mesh: return "mesh";
  }
  return "?";
}

/// Chebyshev extreme points on [lo, hi], ascending, endpoints included.
inline std::vector<double> chebyshev_points(double lo, double hi, std::size_t n) {
  std::vector<double> x(n);
  if (n == 1) {
    x[0] = 0.5 * (lo + hi);
    return x;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double t = -std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(n - 1));
    x[k] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
  }
  x.front() = lo;
  x.back() = hi;
  return x;
}

/// Maximum over a Chebyshev tensor mesh; ties go to the lexicographically smallest point.
inline OptOutcome mesh_maximize(const Objective& f, const ParamBox& box, std::size_t points_per_dim) {
  if (points_per_dim < 2) throw ConfigError("mesh needs at least 2 points per dimension");
  const std::size_t p = box.dim();
  std::vector<std::vector<double>> axes(p);
  for (std::size_t k = 0; k < p; ++k) axes[k] = chebyshev_points(box.lower(k), box.upper(k), points_per_dim);
  OptOutcome out;
  out.terminated_by = Termination::Mesh;
  out.upper_certificate = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> idx(p, 0);
  for (;;) {
    Point mu(p);
    for (std::size_t k = 0; k < p; ++k) mu[k] = axes[k][idx[k]];
    const double v = f(mu);
    ++out.evals_used;
    if (!std::isfinite(v)) throw NumericalError("objective is not finite on the mesh");
    if (v > out.value) {
      out.value = v;
      out.argmax = mu;
    }
    std::size_t k = p;
    while (k-- > 0) {
      if (++idx[k] < points_per_dim) break;
      idx[k] = 0;
    }
    if (k == static_cast<std::size_t>(-1)) break;
  }
  return out;
}

namespace detail {

constexpr std::size_t kMaxOptDim = 4;

// Compact box record: center, half-widths, center value.
struct OptBox {
  std::array<double, kMaxOptDim> c{};
  std::array<double, kMaxOptDim> h{};
  double fc = 0.0;
  double radius = 0.0;  // half diagonal
  double bound = 0.0;   // never above the parent's bound
  std::uint32_t id = 0;
};

inline double half_diagonal(const OptBox& b, std::size_t p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p; ++k) s += b.h[k] * b.h[k];
  return std::sqrt(s);
}

}  // namespace detail

/// Lipschitz branch and bound: every box carries f(center) + gamma * half-diagonal
/// as an upper bound of f on the box; the box with the largest bound (earliest
/// created on ties) is bisected across its longest edge.
inline OptOutcome maximize(const OptProblem& prob) {
  const ParamBox& box = prob.box;
  const std::size_t p = box.dim();
  if (!(prob.tol > 0)) throw ConfigError("optimizer tolerance must be positive");
  const std::size_t corners = std::size_t{1} << std::min<std::size_t>(p, 20);
  if (prob.max_evals < corners + 1) throw ConfigError("optimizer budget must be at least 2^p + 1");
  if (p > detail::kMaxOptDim) {
    warn("Lipschitz optimizer supports up to 4 parameters; using a Chebyshev mesh instead");
    std::size_t per = 2;
    while (std::pow(static_cast<double>(per + 1), static_cast<double>(p)) <= static_cast<double>(prob.max_evals)) ++per;
    return mesh_maximize(prob.objective, box, per);
  }

  OptOutcome out;
  Point scratch(p);
  auto eval = [&](const Point& mu) {
    const double v = prob.objective(mu);
    ++out.evals_used;
    if (!std::isfinite(v)) throw NumericalError("objective is not finite at a box point");
    if (v > out.value) {
      out.value = v;
      out.argmax = mu;
    }
    return v;
  };
  auto eval_center = [&](const detail::OptBox& b) {
    for (std::size_t k = 0; k < p; ++k) scratch[k] = b.c[k];
    return eval(scratch);
  };

  std::vector<detail::OptBox> boxes;
  detail::OptBox root;
  for (std::size_t k = 0; k < p; ++k) {
    root.c[k] = 0.5 * (box.lower(k) + box.upper(k));
    root.h[k] = 0.5 * box.width(k);
  }
  root.radius = detail::half_diagonal(root, p);
  root.fc = eval_center(root);
  const Point root_c = box.center();

  double gamma = prob.lipschitz_gamma;
  if (gamma <= 0) {
    // 2^p random probes plus 50p random pairs. Random rather than corner probes,
    // since corners and the center are typical sample points where a surrogate
    // vanishes. gamma = 0 only if every probe matches the center exactly; with
    // quick_constant the pairs are skipped once the 2^p probes saw no slope.
    Rng rng(prob.seed);
    double q = 0.0;
    auto probe = [&](const Point& v, double fv) {
      const double dist = distance(v, root_c);
      if (dist > 0) q = std::max(q, std::abs(fv - root.fc) / dist);
    };
    for (std::size_t t = 0; t < corners; ++t) {
      Point v(p);
      for (std::size_t k = 0; k < p; ++k) v[k] = rng.uniform(box.lower(k), box.upper(k));
      probe(v, eval(v));
    }
    const std::size_t pairs = (q == 0.0 && prob.quick_constant) ? 0 : 50 * p;
    for (std::size_t t = 0; t < pairs && out.evals_used + 2 <= prob.max_evals; ++t) {
      Point a(p), b(p);
      for (std::size_t k = 0; k < p; ++k) {
        a[k] = rng.uniform(box.lower(k), box.upper(k));
        b[k] = rng.uniform(box.lower(k), box.upper(k));
      }
      const double fa = eval(a), fb = eval(b);
      probe(a, fa);
      probe(b, fb);
      const double dist = distance(a, b);
      if (dist > 0) q = std::max(q, std::abs(fa - fb) / dist);
    }
    gamma = 3.0 * q;
  }

  root.bound = root.fc + gamma * root.radius;
  boxes.push_back(root);
  auto bound = [&](std::uint32_t i) { return boxes[i].bound; };
  auto cmp = [&](std::uint32_t a, std::uint32_t b) {
    const double ba = bound(a), bb = bound(b);
    if (ba != bb) return ba < bb;
    return boxes[a].id > boxes[b].id;
  };
  std::vector<std::uint32_t> heap{0};
  double closed_fc = -std::numeric_limits<double>::infinity();  // boxes too small to split
  double closed_r = 0.0;
  const double min_radius = 1e-15 * std::max(root.radius, 1e-300);

  auto certificate = [&]() {
    double u = out.value;
    if (closed_r > 0 || std::isfinite(closed_fc)) u = std::max(u, closed_fc + gamma * closed_r);
    if (!heap.empty()) u = std::max(u, bound(heap.front()));
    return u;
  };

  for (;;) {
    const double ucert = certificate();
    if (ucert - out.value <= std::max(prob.tol, prob.rel_tol * std::abs(out.value))) {
      out.upper_certificate = ucert;
      out.terminated_by = Termination::Gap;
      break;
    }
    if (heap.empty() || out.evals_used + 2 > prob.max_evals) {
      out.upper_certificate = ucert;
      out.terminated_by = Termination::Budget;
      break;
    }
    std::pop_heap(heap.begin(), heap.end(), cmp);
    const std::uint32_t top = heap.back();
    heap.pop_back();
    if (boxes[top].radius <= min_radius) {
      closed_fc = std::max(closed_fc, boxes[top].fc);
      closed_r = std::max(closed_r, boxes[top].radius);
      continue;
    }
    const detail::OptBox parent = boxes[top];
    std::size_t axis = 0;
    for (std::size_t k = 1; k < p; ++k)
      if (parent.h[k] > parent.h[axis]) axis = k;
    bool raised = false;
    for (int side = 0; side < 2; ++side) {
      detail::OptBox ch = parent;
      ch.h[axis] = 0.5 * parent.h[axis];
      ch.c[axis] = parent.c[axis] + (side == 0 ? -ch.h[axis] : ch.h[axis]);
      ch.radius = detail::half_diagonal(ch, p);
      ch.fc = eval_center(ch);
      ch.id = static_cast<std::uint32_t>(boxes.size());
      if (prob.adapt_gamma) {
        const double qv = std::abs(ch.fc - parent.fc) / ch.h[axis];
        if (qv > gamma) {
          gamma = 2.0 * qv;
          raised = true;
        }
      }
      ch.bound = std::min(ch.fc + gamma * ch.radius, parent.bound);
      boxes.push_back(ch);
      heap.push_back(ch.id);
      if (!raised) std::push_heap(heap.begin(), heap.end(), cmp);
    }
    if (raised) {
      // Inherited bounds were computed with the old gamma.
      for (std::uint32_t i : heap) boxes[i].bound = boxes[i].fc + gamma * boxes[i].radius;
      std::make_heap(heap.begin(), heap.end(), cmp);
    }
  }
  out.gamma = gamma;
  return out;
}

}  // namespace certspec
