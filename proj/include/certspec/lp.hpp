#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "certspec/types.hpp"

namespace certspec {

/// min c^T y  subject to  lo <= y <= up  and  a_i^T y >= b_i.
struct BoxLp {
  RealVec c;
  RealVec lo;
  RealVec up;
  RealMat a;  // one constraint per row
  RealVec b;

  Eigen::Index vars() const { return c.size(); }
  Eigen::Index rows() const { return a.rows(); }
};

enum class LpStatus { Optimal, Infeasible };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  double value = std::numeric_limits<double>::quiet_NaN();
  RealVec minimizer;
  std::vector<int> active_constraints;  // tight half-spaces
  std::vector<int> active_lower;        // variables at their lower bound
  std::vector<int> active_upper;        // variables at their upper bound
  // Dual certificate: c = A^T pi + phi_lo - phi_up with pi, phi >= 0.
  RealVec pi;
  RealVec phi_lo;
  RealVec phi_up;
  double dual_value = std::numeric_limits<double>::quiet_NaN();
  // Conditioning diagnostic: kappa independent active rows (constraints first,
  // then +-e_m box rows) with the largest smallest singular value.
  std::vector<int> basis_rows;  // >= 0: constraint index, < 0: -(m+1) for box row m
  double basis_sigma_min = 0.0;
  int iterations = 0;
};

namespace detail {

inline void validate_lp(const BoxLp& lp) {
  const Eigen::Index k = lp.vars();
  if (k < 1) throw DimensionError("LP needs at least one variable");
  if (lp.lo.size() != k || lp.up.size() != k) throw DimensionError("LP bound vectors have wrong length");
  if (lp.a.rows() != lp.b.size() || (lp.a.rows() > 0 && lp.a.cols() != k))
    throw DimensionError("LP constraint matrix has wrong shape");
  for (Eigen::Index m = 0; m < k; ++m) {
    if (!(lp.lo(m) <= lp.up(m))) throw ConfigError("LP box has lo > up");
    if (!std::isfinite(lp.lo(m)) || !std::isfinite(lp.up(m)) || !std::isfinite(lp.c(m)))
      throw NumericalError("LP data not finite");
  }
  if (!lp.a.allFinite() || !lp.b.allFinite()) throw NumericalError("LP constraint data not finite");
}

/// Picks kappa linearly independent rows from the candidate set maximising the
/// smallest singular value (exhaustive when small, greedy otherwise).
inline void select_conditioned_basis(const BoxLp& lp, LpResult& res) {
  const Eigen::Index k = lp.vars();
  std::vector<int> cand;
  std::vector<RealVec> rows;
  for (int i : res.active_constraints) {
    cand.push_back(i);
    RealVec r = lp.a.row(i).transpose();
    rows.push_back(r / std::max(r.norm(), 1e-300));
  }
  for (int m : res.active_lower) {
    cand.push_back(-(m + 1));
    rows.push_back(RealVec::Unit(k, m));
  }
  for (int m : res.active_upper) {
    if (std::find(res.active_lower.begin(), res.active_lower.end(), m) != res.active_lower.end()) continue;
    cand.push_back(-(m + 1));
    rows.push_back(RealVec::Unit(k, m));
  }
  const std::size_t nc = cand.size();
  if (nc < static_cast<std::size_t>(k)) {
    res.basis_rows = cand;
    res.basis_sigma_min = 0.0;
    return;
  }
  auto sigma_min = [&](const std::vector<std::size_t>& pick) {
    RealMat m(static_cast<Eigen::Index>(pick.size()), k);
    for (std::size_t t = 0; t < pick.size(); ++t) m.row(static_cast<Eigen::Index>(t)) = rows[pick[t]].transpose();
    Eigen::JacobiSVD<RealMat> svd(m);
    return svd.singularValues()(svd.singularValues().size() - 1);
  };
  // Exhaustive over combinations when the count is modest.
  double combos = 1.0;
  for (Eigen::Index t = 0; t < k; ++t) combos *= static_cast<double>(nc - static_cast<std::size_t>(t)) / static_cast<double>(t + 1);
  std::vector<std::size_t> best;
  double best_s = -1.0;
  if (combos <= 2000.0) {
    std::vector<std::size_t> pick(static_cast<std::size_t>(k));
    for (std::size_t t = 0; t < pick.size(); ++t) pick[t] = t;
    for (;;) {
      const double s = sigma_min(pick);
      if (s > best_s * (1.0 + 1e-12)) {
        best_s = s;
        best = pick;
      }
      int t = static_cast<int>(k) - 1;
      while (t >= 0 && pick[static_cast<std::size_t>(t)] == nc - static_cast<std::size_t>(k) + static_cast<std::size_t>(t)) --t;
      if (t < 0) break;
      ++pick[static_cast<std::size_t>(t)];
      for (std::size_t u = static_cast<std::size_t>(t) + 1; u < pick.size(); ++u) pick[u] = pick[u - 1] + 1;
    }
  } else {
    std::vector<bool> used(nc, false);
    for (Eigen::Index t = 0; t < k; ++t) {
      std::size_t arg = nc;
      double arg_s = -1.0;
      for (std::size_t c = 0; c < nc; ++c) {
        if (used[c]) continue;
        auto trial = best;
        trial.push_back(c);
        const double s = sigma_min(trial);
        if (s > arg_s * (1.0 + 1e-12)) {
          arg_s = s;
          arg = c;
        }
      }
      used[arg] = true;
      best.push_back(arg);
      best_s = arg_s;
    }
  }
  res.basis_rows.clear();
  for (std::size_t t : best) res.basis_rows.push_back(cand[t]);
  res.basis_sigma_min = best_s;
}

}  // namespace detail

/// Bounded-variable dual simplex on a dense tableau. Structural columns are y,
/// then one surplus s_i >= 0 per half-space (a_i^T y - s_i = b_i). The
/// all-surplus basis with y at the cost-favourable bound is dual feasible, so
/// no phase one is needed.
inline LpResult solve_box_lp(const BoxLp& lp, double feas_tol = 1e-9) {
  detail::validate_lp(lp);
  const Eigen::Index k = lp.vars();
  const Eigen::Index m = lp.rows();
  const Eigen::Index ncol = k + m;
  const double inf = std::numeric_limits<double>::infinity();

  RealVec lo(ncol), up(ncol), cost = RealVec::Zero(ncol);
  lo.head(k) = lp.lo;
  up.head(k) = lp.up;
  cost.head(k) = lp.c;
  for (Eigen::Index i = 0; i < m; ++i) {
    lo(k + i) = 0.0;
    up(k + i) = inf;
  }

  // Tableau T = B^{-1} [A  -I]; with B = -I initially T = [-A  I].
  RealMat t(m, ncol);
  if (m > 0) {
    t.leftCols(k) = -lp.a;
    t.rightCols(m) = RealMat::Identity(m, m);
  }
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  std::vector<int> where(static_cast<std::size_t>(ncol), -1);  // row if basic
  for (Eigen::Index i = 0; i < m; ++i) {
    basis[static_cast<std::size_t>(i)] = k + i;
    where[static_cast<std::size_t>(k + i)] = static_cast<int>(i);
  }
  RealVec x = RealVec::Zero(ncol);
  RealVec d = cost;  // reduced costs; c_B = 0 initially
  for (Eigen::Index j = 0; j < k; ++j) x(j) = d(j) >= 0 ? lo(j) : up(j);
  for (Eigen::Index i = 0; i < m; ++i) x(k + i) = lp.a.row(i).dot(x.head(k)) - lp.b(i);

  auto bscale = [&](Eigen::Index i) { return 1.0 + std::abs(lp.b(i)); };
  auto viol = [&](Eigen::Index row, double& amount) -> int {
    const Eigen::Index v = basis[static_cast<std::size_t>(row)];
    const double s = v >= k ? feas_tol * bscale(v - k) : feas_tol * (1.0 + std::abs(lo(v)) + std::abs(up(v)));
    if (x(v) < lo(v) - s) {
      amount = lo(v) - x(v);
      return -1;
    }
    if (x(v) > up(v) + s) {
      amount = x(v) - up(v);
      return 1;
    }
    amount = 0.0;
    return 0;
  };

  LpResult res;
  const int max_iter = static_cast<int>(50 * (ncol + 10));
  const int bland_after = static_cast<int>(10 * (ncol + 10));
  int it = 0;
  bool infeasible = false;
  for (; it < max_iter; ++it) {
    const bool bland = it >= bland_after;
    // Leaving row: most infeasible (Bland: lowest variable index).
    Eigen::Index r = -1;
    int dir = 0;
    double best = 0.0;
    Eigen::Index best_var = ncol;
    for (Eigen::Index i = 0; i < m; ++i) {
      double amount = 0.0;
      const int s = viol(i, amount);
      if (s == 0) continue;
      const Eigen::Index v = basis[static_cast<std::size_t>(i)];
      if (bland ? v < best_var : amount > best) {
        best = amount;
        best_var = v;
        r = i;
        dir = s;
      }
    }
    if (r < 0) break;

    // Ratio test over nonbasic columns. The leaving variable moves to the
    // violated bound; eligible entering columns keep the duals feasible.
    const double row_scale = std::max(t.row(r).cwiseAbs().maxCoeff(), 1e-300);
    const double piv_tol = 1e-11 * row_scale;
    Eigen::Index q = -1;
    double q_ratio = inf;
    double q_alpha = 0.0;
    for (Eigen::Index j = 0; j < ncol; ++j) {
      if (where[static_cast<std::size_t>(j)] >= 0) continue;
      if (lo(j) == up(j)) continue;  // fixed variables never enter
      const double alpha = t(r, j);
      if (std::abs(alpha) <= piv_tol) continue;
      const bool at_lower = x(j) <= lo(j);
      // The leaving variable changes by -alpha * step; it must rise when dir < 0.
      const double a = dir < 0 ? -alpha : alpha;
      const bool ok = at_lower ? a > 0 : a < 0;
      if (!ok) continue;
      const double ratio = std::abs(d(j)) / std::abs(alpha);
      const bool better = bland ? (ratio < q_ratio * (1.0 - 1e-12) || (ratio <= q_ratio * (1.0 + 1e-12) && j < q))
                                : (ratio < q_ratio * (1.0 - 1e-12) ||
                                   (ratio <= q_ratio * (1.0 + 1e-12) && std::abs(alpha) > std::abs(q_alpha)));
      if (q < 0 || better) {
        q = j;
        q_ratio = ratio;
        q_alpha = alpha;
      }
    }
    if (q < 0) {
      infeasible = true;
      break;
    }

    // Primal step: move x_q so the leaving variable lands on its bound.
    const Eigen::Index leave = basis[static_cast<std::size_t>(r)];
    const double target = dir < 0 ? lo(leave) : up(leave);
    const double delta = (x(leave) - target) / t(r, q);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index v = basis[static_cast<std::size_t>(i)];
      x(v) -= delta * t(i, q);
    }
    x(q) += delta;
    x(leave) = target;

    // Pivot.
    const double piv = t(r, q);
    t.row(r) /= piv;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == r) continue;
      const double f = t(i, q);
      if (f != 0.0) t.row(i) -= f * t.row(r);
    }
    const double dq = d(q);
    d -= dq * t.row(r).transpose();
    d(q) = 0.0;
    where[static_cast<std::size_t>(leave)] = -1;
    where[static_cast<std::size_t>(q)] = static_cast<int>(r);
    basis[static_cast<std::size_t>(r)] = q;
  }
  res.iterations = it;
  if (it >= max_iter) throw SolverError("LP simplex iteration cap reached", std::nan(""));
  if (infeasible) {
    res.status = LpStatus::Infeasible;
    return res;
  }

  // Recompute basic values from the nonbasic ones for accuracy:
  // [A -I] x = b restricted to basis columns.
  if (m > 0) {
    RealMat bm(m, m);
    RealVec rhs = lp.b;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index v = basis[static_cast<std::size_t>(i)];
      bm.col(i) = v < k ? RealVec(lp.a.col(v)) : RealVec(-RealVec::Unit(m, v - k));
    }
    for (Eigen::Index j = 0; j < ncol; ++j) {
      if (where[static_cast<std::size_t>(j)] >= 0) continue;
      if (j < k) rhs -= lp.a.col(j) * x(j);
      else rhs += RealVec::Unit(m, j - k) * x(j);
    }
    Eigen::PartialPivLU<RealMat> lu(bm);
    RealVec xb = lu.solve(rhs);
    for (Eigen::Index i = 0; i < m; ++i) x(basis[static_cast<std::size_t>(i)]) = xb(i);
  }

  res.status = LpStatus::Optimal;
  res.minimizer = x.head(k);
  for (Eigen::Index j = 0; j < k; ++j) res.minimizer(j) = std::clamp(res.minimizer(j), lp.lo(j), lp.up(j));
  res.value = lp.c.dot(res.minimizer);

  // Duals: pi_i is the reduced cost of surplus i, box multipliers from y's reduced costs.
  res.pi = RealVec::Zero(m);
  res.phi_lo = RealVec::Zero(k);
  res.phi_up = RealVec::Zero(k);
  for (Eigen::Index i = 0; i < m; ++i)
    if (where[static_cast<std::size_t>(k + i)] < 0) res.pi(i) = std::max(d(k + i), 0.0);
  RealVec red = lp.c - (m > 0 ? RealVec(lp.a.transpose() * res.pi) : RealVec::Zero(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    if (red(j) >= 0) res.phi_lo(j) = red(j);
    else res.phi_up(j) = -red(j);
  }
  res.dual_value = (m > 0 ? res.pi.dot(lp.b) : 0.0) + res.phi_lo.dot(lp.lo) - res.phi_up.dot(lp.up);

  for (Eigen::Index i = 0; i < m; ++i) {
    const double slack = lp.a.row(i).dot(res.minimizer) - lp.b(i);
    if (slack <= feas_tol * bscale(i)) res.active_constraints.push_back(static_cast<int>(i));
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    const double s = feas_tol * (1.0 + std::abs(lp.lo(j)) + std::abs(lp.up(j)));
    if (res.minimizer(j) <= lp.lo(j) + s) res.active_lower.push_back(static_cast<int>(j));
    if (res.minimizer(j) >= lp.up(j) - s) res.active_upper.push_back(static_cast<int>(j));
  }
  return res;
}

/// Fills the conditioning diagnostic of an optimal result (not needed for the value).
inline void select_basis(const BoxLp& lp, LpResult& res) {
  if (res.status == LpStatus::Optimal) detail::select_conditioned_basis(lp, res);
}

}  // namespace certspec
