#pragma once

// Dense two-phase simplex for small equality-form linear programs:
//   maximize c^T y  subject to  A y = b,  y >= 0.
// Bland's rule avoids cycling. Used through the dual for problems with few
// free variables and many inequality constraints.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "rtd/common.hpp"

namespace rtd {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd y;
  std::vector<int> basis;  // column index per row
  double objective = 0.0;
};

namespace detail {

class Tableau {
 public:
  Tableau(Eigen::MatrixXd t, std::vector<int> basis) : t_(std::move(t)), basis_(std::move(basis)) {}

  // Row `m` (last) holds reduced costs for a maximization in the form
  // z - sum(c_j y_j) = 0; a negative entry marks an improving column.
  bool optimize(int usable_cols, double tol) {
    const int m = static_cast<int>(t_.rows()) - 1;
    const int rhs = static_cast<int>(t_.cols()) - 1;
    for (int iter = 0; iter < 100000; ++iter) {
      int enter = -1;
      for (int j = 0; j < usable_cols; ++j)
        if (t_(m, j) < -tol) {
          enter = j;
          break;
        }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (t_(i, enter) <= tol) continue;
        const double ratio = t_(i, rhs) / t_(i, enter);
        if (ratio < best - 1e-12 || (std::abs(ratio - best) <= 1e-12 && leave >= 0 && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    fail("simplex iteration limit reached");
  }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (int i = 0; i < t_.rows(); ++i)
      if (i != r && t_(i, c) != 0.0) t_.row(i) -= t_(i, c) * t_.row(r);
    basis_[static_cast<std::size_t>(r)] = c;
  }

  Eigen::MatrixXd& table() { return t_; }
  std::vector<int>& basis() { return basis_; }

 private:
  Eigen::MatrixXd t_;
  std::vector<int> basis_;
};

}  // namespace detail

inline LpResult simplex_maximize(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                                 double tol = 1e-10) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  require(b.size() == m && c.size() == n, "LP dimension mismatch");

  // Phase 1: artificial variable per row, rows flipped so b >= 0.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double s = b(i) < 0 ? -1.0 : 1.0;
    t.row(i).head(n) = s * a.row(i);
    t(i, n + i) = 1.0;
    t(i, n + m) = s * b(i);
    basis[static_cast<std::size_t>(i)] = n + i;
  }
  // Maximize -sum(artificials): reduced-cost row = -(sum of constraint rows) on real columns.
  for (int i = 0; i < m; ++i) {
    t.row(m).head(n) -= t.row(i).head(n);
    t(m, n + m) -= t(i, n + m);
  }
  detail::Tableau tab(std::move(t), std::move(basis));
  tab.optimize(n, tol);
  LpResult res;
  if (-tab.table()(m, n + m) > 1e-8 * (1.0 + b.cwiseAbs().maxCoeff())) return res;

  // Drive remaining artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (tab.basis()[static_cast<std::size_t>(i)] < n) continue;
    for (int j = 0; j < n; ++j)
      if (std::abs(tab.table()(i, j)) > 1e-9) {
        tab.pivot(i, j);
        break;
      }
  }

  // Phase 2 on the real columns.
  Eigen::MatrixXd& tt = tab.table();
  tt.row(m).setZero();
  tt.row(m).head(n) = -c.transpose();
  for (int i = 0; i < m; ++i) {
    const int j = tab.basis()[static_cast<std::size_t>(i)];
    if (j < n && tt(m, j) != 0.0) tt.row(m) -= tt(m, j) * tt.row(i);
  }
  if (!tab.optimize(n, tol)) {
    res.status = LpStatus::Unbounded;
    return res;
  }
  res.status = LpStatus::Optimal;
  res.y = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) {
    const int j = tab.basis()[static_cast<std::size_t>(i)];
    if (j < n) res.y(j) = tt(i, n + m);
  }
  res.basis = tab.basis();
  res.objective = c.dot(res.y);
  return res;
}

// minimize f^T x over free x subject to G x >= h, solved through the dual
//   maximize h^T y  s.t.  G^T y = f, y >= 0.
// The primal point is recovered from the optimal dual basis.
struct InequalityLpResult {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
};

inline InequalityLpResult minimize_inequality_lp(const Eigen::VectorXd& f, const Eigen::MatrixXd& g,
                                                 const Eigen::VectorXd& h) {
  const int nv = static_cast<int>(f.size());
  require(g.cols() == nv && g.rows() == h.size(), "LP dimension mismatch");
  InequalityLpResult out;
  const LpResult dual = simplex_maximize(g.transpose(), f, h);
  if (dual.status == LpStatus::Infeasible) {
    out.status = LpStatus::Unbounded;  // dual infeasible: primal unbounded (or infeasible)
    return out;
  }
  if (dual.status == LpStatus::Unbounded) {
    out.status = LpStatus::Infeasible;
    return out;
  }
  // Complementary slackness: rows of G in the dual basis are tight.
  Eigen::MatrixXd gb(nv, nv);
  Eigen::VectorXd hb(nv);
  int r = 0;
  for (int j : dual.basis) {
    if (j >= g.rows() || r >= nv) continue;
    gb.row(r) = g.row(j);
    hb(r) = h(j);
    ++r;
  }
  require(r == nv, "degenerate dual basis");
  out.x = gb.fullPivLu().solve(hb);
  // Tiny repair so every constraint holds despite round-off.
  const Eigen::VectorXd slack = g * out.x - h;
  if (slack.minCoeff() < 0.0) {
    // Shift along the direction that raises all rows if one exists (constant term).
    int const_col = -1;
    for (int j = 0; j < nv && const_col < 0; ++j)
      if ((g.col(j).array() > 0.0).all()) const_col = j;
    if (const_col >= 0) out.x(const_col) += -slack.minCoeff() / g.col(const_col).minCoeff();
  }
  out.status = LpStatus::Optimal;
  out.objective = f.dot(out.x);
  return out;
}

}  // namespace rtd
