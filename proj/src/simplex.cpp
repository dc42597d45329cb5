#include "ftva/simplex.hpp"

#include <cmath>
#include <limits>

namespace ftva {

std::string to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "unknown";
}

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-11;
constexpr int kMaxIterations = 100000;

// Tableau T = [B^-1 A | B^-1 (artificial block) | B^-1 b]. The artificial
// block starts as the identity so it always holds B^-1 for the dual readout.
struct Tableau {
  int m, n;
  Eigen::MatrixXd t;
  std::vector<int> basis;

  double& rhs(int i) { return t(i, n + m); }

  void pivot(int row, int col) {
    t.row(row) /= t(row, col);
    for (int i = 0; i < m; ++i) {
      if (i == row) continue;
      const double f = t(i, col);
      if (f != 0.0) t.row(i) -= f * t.row(row);
    }
    basis[row] = col;
  }

  // Reduced cost of column j under cost vector `cost` (length n + m).
  double reduced(const Eigen::VectorXd& cost, int j) const {
    double z = 0.0;
    for (int i = 0; i < m; ++i) z += cost(basis[i]) * t(i, j);
    return cost(j) - z;
  }

  // Bland's rule: lowest-index improving column, ties in the ratio test go to
  // the lowest basic variable index. Returns false if unbounded.
  bool optimize(const Eigen::VectorXd& cost, int allowed_cols, int& iterations) {
    for (; iterations < kMaxIterations; ++iterations) {
      int enter = -1;
      for (int j = 0; j < allowed_cols; ++j) {
        if (reduced(cost, j) > kCostTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        const double a = t(i, enter);
        if (a <= kPivotTol) continue;
        const double ratio = t(i, n + m) / a;
        if (ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && basis[i] < basis[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    return true;
  }
};

}  // namespace

LpSolution solve_lp(const LpProblem& p) {
  const int m = p.n_rows();
  const int n = p.n_vars();
  LpSolution sol;
  Tableau tab{m, n, Eigen::MatrixXd::Zero(m, n + m + 1), std::vector<int>(m)};
  std::vector<double> sign(m, 1.0);
  for (int i = 0; i < m; ++i) {
    sign[i] = p.b(i) < 0.0 ? -1.0 : 1.0;
    tab.t.row(i).head(n) = sign[i] * p.A.row(i);
    tab.t(i, n + i) = 1.0;
    tab.rhs(i) = sign[i] * p.b(i);
    tab.basis[i] = n + i;
  }

  // Phase 1: maximize -sum(artificials).
  Eigen::VectorXd cost1 = Eigen::VectorXd::Zero(n + m);
  cost1.tail(m).setConstant(-1.0);
  tab.optimize(cost1, n + m, sol.iterations);
  double infeas = 0.0;
  for (int i = 0; i < m; ++i)
    if (tab.basis[i] >= n) infeas += tab.rhs(i);
  if (infeas > 1e-9) {
    sol.status = LpStatus::Infeasible;
    return sol;
  }
  // Drive zero-level artificials out where some structural column allows it;
  // rows where none does are linearly dependent and stay put.
  for (int i = 0; i < m; ++i) {
    if (tab.basis[i] < n) continue;
    for (int j = 0; j < n; ++j) {
      if (std::abs(tab.t(i, j)) > 1e-9) {
        tab.pivot(i, j);
        break;
      }
    }
  }

  // Phase 2 over structural columns only.
  Eigen::VectorXd cost2 = Eigen::VectorXd::Zero(n + m);
  cost2.head(n) = p.c;
  if (!tab.optimize(cost2, n, sol.iterations)) {
    sol.status = LpStatus::Unbounded;
    return sol;
  }

  sol.status = LpStatus::Optimal;
  sol.x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i)
    if (tab.basis[i] < n) sol.x(tab.basis[i]) = std::max(0.0, tab.rhs(i));
  sol.objective = p.c.dot(sol.x);
  sol.duals = Eigen::VectorXd::Zero(m);
  for (int r = 0; r < m; ++r) {
    double u = 0.0;
    for (int i = 0; i < m; ++i) u += cost2(tab.basis[i]) * tab.t(i, n + r);
    sol.duals(r) = sign[r] * u;
  }
  return sol;
}

}  // namespace ftva
