#include "ftva/lp_relax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <numeric>

namespace ftva {

namespace {

int var_index(int n, int k, int s, int a) { return (k * n + s) * 2 + a; }

double transition_weight(const RbInstance& inst, int k, int from, int a, int to) {
  if (inst.kind == TimeKind::Discrete) return inst.dt_types[k].p(from, a, to);
  const CtMdp& m = inst.ct_types[k];
  return from == to ? -m.total_rate(from, a) : m.rate(from, a, to);
}

double reward(const RbInstance& inst, int k, int s, int a) {
  return inst.kind == TimeKind::Discrete ? inst.dt_types[k].r(s, a) : inst.ct_types[k].r(s, a);
}

LpProblem build(const RbInstance& inst, bool with_budget) {
  const int n = inst.n_states();
  const int kt = inst.n_types();
  const int rows = (with_budget ? 1 : 0) + kt * (n + 1);
  LpProblem lp;
  lp.c = Eigen::VectorXd::Zero(kt * n * 2);
  lp.A = Eigen::MatrixXd::Zero(rows, kt * n * 2);
  lp.b = Eigen::VectorXd::Zero(rows);
  int row = 0;
  if (with_budget) {
    for (int k = 0; k < kt; ++k)
      for (int s = 0; s < n; ++s) lp.A(row, var_index(n, k, s, 1)) = inst.betas[k];
    lp.b(row) = inst.alpha;
    lp.row_labels.push_back("budget");
    ++row;
  }
  const bool dt = inst.kind == TimeKind::Discrete;
  for (int k = 0; k < kt; ++k) {
    for (int s = 0; s < n; ++s) {
      // inflow minus outflow; the DT form subtracts the occupancy of s itself
      for (int from = 0; from < n; ++from)
        for (int a = 0; a < 2; ++a) lp.A(row, var_index(n, k, from, a)) += transition_weight(inst, k, from, a, s);
      if (dt)
        for (int a = 0; a < 2; ++a) lp.A(row, var_index(n, k, s, a)) -= 1.0;
      lp.row_labels.push_back("flow[" + std::to_string(k) + "," + std::to_string(s) + "]");
      ++row;
    }
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 2; ++a) lp.A(row, var_index(n, k, s, a)) = 1.0;
    lp.b(row) = 1.0;
    lp.row_labels.push_back("normalization[" + std::to_string(k) + "]");
    ++row;
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 2; ++a) lp.c(var_index(n, k, s, a)) = inst.betas[k] * reward(inst, k, s, a);
  }
  return lp;
}

LpSolution solve_or_throw(const LpProblem& lp) {
  LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::Optimal) throw LpError(sol.status, "relaxation is " + to_string(sol.status));
  return sol;
}

}  // namespace

LpProblem build_relaxation(const RbInstance& instance) { return build(instance, true); }

OccupationMeasure solve_relaxation(const RbInstance& instance) {
  const LpSolution sol = solve_or_throw(build(instance, true));
  const int n = instance.n_states();
  OccupationMeasure occ;
  occ.n_states = n;
  occ.betas = instance.betas;
  for (int k = 0; k < instance.n_types(); ++k) {
    std::vector<double> block(static_cast<std::size_t>(n) * 2);
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 2; ++a) {
        // pivoting leaves ~1e-16 residue on entries that are zero at the vertex
        const double v = sol.x(var_index(n, k, s, a));
        block[s * 2 + a] = std::abs(v) < 1e-12 ? 0.0 : v;
      }
    occ.y.push_back(std::move(block));
  }
  occ.value = sol.objective;
  const LpSolution free = solve_or_throw(build(instance, false));
  occ.budget_dual = std::abs(free.objective - sol.objective) <= 1e-9 ? 0.0 : sol.duals(0);
  return occ;
}

SingleArmPolicy policy_from_occupation(const OccupationMeasure& y, int type) {
  SingleArmPolicy pol;
  pol.n_states = y.n_states;
  pol.probs.resize(static_cast<std::size_t>(y.n_states) * 2);
  for (int s = 0; s < y.n_states; ++s) {
    const double y0 = y.at(type, s, 0), y1 = y.at(type, s, 1);
    const double mass = y0 + y1;
    if (mass > 0.0) {
      pol.probs[s * 2] = y0 / mass;
      pol.probs[s * 2 + 1] = y1 / mass;
    } else {
      pol.probs[s * 2] = pol.probs[s * 2 + 1] = 0.5;
    }
  }
  return pol;
}

double relaxed_value(const OccupationMeasure& y, const RbInstance& instance) {
  double total = 0.0;
  for (int k = 0; k < y.n_types(); ++k)
    for (int s = 0; s < y.n_states; ++s)
      for (int a = 0; a < 2; ++a) total += y.betas[k] * reward(instance, k, s, a) * y.at(k, s, a);
  return total;
}

std::vector<double> stationary_marginal(const OccupationMeasure& y, int type) {
  std::vector<double> mu(y.n_states);
  for (int s = 0; s < y.n_states; ++s) mu[s] = y.at(type, s, 0) + y.at(type, s, 1);
  return mu;
}

IndexResult lagrangian_indices(const DtMdp& m, double lambda, double tol, long max_iter) {
  const int n = m.n_states;
  auto q = [&](const std::vector<double>& h, int s, int a) {
    double v = m.r(s, a) - lambda * a;
    for (int t = 0; t < n; ++t) v += m.p(s, a, t) * h[t];
    return v;
  };
  // Relative value iteration on the lazy chain 0.5 I + 0.5 P. Its gain equals
  // the original one and its bias is twice the original bias.
  std::vector<double> h(n, 0.0), next(n);
  IndexResult res;
  bool converged = false;
  while (res.iterations < max_iter) {
    ++res.iterations;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < 2; ++a) {
        double v = m.r(s, a) - lambda * a + 0.5 * h[s];
        for (int t = 0; t < n; ++t) v += 0.5 * m.p(s, a, t) * h[t];
        best = std::max(best, v);
      }
      next[s] = best;
      lo = std::min(lo, best - h[s]);
      hi = std::max(hi, best - h[s]);
    }
    const double ref = next[0];
    for (int s = 0; s < n; ++s) h[s] = next[s] - ref;
    res.gain = 0.5 * (lo + hi);
    if (hi - lo < tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw ConvergenceError("relative value iteration did not converge in " + std::to_string(max_iter) + " iterations");
  res.bias.resize(n);
  for (int s = 0; s < n; ++s) res.bias[s] = 0.5 * h[s];
  res.index.resize(n);
  for (int s = 0; s < n; ++s) res.index[s] = q(res.bias, s, 1) - q(res.bias, s, 0);
  return res;
}

std::vector<int> priority_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace ftva
