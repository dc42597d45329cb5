#pragma once

#include "ftva/core_model.hpp"
#include "ftva/simplex.hpp"

#include <stdexcept>
#include <vector>

namespace ftva {

/// Solution of the single-armed relaxation. One |S|x2 block per arm type,
/// each stored row-major as [s][a].
struct OccupationMeasure {
  int n_states = 0;
  std::vector<double> betas;
  std::vector<std::vector<double>> y;
  /// Expected reward per arm per unit time at the optimum.
  double value = 0.0;
  /// Multiplier of the budget row.
  double budget_dual = 0.0;

  int n_types() const { return static_cast<int>(y.size()); }
  double at(int k, int s, int a) const { return y[k][static_cast<std::size_t>(s) * 2 + a]; }
};

/// Variables are ordered (type, state, action); rows are the budget row, then
/// for each type |S| flow-balance rows followed by one normalization row.
LpProblem build_relaxation(const RbInstance& instance);

/// Solves build_relaxation(instance). Throws LpError if the LP is not optimal.
/// When dropping the budget row leaves the optimum unchanged the constraint is
/// slack and budget_dual is reported as exactly 0; otherwise it is the simplex
/// dual of the budget row.
OccupationMeasure solve_relaxation(const RbInstance& instance);

/// pi(a|s) = y(s,a) / (y(s,0) + y(s,1)); (1/2, 1/2) on states with no mass.
SingleArmPolicy policy_from_occupation(const OccupationMeasure& y, int type = 0);

/// sum_k beta_k sum_{s,a} r_k(s,a) y_k(s,a).
double relaxed_value(const OccupationMeasure& y, const RbInstance& instance);

/// mu(s) = y(s,0) + y(s,1).
std::vector<double> stationary_marginal(const OccupationMeasure& y, int type = 0);

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IndexResult {
  std::vector<double> index;
  std::vector<double> bias;
  double gain = 0.0;
  long iterations = 0;
};

/// Lagrangian indices for subsidy lambda: relative value iteration on the
/// lazy chain 0.5 I + 0.5 P with reward r(s,a) - lambda*a, then the one-step
/// advantage of the active action under the recovered bias.
IndexResult lagrangian_indices(const DtMdp& model, double lambda, double tol = 1e-10, long max_iter = 1000000);

/// States sorted by decreasing score; equal scores keep ascending state order.
std::vector<int> priority_order(const std::vector<double>& scores);

}  // namespace ftva
