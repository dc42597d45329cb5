#include "ftva/hetero.hpp"

#include <cmath>
#include <stdexcept>

namespace ftva {

HetSolution solve_het(const RbInstance& inst) {
  // representative[k]: index of the merged type that holds type k
  std::vector<int> representative(inst.n_types());
  RbInstance merged = inst;
  merged.betas.clear();
  merged.dt_types.clear();
  merged.ct_types.clear();
  std::vector<int> source;
  for (int k = 0; k < inst.n_types(); ++k) {
    int found = -1;
    for (std::size_t j = 0; j < source.size() && found < 0; ++j) {
      const int other = source[j];
      const bool same = inst.kind == TimeKind::Discrete ? inst.dt_types[k] == inst.dt_types[other]
                                                        : inst.ct_types[k] == inst.ct_types[other];
      if (same) found = static_cast<int>(j);
    }
    if (found >= 0) {
      merged.betas[found] += inst.betas[k];
    } else {
      found = static_cast<int>(source.size());
      source.push_back(k);
      merged.betas.push_back(inst.betas[k]);
      if (inst.kind == TimeKind::Discrete) merged.dt_types.push_back(inst.dt_types[k]);
      else merged.ct_types.push_back(inst.ct_types[k]);
    }
    representative[k] = found;
  }

  const OccupationMeasure small = solve_relaxation(merged);
  HetSolution sol;
  sol.occ.n_states = small.n_states;
  sol.occ.betas = inst.betas;
  sol.occ.value = small.value;
  sol.occ.budget_dual = small.budget_dual;
  for (int k = 0; k < inst.n_types(); ++k) {
    sol.occ.y.push_back(small.y[representative[k]]);
    sol.policies.push_back(policy_from_occupation(small, representative[k]));
    sol.marginals.push_back(stationary_marginal(small, representative[k]));
  }
  sol.value = relaxed_value(sol.occ, inst);
  return sol;
}

double het_bound(const std::vector<SyncReport>& per_type, double r_max, int n_arms) {
  if (per_type.empty()) throw std::invalid_argument("het_bound needs one sync report per type");
  double tau = 0.0;
  for (const auto& rep : per_type) tau = std::max(tau, rep.tau_max);
  return r_max * tau / std::sqrt(static_cast<double>(n_arms));
}

std::vector<SyncReport> per_type_sync(const RbInstance& inst, const HetSolution& sol) {
  if (inst.kind != TimeKind::Discrete) throw std::invalid_argument("exact sync times are discrete-time only");
  std::vector<SyncReport> out;
  for (int k = 0; k < inst.n_types(); ++k) out.push_back(exact_sync_times(inst.dt_types[k], sol.policies[k]));
  return out;
}

}  // namespace ftva
