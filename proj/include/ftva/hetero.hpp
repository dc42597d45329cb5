#pragma once

#include "ftva/core_model.hpp"
#include "ftva/lp_relax.hpp"
#include "ftva/sync_analysis.hpp"

#include <vector>

namespace ftva {

/// Relaxation solution with everything FTVA needs per type.
struct HetSolution {
  OccupationMeasure occ;
  std::vector<SingleArmPolicy> policies;
  std::vector<std::vector<double>> marginals;
  double value = 0.0;
};

/// Solves the (possibly multi-type) relaxation. Types with identical models
/// are merged first, with their betas added, and the merged block is copied
/// back to each of them. Without this a degenerate LP can split the shared
/// budget unevenly between copies.
HetSolution solve_het(const RbInstance& instance);

/// r_max * max_k tau_max_k / sqrt(N). Throws std::invalid_argument on an
/// empty report list.
double het_bound(const std::vector<SyncReport>& per_type, double r_max, int n_arms);

/// Exact synchronization report for every type under its relaxation policy.
std::vector<SyncReport> per_type_sync(const RbInstance& instance, const HetSolution& solution);

}  // namespace ftva
