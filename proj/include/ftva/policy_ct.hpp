#pragma once

#include "ftva/core_model.hpp"
#include "ftva/policy_dt.hpp"
#include "ftva/rng.hpp"
#include "ftva/sim_dt.hpp"

#include <array>
#include <vector>

namespace ftva {

/// FTVA-CT over N arms, uniformized at rate 2 N g_max.
///
/// Arms sharing (real state, virtual state) are exchangeable: actions are
/// redrawn at every epoch and the matching treats all arms of a class alike.
/// So the engine keeps per-arm states but only per-class action counts, and
/// an epoch costs O(|S|^2 + |sum A_hat - alpha N|) instead of O(N).
class FtvaCtEngine {
 public:
  FtvaCtEngine(const CtMdp& model, double alpha, SingleArmPolicy policy, const std::vector<double>& marginal,
               std::vector<int> initial_real, TieBreak tie_break, Rng& rng);

  /// Redraws virtual actions and matches real actions to the budget.
  void decide(Rng& rng);
  /// Applies one uniformized event. Returns 0 none, 1 real move, 2 virtual move.
  int apply_event(Rng& rng);

  /// 2 N g_max.
  double epoch_rate() const { return epoch_rate_; }
  /// Reward per arm per unit time under the current actions.
  double reward_rate() const;
  /// Sum_i G(S_i, A_i) under the current actions.
  double real_rate() const { return g_real_; }
  double virtual_rate() const { return g_virtual_; }
  int active_count() const;
  int bad_arms() const;
  int mismatches() const { return mismatches_; }
  int budget() const { return budget_; }
  int n_arms() const { return static_cast<int>(real_.size()); }

  const std::vector<int>& real() const { return real_; }
  const std::vector<int>& virtual_states() const { return virt_; }
  /// Number of arms in class (s, s_hat) holding (a_hat, a), combo = a_hat*2 + a.
  int combo_count(int s, int s_hat, int combo) const { return combos_[cls(s, s_hat)][combo]; }

 private:
  int cls(int s, int sh) const { return s * n_ + sh; }
  void move_arm(int arm, int s, int sh);
  void flip(int from_combo, int to_combo, int count, Rng& rng);
  void refresh_rates();

  const CtMdp* model_;
  int n_;
  int budget_;
  SingleArmPolicy policy_;
  TieBreak tie_break_;
  double epoch_rate_;
  std::vector<int> real_, virt_;
  std::vector<std::vector<int>> members_;
  std::vector<int> slot_;
  std::vector<std::array<int, 4>> combos_;
  std::vector<double> jump_cdf_;
  double g_real_ = 0.0, g_virtual_ = 0.0;
  int mismatches_ = 0;
  std::vector<double> weights_;
};

/// Trajectory-parallel continuous-time run; only ftva selectors are accepted.
RunReport run_ct(const RbInstance& instance, const RunConfig& config);
RunReport run_ct_serial(const RbInstance& instance, const RunConfig& config);

/// r_max (1 + 2 g_max tau) / sqrt(N).
double ct_bound(double r_max, double g_max, double tau, int n_arms);

}  // namespace ftva
