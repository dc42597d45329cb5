#pragma once

#include "ftva/core_model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftva {

/// Edge weights below this count as absent in every graph built here.
inline constexpr double kEdgeTol = 1e-12;

/// Leader/follower start (s, a, s_hat, a_hat).
using SyncStart = std::array<int, 4>;

struct ReachabilityResult {
  bool holds = false;
  std::optional<SyncStart> witness;
};

/// True iff from every start (s, a, s_hat, a_hat) the diagonal s == s_hat is
/// reachable in the leader/follower product graph.
ReachabilityResult check_sa_reachability(const DtMdp& model, const SingleArmPolicy& policy);

/// Closed communicating classes of the chain with edge weights
/// sum_a pi(a|s) P(s,a,s').
std::vector<std::vector<int>> recurrent_classes(const DtMdp& model, const SingleArmPolicy& policy);

struct SufficientConditions {
  /// Ids of the hypotheses that hold, in a fixed order: "self-loop-all-states",
  /// "self-loop-two-states", "self-loop-one-state", "two-cycles", "one-cycle".
  std::vector<std::string> satisfied;
  /// Ids whose cycle search hit the enumeration cap.
  std::vector<std::string> inconclusive;
  /// State s* found for "self-loop-one-state", else -1.
  int self_loop_state = -1;
  /// Pair found for "self-loop-two-states".
  std::optional<std::array<int, 2>> self_loop_pair;

  bool has(const std::string& id) const;
};

SufficientConditions check_sufficient_conditions(const DtMdp& model, const SingleArmPolicy& policy,
                                                 long cycle_cap = 100000);

class SyncError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SyncReport {
  bool sa_holds = false;
  /// "reachability" or the id of a sufficient condition that also holds.
  std::string method;
  int n_states = 0;
  /// E[tau] for every start, indexed ((s*2 + a)*n + s_hat)*2 + a_hat.
  std::vector<double> tau_table;
  /// E[tau] over post-step states (s, s_hat, a_hat), indexed (s*n + s_hat)*2 + a_hat.
  std::vector<double> tau_product;
  double tau_max = 0.0;
  SyncStart argmax{0, 0, 0, 0};

  double tau(int s, int a, int s_hat, int a_hat) const {
    return tau_table[((static_cast<std::size_t>(s) * 2 + a) * n_states + s_hat) * 2 + a_hat];
  }
};

/// Expected synchronization times of the discrete-time leader/follower pair.
/// Throws SyncError if some start cannot reach the diagonal.
SyncReport exact_sync_times(const DtMdp& model, const SingleArmPolicy& policy);

struct UnichainResult {
  bool unichain = true;
  /// First deterministic policy (action per state) with two closed classes.
  std::vector<int> witness;
};

inline constexpr int kUnichainMaxStates = 20;

/// Enumerates all 2^|S| deterministic policies. Throws std::invalid_argument
/// above kUnichainMaxStates states.
UnichainResult check_unichain(const DtMdp& model);

struct CtSyncEstimate {
  /// Largest per-pair mean hitting time over (s, s_hat), s != s_hat.
  double mean = 0.0;
  double std_error = 0.0;
  /// mean + 1.96 * std_error.
  double upper = 0.0;
  int worst_s = 0;
  int worst_s_hat = 0;
  long episodes_per_pair = 0;
  /// Episodes that hit the horizon unsynchronized, over all pairs.
  long censored = 0;
  long total_episodes = 0;
};

/// Monte Carlo over the continuous-time leader/follower pair uniformized at
/// rate 2 g_max. Each epoch the leader redraws its action; the leader and the
/// follower then each jump with probability G(., a_hat, s')/(2 g_max).
/// workers <= 0 uses the OpenMP default; workers == 1 runs serially.
CtSyncEstimate ct_sync_time_estimate(const CtMdp& model, const SingleArmPolicy& policy, long episodes, double horizon,
                                     std::uint64_t seed, int workers = 0);

}  // namespace ftva
