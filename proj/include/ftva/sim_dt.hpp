#pragma once

#include "ftva/core_model.hpp"
#include "ftva/policy_dt.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ftva {

/// How real states are populated at t = 0.
struct InitialProtocol {
  enum class Kind { AllIn, Fractions, RandomSimplex };
  Kind kind = Kind::AllIn;
  int state = 0;
  /// (state, fraction) pairs; fractions sum to 1.
  std::vector<std::pair<int, double>> fractions;
  /// Seed of the Dirichlet(1) draw for RandomSimplex.
  std::uint64_t seed = 0;

  static InitialProtocol all_in(int s);
  static InitialProtocol from_fractions(std::vector<std::pair<int, double>> f);
  static InitialProtocol random_simplex(std::uint64_t seed);

  std::string describe(int label_base) const;
};

/// Largest-remainder rounding of weights * n to integers summing to n. Ties
/// in the remainder go to the lower index.
std::vector<int> largest_remainder(const std::vector<double>& weights, int n);

/// Per-state arm counts for the protocol.
std::vector<int> initial_counts(const InitialProtocol& protocol, int n_states, int n_arms);

/// Arm-by-arm states: counts[0] arms in state 0, then counts[1] in state 1, ...
std::vector<int> expand_counts(const std::vector<int>& counts);

struct RunConfig {
  int n_arms = 100;
  /// Steps (discrete time) or time units (continuous time).
  double horizon = 1000;
  /// Start of the averaging window; negative means horizon / 4.
  double burn_in = -1;
  int trajectories = 20;
  std::uint64_t seed = 0;
  std::string policy = "ftva";
  InitialProtocol initial;
  /// OpenMP threads across trajectories; <= 0 uses the runtime default.
  int workers = 0;
  /// Keep the per-step state-fraction series and flows of trajectory 0.
  bool record_occupancy = false;

  double window_start() const { return burn_in < 0 ? horizon / 4 : burn_in; }
};

/// Compensated running sum.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

struct TrajectoryStats {
  double mean_reward = 0.0;
  /// Length of the averaging window (steps or time units).
  double window = 0.0;
  /// Mean number of arms with (S, A) != (S_hat, A_hat).
  double mean_bad_arms = 0.0;
  /// Mean number of arms with A != A_hat.
  double mean_mismatches = 0.0;
  /// Disagreement events (A != A_hat) inside the window.
  long events = 0;
  /// Disagreement periods that opened inside the window and closed before the end.
  long periods = 0;
  double period_length_sum = 0.0;
  double period_length_sq_sum = 0.0;
  /// Decision epochs inside the window (continuous time only).
  long epochs = 0;
  /// Time-averaged empirical law of (S_hat, A_hat), per type, indexed [k][s*2+a].
  std::vector<std::vector<double>> virtual_law;
  /// Time-averaged fraction of real arms per state.
  std::vector<double> occupancy;
};

struct LittlesLedger {
  double lhs = 0.0;
  double rhs = 0.0;
  double relative_gap = 0.0;
};

/// lhs = mean bad-arm count; rhs = event rate * mean completed period length.
LittlesLedger littles_law_ledger(const TrajectoryStats& stats);

struct OccupancySeries {
  int n_states = 0;
  /// Row-major [step][state] fractions of arms.
  std::vector<double> fractions;
  /// Mean signed flow into each state per step, split by the action taken.
  std::vector<double> flow_active;
  std::vector<double> flow_passive;
  /// Per-step bad-arm and mismatch counts (FTVA only).
  std::vector<int> bad_arms;
  std::vector<int> mismatches;

  int steps() const { return n_states ? static_cast<int>(fractions.size()) / n_states : 0; }
  double at(int t, int s) const { return fractions[static_cast<std::size_t>(t) * n_states + s]; }
};

struct RunReport {
  std::string policy;
  int n_arms = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  /// 1.96 * std_dev / sqrt(R).
  double ci_half = 0.0;
  bool has_virtual = false;
  std::vector<TrajectoryStats> trajectories;

  double mean_bad_arms = 0.0;
  double mean_mismatches = 0.0;
  double mismatch_se = 0.0;
  /// Disagreement events per step (or per time unit), pooled.
  double event_rate = 0.0;
  double mean_period_length = 0.0;
  double period_length_se = 0.0;
  LittlesLedger ledger;
  double mean_epochs = 0.0;
  double epochs_se = 0.0;

  OccupancySeries occupancy;
};

/// Window occupancy of `series` from step `from` on.
std::vector<double> window_occupancy(const OccupancySeries& series, int from);

/// Trajectory-parallel discrete-time run.
RunReport run(const RbInstance& instance, const RunConfig& config);
/// Single-threaded reference; bit-identical to run().
RunReport run_serial(const RbInstance& instance, const RunConfig& config);

/// Fills mean, CI and pooled diagnostics from report.trajectories.
void aggregate(RunReport& report);

}  // namespace ftva
