#pragma once

#include "ftva/core_model.hpp"
#include "ftva/hetero.hpp"
#include "ftva/sim_dt.hpp"
#include "ftva/sync_analysis.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ftva {

inline constexpr int kCsvSchemaVersion = 1;

/// Formats a double with 12 significant digits; stable across runs.
std::string fmt_num(double x);

/// "all-in:S", "fractions:S=F,S=F" (F may be a ratio like 1/3) or
/// "random-simplex[:SEED]". States use the instance's label base.
InitialProtocol parse_initial(const std::string& text, const RbInstance& instance);

/// Theoretical FTVA bound ingredients for an instance.
struct BoundInfo {
  bool available = false;
  std::string theorem;
  std::string reason;
  double r_max = 0.0;
  double g_max = 0.0;
  /// Exact (discrete) or Monte Carlo upper CI endpoint (continuous).
  double tau = 0.0;
  double tau_mean = 0.0;
  double tau_se = 0.0;
  long censored = 0;

  double at(int n_arms) const;
  /// Continuous time only: bound evaluated at the Monte Carlo mean.
  double at_mean(int n_arms) const;
};

struct CtSyncOptions {
  long episodes = 10000;
  double horizon = 1e4;
};

BoundInfo compute_bound(const RbInstance& instance, const HetSolution& solution, std::uint64_t seed, int workers,
                        const CtSyncOptions& ct = {});

struct GapRow {
  std::string experiment;
  std::string policy;
  std::string stands_in_for;
  std::string protocol;
  int replication = 0;
  int n_arms = 0;
  int trajectories = 0;
  double horizon = 0.0;
  double mean = 0.0;
  double ci_half = 0.0;
  double v_rel = 0.0;
  double gap = 0.0;
  /// NaN when the bound does not apply to the row's policy.
  double bound = 0.0;
  double mean_epochs = 0.0;
};

/// Fields of a GapRow as CSV, with the schema version first.
std::string gap_csv_header();
std::string gap_csv_line(const GapRow& row);
nlohmann::json gap_json(const GapRow& row);

/// Bound check for ftva rows: gap <= bound + 3 * ci_half.
bool bound_satisfied(const GapRow& row);

/// Runs one (policy, N) cell on a discrete- or continuous-time instance.
RunReport run_any(const RbInstance& instance, const RunConfig& config);

GapRow make_row(const std::string& experiment, const RunReport& report, const RunConfig& config, double v_rel,
                const BoundInfo& bound, const std::string& protocol);

struct ReproduceOptions {
  std::string figure = "fig4";
  std::vector<int> n_list{100, 200, 300, 400, 500, 600, 700, 800, 900, 1000};
  int trajectories = 50;
  double horizon = 1000;
  double burn_in = 0;
  std::uint64_t seed = 0;
  int workers = 0;
  /// Empty: the figure's own initial state. "random-simplex": reps random draws.
  std::string protocol;
  int reps = 20;
};

struct ReproduceResult {
  std::vector<GapRow> rows;
  /// random-simplex only: per (policy, N) min (ftva) or max (baselines) over reps.
  std::vector<GapRow> envelope;
  BoundInfo bound;
  double v_rel = 0.0;
};

/// Policies, instance and initial state for fig2 / fig4.
RbInstance figure_instance(const std::string& figure);
std::vector<std::string> figure_policies(const std::string& figure);
InitialProtocol figure_initial(const std::string& figure);

ReproduceResult reproduce(const ReproduceOptions& options);

/// Writes rows as CSV. Throws std::runtime_error on I/O failure.
void write_gap_csv(const std::string& path, const std::vector<GapRow>& rows);

/// Pipeline description, read from JSON:
/// { "instance": ref, "policies": [..], "n_list": [..], "trajectories": R,
///   "horizon": T, "burn_in": b, "initial": protocol, "seed": s }
struct ExperimentSpec {
  std::string instance;
  std::vector<std::string> policies;
  std::vector<int> n_list;
  int trajectories = 20;
  double horizon = 1000;
  double burn_in = -1;
  std::string initial;
  std::uint64_t seed = 0;
};

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

ExperimentSpec spec_from_json(const nlohmann::json& doc);

struct PipelineResult {
  std::vector<GapRow> rows;
  std::vector<std::string> failures;
  int cells_run = 0;
  int cells_reused = 0;
};

/// Runs every (policy, N) cell into out_dir/cells, reusing cells whose stored
/// fingerprint matches; a mismatching cell is an error unless `force`. Writes
/// lp.json, sync.json and gap.csv under out_dir.
PipelineResult run_pipeline(const ExperimentSpec& spec, const std::string& out_dir, int workers, bool force);

/// JSON summary of the relaxation for solve-lp.
nlohmann::json lp_report_json(const RbInstance& instance, const HetSolution& solution);
/// JSON form of a synchronization report with 4-tuples in label base.
nlohmann::json sync_report_json(const SyncReport& report, int label_base);

}  // namespace ftva
