// Command-line front end: LP solves, synchronization checks, simulation,
// bounds, figure reproduction and resumable experiment pipelines.

#include "ftva/experiments.hpp"
#include "ftva/hetero.hpp"
#include "ftva/lp_relax.hpp"
#include "ftva/policy_ct.hpp"
#include "ftva/sim_dt.hpp"
#include "ftva/sync_analysis.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ftva;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitCellFailures = 3;

struct Globals {
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out;
  std::string format = "csv";
};

RbInstance load_checked(const std::string& ref) {
  RbInstance inst = resolve_instance(ref);
  const auto rep = validate(inst);
  if (!rep.ok()) throw InstanceError("instance '" + ref + "' failed validation: " + rep.summary());
  return inst;
}

// Writes `text` to out/name when --out is set, and always to stdout.
void emit(const Globals& g, const std::string& name, const std::string& text) {
  std::cout << text;
  if (g.out.empty()) return;
  fs::create_directories(g.out);
  std::ofstream f(fs::path(g.out) / name, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (fs::path(g.out) / name).string());
  f << text;
}

std::vector<int> parse_n_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument("bad N '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty N list");
  return out;
}

SingleArmPolicy policy_for(const RbInstance& inst, const HetSolution& sol, const std::string& ref) {
  if (ref == "lp-optimal") return sol.policies.front();
  return load_policy(ref, inst.n_states());
}

int cmd_solve_lp(const Globals& g, const std::string& ref) {
  const RbInstance inst = load_checked(ref);
  const HetSolution sol = solve_het(inst);
  if (g.format == "json") {
    emit(g, "lp.json", lp_report_json(inst, sol).dump(2) + "\n");
    return 0;
  }
  std::ostringstream os;
  os << "schema_version,type,state,y0,y1,pi0,pi1,mu,v_rel,budget_dual\n";
  for (int k = 0; k < sol.occ.n_types(); ++k)
    for (int s = 0; s < sol.occ.n_states; ++s)
      os << kCsvSchemaVersion << ',' << k << ',' << s + inst.state_label_base << ',' << fmt_num(sol.occ.at(k, s, 0))
         << ',' << fmt_num(sol.occ.at(k, s, 1)) << ',' << fmt_num(sol.policies[k].prob(s, 0)) << ','
         << fmt_num(sol.policies[k].prob(s, 1)) << ',' << fmt_num(sol.marginals[k][s]) << ',' << fmt_num(sol.value)
         << ',' << fmt_num(sol.occ.budget_dual) << '\n';
  emit(g, "lp.csv", os.str());
  return 0;
}

int cmd_check_sa(const Globals& g, const std::string& ref, const std::string& policy_ref, long episodes,
                 double horizon) {
  const RbInstance inst = load_checked(ref);
  const HetSolution sol = solve_het(inst);
  const SingleArmPolicy pol = policy_for(inst, sol, policy_ref);
  const int base = inst.state_label_base;
  json j;
  j["instance"] = inst.name;
  if (inst.kind == TimeKind::Continuous) {
    const auto est = ct_sync_time_estimate(inst.ct_types.front(), pol, episodes, horizon, g.seed, g.workers);
    j["method"] = "monte-carlo";
    j["tau_mean"] = est.mean;
    j["tau_se"] = est.std_error;
    j["tau_upper"] = est.upper;
    j["worst_pair"] = {est.worst_s + base, est.worst_s_hat + base};
    j["censored"] = est.censored;
    j["episodes"] = est.total_episodes;
    j["sa_holds"] = est.censored == 0;
  } else {
    j["types"] = json::array();
    for (int k = 0; k < inst.n_types(); ++k) {
      const DtMdp& m = inst.dt_types[k];
      const SingleArmPolicy& p = policy_ref == "lp-optimal" ? sol.policies[k] : pol;
      json t;
      const auto reach = check_sa_reachability(m, p);
      const auto conds = check_sufficient_conditions(m, p);
      t["reachability"] = reach.holds;
      if (reach.witness) {
        const auto& w = *reach.witness;
        t["witness"] = {{"s", w[0] + base}, {"a", w[1]}, {"s_hat", w[2] + base}, {"a_hat", w[3]}};
      }
      t["sufficient_conditions"] = conds.satisfied;
      t["inconclusive"] = conds.inconclusive;
      if (conds.self_loop_state >= 0) t["self_loop_state"] = conds.self_loop_state + base;
      if (m.n_states <= kUnichainMaxStates) {
        const auto uni = check_unichain(m);
        t["unichain"] = uni.unichain;
        if (!uni.unichain) t["unichain_witness"] = uni.witness;
      }
      if (reach.holds) t["sync"] = sync_report_json(exact_sync_times(m, p), base);
      j["types"].push_back(t);
    }
  }
  emit(g, "check_sa.json", j.dump(2) + "\n");
  return 0;
}

int cmd_sync_time(const Globals& g, const std::string& ref, long episodes, double horizon) {
  const RbInstance inst = load_checked(ref);
  const HetSolution sol = solve_het(inst);
  const int base = inst.state_label_base;
  std::ostringstream os;
  if (inst.kind == TimeKind::Continuous) {
    const auto est = ct_sync_time_estimate(inst.ct_types.front(), sol.policies.front(), episodes, horizon, g.seed,
                                           g.workers);
    if (est.censored > 0)
      std::cerr << "warning: " << est.censored << " episodes censored at horizon " << horizon << '\n';
    if (g.format == "json") {
      json j{{"tau_mean", est.mean}, {"tau_se", est.std_error}, {"tau_upper", est.upper},
             {"worst_s", est.worst_s + base}, {"worst_s_hat", est.worst_s_hat + base}, {"censored", est.censored}};
      emit(g, "sync_time.json", j.dump(2) + "\n");
    } else {
      os << "schema_version,type,tau,tau_se,tau_upper,worst_s,worst_s_hat,censored\n"
         << kCsvSchemaVersion << ",0," << fmt_num(est.mean) << ',' << fmt_num(est.std_error) << ','
         << fmt_num(est.upper) << ',' << est.worst_s + base << ',' << est.worst_s_hat + base << ',' << est.censored
         << '\n';
      emit(g, "sync_time.csv", os.str());
    }
    return 0;
  }
  const auto reports = per_type_sync(inst, sol);
  if (g.format == "json") {
    json j = json::array();
    for (const auto& r : reports) j.push_back(sync_report_json(r, base));
    emit(g, "sync_time.json", j.dump(2) + "\n");
    return 0;
  }
  os << "schema_version,type,s,a,s_hat,a_hat,tau\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const int n = reports[k].n_states;
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 2; ++a)
        for (int sh = 0; sh < n; ++sh)
          for (int ah = 0; ah < 2; ++ah)
            os << kCsvSchemaVersion << ',' << k << ',' << s + base << ',' << a << ',' << sh + base << ',' << ah << ','
               << fmt_num(reports[k].tau(s, a, sh, ah)) << '\n';
  }
  emit(g, "sync_time.csv", os.str());
  return 0;
}

struct SimulateArgs {
  std::string instance;
  std::string policy = "ftva";
  std::string kind;
  int n_arms = 100;
  double horizon = 1000;
  double burn_in = -1;
  int trajectories = 20;
  std::string initial;
  bool occupancy = false;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  const RbInstance inst = load_checked(a.instance);
  if (!a.kind.empty() && a.kind != to_string(inst.kind))
    throw std::invalid_argument("--kind " + a.kind + " does not match instance kind " + to_string(inst.kind));
  RunConfig cfg;
  cfg.n_arms = a.n_arms;
  cfg.horizon = a.horizon;
  cfg.burn_in = a.burn_in;
  cfg.trajectories = a.trajectories;
  cfg.seed = g.seed;
  cfg.policy = a.policy;
  cfg.initial = a.initial.empty() ? InitialProtocol::all_in(0) : parse_initial(a.initial, inst);
  cfg.workers = g.workers;
  cfg.record_occupancy = a.occupancy && inst.kind == TimeKind::Discrete;
  const RunReport rep = run_any(inst, cfg);
  const HetSolution sol = solve_het(inst);
  const int base = inst.state_label_base;

  if (g.format == "json") {
    json j;
    j["policy"] = rep.policy;
    j["N"] = rep.n_arms;
    j["mean_reward"] = rep.mean;
    j["ci_half"] = rep.ci_half;
    j["v_rel"] = sol.value;
    j["mean_bad_arms"] = rep.mean_bad_arms;
    j["mean_mismatches"] = rep.mean_mismatches;
    j["event_rate"] = rep.event_rate;
    j["mean_period_length"] = rep.mean_period_length;
    j["littles_law"] = {{"lhs", rep.ledger.lhs}, {"rhs", rep.ledger.rhs}, {"relative_gap", rep.ledger.relative_gap}};
    j["epochs"] = rep.mean_epochs;
    j["trajectories"] = json::array();
    for (const auto& t : rep.trajectories) j["trajectories"].push_back(t.mean_reward);
    emit(g, "simulate.json", j.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "schema_version,policy,N,trajectory,mean_reward,mean_bad_arms,mean_mismatches,events,epochs\n";
    for (std::size_t r = 0; r < rep.trajectories.size(); ++r) {
      const auto& t = rep.trajectories[r];
      os << kCsvSchemaVersion << ',' << rep.policy << ',' << rep.n_arms << ',' << r << ',' << fmt_num(t.mean_reward)
         << ',' << fmt_num(t.mean_bad_arms) << ',' << fmt_num(t.mean_mismatches) << ',' << t.events << ','
         << t.epochs << '\n';
    }
    emit(g, "simulate.csv", os.str());
  }
  if (cfg.record_occupancy && !g.out.empty()) {
    const auto& occ = rep.occupancy;
    std::ofstream f(fs::path(g.out) / "diagnostics.csv", std::ios::binary);
    f << "schema_version,step,bad_arms,mismatches";
    for (int s = 0; s < occ.n_states; ++s) f << ",frac_" << s + base;
    f << '\n';
    for (int t = 0; t < occ.steps(); ++t) {
      f << kCsvSchemaVersion << ',' << t << ',' << (occ.bad_arms.empty() ? 0 : occ.bad_arms[t]) << ','
        << (occ.mismatches.empty() ? 0 : occ.mismatches[t]);
      for (int s = 0; s < occ.n_states; ++s) f << ',' << fmt_num(occ.at(t, s));
      f << '\n';
    }
    std::ofstream flows(fs::path(g.out) / "flows.csv", std::ios::binary);
    flows << "schema_version,state,flow_active,flow_passive\n";
    for (int s = 0; s < occ.n_states; ++s)
      flows << kCsvSchemaVersion << ',' << s + base << ',' << fmt_num(occ.flow_active[s]) << ','
            << fmt_num(occ.flow_passive[s]) << '\n';
  }
  std::cerr << rep.policy << " N=" << rep.n_arms << " mean=" << fmt_num(rep.mean) << " ci=" << fmt_num(rep.ci_half)
            << " v_rel=" << fmt_num(sol.value) << '\n';
  return 0;
}

int cmd_bound(const Globals& g, const std::string& ref, const std::string& n_list, long episodes, double horizon) {
  const RbInstance inst = load_checked(ref);
  const HetSolution sol = solve_het(inst);
  const BoundInfo b = compute_bound(inst, sol, g.seed, g.workers, {episodes, horizon});
  if (!b.available) throw std::invalid_argument("bound undefined: " + b.reason);
  const auto ns = parse_n_list(n_list);
  if (g.format == "json") {
    json j;
    j["theorem"] = b.theorem;
    j["r_max"] = b.r_max;
    j["tau"] = b.tau;
    j["v_rel"] = sol.value;
    if (b.theorem == "theorem2") {
      j["g_max"] = b.g_max;
      j["tau_mean"] = b.tau_mean;
      j["tau_se"] = b.tau_se;
    }
    j["rows"] = json::array();
    for (int n : ns) j["rows"].push_back({{"N", n}, {"bound", b.at(n)}, {"bound_at_mean", b.at_mean(n)}});
    emit(g, "bound.json", j.dump(2) + "\n");
    return 0;
  }
  std::ostringstream os;
  os << "schema_version,theorem,N,r_max,g_max,tau,bound,bound_at_mean\n";
  for (int n : ns)
    os << kCsvSchemaVersion << ',' << b.theorem << ',' << n << ',' << fmt_num(b.r_max) << ',' << fmt_num(b.g_max) << ','
       << fmt_num(b.tau) << ',' << fmt_num(b.at(n)) << ',' << fmt_num(b.at_mean(n)) << '\n';
  emit(g, "bound.csv", os.str());
  return 0;
}

int cmd_reproduce(const Globals& g, ReproduceOptions opt, const std::string& n_list) {
  opt.seed = g.seed;
  opt.workers = g.workers;
  if (!n_list.empty()) opt.n_list = parse_n_list(n_list);
  const auto res = reproduce(opt);
  const std::string dir = g.out.empty() ? "." : g.out;
  fs::create_directories(dir);
  write_gap_csv((fs::path(dir) / (opt.figure + "_rewards.csv")).string(), res.rows);
  if (!res.envelope.empty())
    write_gap_csv((fs::path(dir) / (opt.figure + "_envelope.csv")).string(), res.envelope);
  if (g.format == "json") {
    json j;
    j["figure"] = opt.figure;
    j["v_rel"] = res.v_rel;
    j["theorem"] = res.bound.theorem;
    j["tau"] = res.bound.tau;
    j["rows"] = json::array();
    for (const auto& r : res.rows) j["rows"].push_back(gap_json(r));
    std::ofstream f(fs::path(dir) / (opt.figure + "_gap.json"), std::ios::binary);
    f << j.dump(2) << '\n';
  }
  for (const auto& r : res.rows)
    std::cout << r.policy << " N=" << r.n_arms << " rep=" << r.replication << " mean=" << fmt_num(r.mean)
              << " ci=" << fmt_num(r.ci_half) << " gap=" << fmt_num(r.gap) << '\n';
  return 0;
}

int cmd_pipeline(const Globals& g, const std::string& spec_path, bool force) {
  std::ifstream in(spec_path);
  if (!in) throw SpecError("cannot open experiment spec '" + spec_path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("experiment spec: ") + e.what());
  }
  ExperimentSpec spec = spec_from_json(doc);
  if (doc.find("seed") == doc.end()) spec.seed = g.seed;
  const auto res = run_pipeline(spec, g.out.empty() ? "pipeline_out" : g.out, g.workers, force);
  std::cout << "cells run: " << res.cells_run << ", reused: " << res.cells_reused
            << ", failed: " << res.failures.size() << '\n';
  for (const auto& f : res.failures) std::cerr << "cell failure: " << f << '\n';
  return res.failures.empty() ? 0 : kExitCellFailures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FTVA restless-bandit toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads (0 = all available)")->capture_default_str();
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  std::string instance;
  std::string policy_ref = "lp-optimal";
  long episodes = 10000;
  double sync_horizon = 1e4;
  std::string n_list;

  auto* solve = app.add_subcommand("solve-lp", "Solve the single-armed relaxation");
  solve->add_option("instance", instance, "Built-in name or instance file")->required();

  auto* check = app.add_subcommand("check-sa", "Check the synchronization assumption");
  check->add_option("instance", instance)->required();
  check->add_option("--policy", policy_ref, "lp-optimal or a policy file")->capture_default_str();
  check->add_option("--episodes", episodes, "Monte Carlo episodes per pair (continuous time)");
  check->add_option("--sync-horizon", sync_horizon, "Censoring horizon (continuous time)");

  auto* sync = app.add_subcommand("sync-time", "Expected synchronization times");
  sync->add_option("instance", instance)->required();
  sync->add_option("--episodes", episodes, "Monte Carlo episodes per pair (continuous time)");
  sync->add_option("--sync-horizon", sync_horizon, "Censoring horizon (continuous time)");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate N-armed trajectories");
  simulate->add_option("instance", sim.instance)->required();
  simulate->add_option("--policy", sim.policy, "Policy selector")->capture_default_str();
  simulate->add_option("--kind", sim.kind, "Expected instance kind")->check(CLI::IsMember({"dt", "ct"}));
  simulate->add_option("-N,--n", sim.n_arms, "Number of arms")->capture_default_str();
  simulate->add_option("--horizon", sim.horizon, "Steps or time units")->capture_default_str();
  simulate->add_option("--burn-in", sim.burn_in, "Start of the averaging window (default horizon/4)");
  simulate->add_option("--trajectories", sim.trajectories, "Independent trajectories")->capture_default_str();
  simulate->add_option("--initial", sim.initial, "all-in:S | fractions:S=F,... | random-simplex[:SEED]");
  simulate->add_flag("--occupancy", sim.occupancy, "Write per-step diagnostics for trajectory 0");

  auto* bound = app.add_subcommand("bound", "Theoretical optimality-gap bounds");
  bound->add_option("instance", instance)->required();
  bound->add_option("--n-list", n_list, "Comma-separated N values")->required();
  bound->add_option("--episodes", episodes, "Monte Carlo episodes per pair (continuous time)");
  bound->add_option("--sync-horizon", sync_horizon, "Censoring horizon (continuous time)");

  ReproduceOptions rep;
  auto* repro = app.add_subcommand("reproduce", "Reproduce the reward-vs-N experiments");
  repro->add_option("figure", rep.figure)->required()->check(CLI::IsMember({"fig2", "fig4"}));
  repro->add_option("--n-list", n_list, "Comma-separated N values");
  repro->add_option("--trajectories", rep.trajectories)->capture_default_str();
  repro->add_option("--horizon", rep.horizon)->capture_default_str();
  repro->add_option("--burn-in", rep.burn_in)->capture_default_str();
  repro->add_option("--protocol", rep.protocol, "random-simplex for random initial states");
  repro->add_option("--reps", rep.reps, "Random initial states (random-simplex)")->capture_default_str();

  std::string spec_path;
  bool force = false;
  auto* pipe = app.add_subcommand("pipeline", "Run a resumable experiment spec");
  pipe->add_option("spec", spec_path, "Experiment spec JSON")->required();
  pipe->add_flag("--force", force, "Overwrite cells produced with different settings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*solve) return cmd_solve_lp(g, instance);
    if (*check) return cmd_check_sa(g, instance, policy_ref, episodes, sync_horizon);
    if (*sync) return cmd_sync_time(g, instance, episodes, sync_horizon);
    if (*simulate) return cmd_simulate(g, sim);
    if (*bound) return cmd_bound(g, instance, n_list, episodes, sync_horizon);
    if (*repro) return cmd_reproduce(g, rep, n_list);
    if (*pipe) return cmd_pipeline(g, spec_path, force);
  } catch (const InstanceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const SyncError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    // selector, divisibility and spec errors all derive from invalid_argument
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
