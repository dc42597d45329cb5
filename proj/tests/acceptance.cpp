// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance <path-to-ftva-binary> [scratch-dir]

#include "ftva/experiments.hpp"
#include "ftva/hetero.hpp"
#include "ftva/lp_relax.hpp"
#include "ftva/policy_ct.hpp"
#include "ftva/sim_dt.hpp"
#include "ftva/sync_analysis.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

using namespace ftva;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    v.pass = false;
    v.detail += " [over time budget " + fmt_num(budget_s) + " s]";
  }
  if (!v.pass) ++failures;
  std::printf("[%s] C%d %s: %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

SingleArmPolicy lp_policy(const RbInstance& inst) { return policy_from_occupation(solve_relaxation(inst)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  const std::string ftva_bin = argc > 1 ? argv[1] : "";
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "ftva_acceptance";

  criterion(1, "LP fidelity", 2.0, [] {
    const double pub[3][2] = {{0, 0.29943}, {0.23768, 0.10057}, {0.36232, 0}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto y2 = solve_relaxation(builtin_instance("example2"));
    const double t2 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double err2 = 0.0;
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 2; ++a) err2 = std::max(err2, std::abs(y2.at(0, s, a) - pub[s][a]));
    const auto t1 = std::chrono::steady_clock::now();
    const auto y4 = solve_relaxation(builtin_instance("example4"));
    const double t4 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    double err4 = 0.0;
    for (int s = 0; s < 4; ++s) err4 = std::max(err4, std::abs(y4.at(0, s, 1) - 0.125));
    return Verdict{err2 <= 1e-4 && err4 <= 1e-9 && t2 < 1 && t4 < 1,
                   "example2 max|dy|=" + num(err2) + " (tol 1e-4), example4 max|y(s,1)-0.125|=" + num(err4) +
                       " (tol 1e-9)"};
  });

  criterion(2, "Index fidelity", 1.0, [] {
    const std::vector<double> pub{0.0125, 0.1375, 0.0725, 0.07125, -0.07, -0.06875, -0.0675, -0.06625};
    const auto res = lagrangian_indices(builtin_instance("example4").dt_types[0], 0.0);
    double err = 0.0;
    for (int s = 0; s < 8; ++s) err = std::max(err, std::abs(res.index[s] - pub[s]));
    const auto order = priority_order(res.index);
    std::string text;
    for (int s : order) text += (text.empty() ? "" : ">") + std::to_string(s);
    return Verdict{err <= 1e-5 && text == "1>2>3>0>7>6>5>4", "max|dindex|=" + num(err) + ", priority " + text};
  });

  criterion(3, "SA certification", 30.0, [] {
    bool ok = true;
    std::string detail;
    for (const char* name : {"example2", "example4"}) {
      const auto inst = builtin_instance(name);
      const auto& m = inst.dt_types[0];
      const auto pi = lp_policy(inst);
      const bool reach = check_sa_reachability(m, pi).holds;
      const auto cond = check_sufficient_conditions(m, pi);
      const bool want = std::string(name) == "example2"
                            ? cond.has("self-loop-all-states")
                            : cond.has("self-loop-one-state") && cond.self_loop_state == 3;
      const auto rep = exact_sync_times(m, pi);
      const auto [s, a, sh, ah] = rep.argmax;
      const auto mc = oracle::dt_sync_mc(m, pi, s, a, sh, ah, 100000, 20240521);
      const double z = std::abs(mc.mean - rep.tau_max) / mc.se;
      ok = ok && reach && want && z <= 3.0;
      detail += std::string(detail.empty() ? "" : "; ") + name + ": reach=" + (reach ? "yes" : "no") +
                " condition=" + (want ? "ok" : "missing") + " tau=" + num(rep.tau_max) + " mc=" + num(mc.mean) +
                " z=" + num(z);
    }
    return Verdict{ok, detail};
  });

  criterion(4, "Desk-scale bound, discrete time", 300.0, [] {
    const auto inst = builtin_instance("example2");
    const auto sol = solve_het(inst);
    const auto bound = compute_bound(inst, sol, 0, 0);
    bool ok = bound.available;
    std::string detail = "tau_max=" + num(bound.tau);
    for (int n_arms : {100, 400, 1000}) {
      RunConfig cfg;
      cfg.n_arms = n_arms;
      cfg.horizon = 2000;
      cfg.trajectories = 20;
      cfg.seed = 1000 + n_arms;
      const auto rep = run(inst, cfg);
      const double gap = sol.value - rep.mean;
      const double rhs = bound.at(n_arms) + 3.0 * rep.ci_half;
      ok = ok && gap <= rhs;
      detail += "; N=" + std::to_string(n_arms) + " gap=" + num(gap) + " <= " + num(rhs);
    }
    return Verdict{ok, detail};
  });

  criterion(5, "Separation from the mean-field baselines", 300.0, [] {
    const auto inst = builtin_instance("example4");
    const double v_rel = solve_het(inst).value;
    RunConfig cfg;
    cfg.n_arms = 1000;
    cfg.horizon = 1000;
    cfg.burn_in = 0;
    cfg.trajectories = 20;
    cfg.initial = figure_initial("fig4");
    bool ok = true;
    std::string detail;
    double ftva_lo = 0.0, base_hi = -1e300;
    for (const auto& policy : figure_policies("fig4")) {
      cfg.policy = policy;
      cfg.seed = 55;
      const auto rep = run(inst, cfg);
      const bool is_ftva = policy == "ftva";
      if (is_ftva) {
        ok = ok && rep.mean >= 0.8 * v_rel;
        ftva_lo = rep.mean - rep.ci_half;
      } else {
        ok = ok && rep.mean <= 0.2 * v_rel;
        base_hi = std::max(base_hi, rep.mean + rep.ci_half);
      }
      detail += std::string(detail.empty() ? "" : "; ") + policy + " " + num(rep.mean) + "+-" + num(rep.ci_half);
    }
    ok = ok && ftva_lo > base_hi;
    return Verdict{ok, detail + "; V_rel=" + num(v_rel)};
  });

  criterion(6, "Mean-field diagnostics", 300.0, [] {
    const auto inst = builtin_instance("example4");
    const auto tau = exact_sync_times(inst.dt_types[0], lp_policy(inst)).tau_max;
    RunConfig cfg;
    cfg.n_arms = 1000;
    cfg.horizon = 10000;
    cfg.trajectories = 3;
    cfg.seed = 66;
    cfg.initial = figure_initial("fig4");
    const auto rep = run(inst, cfg);
    const double mism_rhs = std::sqrt(1000.0) / 2 + 3.0 * rep.mismatch_se;
    double worst_ledger = 0.0;
    for (const auto& t : rep.trajectories) worst_ledger = std::max(worst_ledger, littles_law_ledger(t).relative_gap);
    const double period_rhs = tau + 3.0 * rep.period_length_se;
    const bool ok = rep.mean_mismatches <= mism_rhs && worst_ledger <= 0.05 && rep.mean_period_length <= period_rhs;
    return Verdict{ok, "mismatches " + num(rep.mean_mismatches) + " <= " + num(mism_rhs) + "; Little gap " +
                           num(100 * worst_ledger) + "% <= 5%; period " + num(rep.mean_period_length) + " <= " +
                           num(period_rhs)};
  });

  criterion(7, "Virtual-law property", 60.0, [] {
    const auto inst = builtin_instance("example2");
    const auto occ = solve_relaxation(inst);
    RunConfig cfg;
    cfg.n_arms = 100;
    cfg.horizon = 1000;
    cfg.burn_in = 0;
    cfg.trajectories = 1;
    cfg.seed = 77;
    const auto rep = run(inst, cfg);
    double tv = 0.0;
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 2; ++a) tv += std::abs(rep.trajectories[0].virtual_law[0][s * 2 + a] - occ.at(0, s, a));
    tv *= 0.5;
    return Verdict{tv <= 0.01, "TV=" + num(tv) + " over 1e5 arm-steps (tol 0.01)"};
  });

  criterion(8, "Desk-scale bound, continuous time", 600.0, [] {
    const auto inst = builtin_instance("example2-ct");
    const auto sol = solve_het(inst);
    const auto bound = compute_bound(inst, sol, 8, 0);
    const double gmax = g_max(inst.ct_types[0]);
    bool ok = bound.available && bound.censored == 0;
    std::string detail = "tau_hat upper=" + num(bound.tau) + " g_max=" + num(gmax);
    for (int n_arms : {100, 500}) {
      RunConfig cfg;
      cfg.n_arms = n_arms;
      cfg.horizon = 2000;
      cfg.trajectories = 10;
      cfg.seed = 8000 + n_arms;
      const auto rep = run_ct(inst, cfg);
      const double gap = sol.value - rep.mean;
      const double rhs = ct_bound(inst.r_max(), gmax, bound.tau, n_arms) + 3.0 * rep.ci_half;
      const double expected = 2.0 * n_arms * gmax * (cfg.horizon - cfg.window_start());
      const double z = std::abs(rep.mean_epochs - expected) / rep.epochs_se;
      ok = ok && gap <= rhs && z <= 3.0;
      detail += "; N=" + std::to_string(n_arms) + " gap=" + num(gap) + " <= " + num(rhs) + ", epochs " +
                num(rep.mean_epochs) + " vs " + num(expected) + " (z=" + num(z) + ")";
    }
    return Verdict{ok, detail};
  });

  criterion(9, "Heterogeneity reduction", 60.0, [] {
    const auto homo = builtin_instance("example2");
    auto het = homo;
    het.betas = {0.5, 0.5};
    het.dt_types.push_back(het.dt_types[0]);
    const auto hs = solve_het(homo);
    const auto ts = solve_het(het);
    const double dv = std::abs(hs.value - ts.value);
    RunConfig cfg;
    cfg.n_arms = 400;
    cfg.horizon = 500;
    cfg.trajectories = 4;
    cfg.seed = 99;
    const auto a = run(homo, cfg);
    const auto b = run(het, cfg);
    bool same = true;
    for (int r = 0; r < cfg.trajectories; ++r)
      same = same && a.trajectories[r].mean_reward == b.trajectories[r].mean_reward &&
             a.trajectories[r].occupancy == b.trajectories[r].occupancy;
    const auto reports = per_type_sync(homo, hs);
    const double hb = het_bound(reports, homo.r_max(), 400);
    const double t1 = homo.r_max() * exact_sync_times(homo.dt_types[0], hs.policies[0]).tau_max / std::sqrt(400.0);
    return Verdict{dv <= 1e-8 && same && hb == t1, "|dV|=" + num(dv) + ", trajectories " +
                                                     (same ? "identical" : "differ") + ", het_bound " + num(hb) +
                                                     (hb == t1 ? " == " : " != ") + num(t1)};
  });

  criterion(10, "Determinism", 600.0, [&] {
    if (ftva_bin.empty()) return Verdict{false, "no ftva binary given"};
    fs::remove_all(scratch);
    std::string files;
    bool same = true;
    for (const char* run_dir : {"a", "b"}) {
      const auto out = scratch / run_dir;
      fs::create_directories(out);
      const std::string cmd =
          "\"" + ftva_bin + "\" reproduce fig4 --seed 7 --out \"" + out.string() + "\" > \"" + (out / "log").string() +
          "\" 2>&1";
      if (std::system(cmd.c_str()) != 0) return Verdict{false, "reproduce exited nonzero; see " + out.string()};
    }
    int count = 0;
    for (const auto& e : fs::directory_iterator(scratch / "a")) {
      if (e.path().extension() != ".csv") continue;
      ++count;
      const auto other = scratch / "b" / e.path().filename();
      const bool eq = fs::exists(other) && slurp(e.path()) == slurp(other);
      same = same && eq;
      files += std::string(files.empty() ? "" : ", ") + e.path().filename().string() + (eq ? " identical" : " DIFFER");
    }
    return Verdict{same && count > 0, files.empty() ? "no CSV written" : files};
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
