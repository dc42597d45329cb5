// Serial vs OpenMP trajectory throughput on the built-in instances.

#include "ftva/policy_ct.hpp"
#include "ftva/sim_dt.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>

using namespace ftva;

namespace {

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void compare(const char* label, const RbInstance& inst, const RunConfig& cfg, bool ct) {
  RunReport serial, parallel;
  const double ts = seconds([&] { serial = ct ? run_ct_serial(inst, cfg) : run_serial(inst, cfg); });
  const double tp = seconds([&] { parallel = ct ? run_ct(inst, cfg) : run(inst, cfg); });
  const bool same = serial.mean == parallel.mean && serial.std_dev == parallel.std_dev;
  std::printf("%-28s serial %8.3fs  omp(%d) %8.3fs  speedup %5.2fx  identical=%s\n", label, ts, omp_get_max_threads(), tp,
              ts / tp, same ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 8;
  RunConfig cfg;
  cfg.trajectories = reps;
  cfg.seed = 1;

  cfg.n_arms = 1000;
  cfg.horizon = 1000;
  cfg.policy = "ftva";
  compare("example2 ftva N=1000", builtin_instance("example2"), cfg, false);

  cfg.initial = InitialProtocol::from_fractions({{1, 1.0 / 3}, {2, 2.0 / 3}});
  compare("example4 ftva N=1000", builtin_instance("example4"), cfg, false);
  cfg.policy = "priority:lagrangian:0";
  compare("example4 lagrangian N=1000", builtin_instance("example4"), cfg, false);

  cfg.initial = InitialProtocol::all_in(0);
  cfg.policy = "ftva";
  cfg.n_arms = 500;
  cfg.horizon = 200;
  compare("example2-ct ftva N=500 T=200", builtin_instance("example2-ct"), cfg, true);
  return 0;
}
