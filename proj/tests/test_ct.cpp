#include "ftva/hetero.hpp"
#include "ftva/policy_ct.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace ftva;

TEST_CASE("property: count engine keeps classes, budget and rates consistent") {
  const auto inst = builtin_instance("example2-ct");
  const auto& model = inst.ct_types[0];
  const auto sol = solve_het(inst);
  const int n_arms = 50, n = 3;
  for (auto tb : {TieBreak::GoodFirst, TieBreak::Uniform}) {
    Rng rng(4);
    FtvaCtEngine eng(model, inst.alpha, sol.policies[0], sol.marginals[0], std::vector<int>(n_arms, 0), tb, rng);
    CHECK(eng.epoch_rate() == doctest::Approx(2.0 * n_arms * g_max(model)));
    for (int epoch = 0; epoch < 3000; ++epoch) {
      eng.decide(rng);
      REQUIRE(eng.active_count() == eng.budget());
      // combo counts agree with the per-arm states
      std::vector<int> per_class(n * n, 0);
      for (int i = 0; i < n_arms; ++i) ++per_class[eng.real()[i] * n + eng.virtual_states()[i]];
      double g_real = 0.0, g_virt = 0.0;
      int bad = 0, vones = 0;
      for (int s = 0; s < n; ++s)
        for (int sh = 0; sh < n; ++sh) {
          int total = 0;
          for (int combo = 0; combo < 4; ++combo) {
            const int k = eng.combo_count(s, sh, combo);
            CHECK(k >= 0);
            total += k;
            const int a = combo & 1, ah = combo >> 1;
            vones += k * ah;
            g_real += k * model.total_rate(s, a);
            const bool coupled = s == sh && a == ah;
            if (!coupled) g_virt += k * model.total_rate(sh, ah);
            if (!coupled) bad += k;
          }
          CHECK(total == per_class[s * n + sh]);
        }
      CHECK(eng.real_rate() == doctest::Approx(g_real));
      CHECK(eng.virtual_rate() == doctest::Approx(g_virt));
      CHECK(eng.bad_arms() == bad);
      CHECK(eng.mismatches() == std::abs(vones - eng.budget()));
      CHECK(eng.real_rate() + eng.virtual_rate() <= eng.epoch_rate() + 1e-9);
      eng.apply_event(rng);
    }
  }
}

TEST_CASE("count engine matches a per-arm reference in distribution") {
  const auto inst = builtin_instance("example2-ct");
  const auto sol = solve_het(inst);
  const int n_arms = 20, reps = 40;
  const double horizon = 150, burn = 30;
  RunConfig cfg;
  cfg.n_arms = n_arms;
  cfg.horizon = horizon;
  cfg.burn_in = burn;
  cfg.trajectories = reps;
  cfg.seed = 21;
  cfg.initial = InitialProtocol::all_in(2);
  const auto rep = run_ct(inst, cfg);

  std::vector<double> ref;
  for (int r = 0; r < reps; ++r)
    ref.push_back(oracle::ct_ftva_reference(inst.ct_types[0], inst.alpha, sol.policies[0], sol.marginals[0],
                                            std::vector<int>(n_arms, 2), horizon, burn, 500 + r));
  const auto est = oracle::summarize(ref);
  const double se = std::hypot(est.se, rep.std_dev / std::sqrt(double(reps)));
  CHECK(std::abs(est.mean - rep.mean) < 4.0 * se);
}

TEST_CASE("continuous-time runs: determinism, epochs and restrictions") {
  const auto inst = builtin_instance("example2-ct");
  RunConfig cfg;
  cfg.n_arms = 50;
  cfg.horizon = 200;
  cfg.trajectories = 5;
  cfg.seed = 2;
  const auto a = run_ct(inst, cfg);
  const auto b = run_ct_serial(inst, cfg);
  for (int r = 0; r < cfg.trajectories; ++r) {
    CHECK(a.trajectories[r].mean_reward == b.trajectories[r].mean_reward);
    CHECK(a.trajectories[r].epochs == b.trajectories[r].epochs);
  }
  const double expected = 2.0 * cfg.n_arms * g_max(inst.ct_types[0]) * (cfg.horizon - cfg.window_start());
  CHECK(std::abs(a.mean_epochs - expected) < 4.0 * a.epochs_se + 1e-9);
  CHECK(a.has_virtual);

  cfg.policy = "priority:lagrangian";
  CHECK_THROWS_AS(run_ct(inst, cfg), SelectorError);
  cfg.policy = "ftva";
  RbInstance het = inst;
  het.betas = {0.5, 0.5};
  het.ct_types.push_back(het.ct_types[0]);
  CHECK_THROWS_AS(run_ct(het, cfg), std::invalid_argument);
  CHECK_THROWS_AS(run_ct(builtin_instance("example2"), cfg), std::invalid_argument);
  CHECK(ct_bound(1.0, 0.5, 2.0, 100) == doctest::Approx(0.3));
}
