#include "ftva/hetero.hpp"
#include "ftva/policy_dt.hpp"
#include "ftva/sim_dt.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace ftva;

namespace {

bool same_stats(const TrajectoryStats& a, const TrajectoryStats& b) {
  return a.mean_reward == b.mean_reward && a.mean_bad_arms == b.mean_bad_arms &&
         a.mean_mismatches == b.mean_mismatches && a.events == b.events && a.periods == b.periods &&
         a.period_length_sum == b.period_length_sum && a.virtual_law == b.virtual_law && a.occupancy == b.occupancy;
}

}  // namespace

TEST_CASE("selector parsing") {
  const auto e2 = builtin_instance("example2");
  const auto e4 = builtin_instance("example4");
  auto sel = parse_policy_selector("ftva", e2);
  CHECK(sel.is_ftva());
  CHECK(sel.tie_break == TieBreak::GoodFirst);
  CHECK(parse_policy_selector("ftva:uniform", e2).tie_break == TieBreak::Uniform);

  sel = parse_policy_selector("priority:lagrangian", e4);
  CHECK(sel.kind == PolicySelector::Kind::PriorityLagrangian);
  CHECK_FALSE(sel.lambda.has_value());
  CHECK(*parse_policy_selector("priority:lagrangian:0", e4).lambda == 0.0);
  CHECK(*parse_policy_selector("priority:lagrangian:-0.25", e4).lambda == -0.25);

  // example2 labels states from 1
  sel = parse_policy_selector("priority:list:1>2>3", e2);
  CHECK(sel.order == std::vector<int>{0, 1, 2});

  sel = parse_policy_selector("twoclass:{0,1,2,3}|{4,5,6,7}", e4);
  CHECK(sel.high_class == std::vector<int>{0, 1, 2, 3});
  CHECK(sel.low_class == std::vector<int>{4, 5, 6, 7});

  for (const char* bad : {"", "ftva:sideways", "priority", "priority:lagrangian:abc", "priority:list:1>9",
                          "priority:list:0>1", "twoclass:{0,1}", "twoclass:{0,1}|{1,2}", "whittle"}) {
    INFO(bad);
    CHECK_THROWS_AS(parse_policy_selector(bad, bad[0] == 'p' ? e2 : e4), SelectorError);
  }
}

TEST_CASE("initial protocols and largest remainder") {
  CHECK(initial_counts(InitialProtocol::from_fractions({{1, 1.0 / 3}, {2, 2.0 / 3}}), 8, 1000) ==
        std::vector<int>{0, 333, 667, 0, 0, 0, 0, 0});
  CHECK(initial_counts(InitialProtocol::all_in(2), 3, 10) == std::vector<int>{0, 0, 10});
  CHECK(expand_counts({2, 0, 1}) == std::vector<int>{0, 0, 2});
  CHECK(largest_remainder({0.5, 0.5}, 3) == std::vector<int>{2, 1});
  CHECK_THROWS_AS(initial_counts(InitialProtocol::all_in(5), 3, 10), std::invalid_argument);
  CHECK_THROWS_AS(initial_counts(InitialProtocol::from_fractions({{0, 0.5}}), 3, 10), std::invalid_argument);

  std::mt19937_64 g(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 9, n = 1 + static_cast<int>(g() % 500);
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& x : w) total += x = std::uniform_real_distribution<double>(0, 1)(g);
    for (auto& x : w) x /= total;
    const auto c = largest_remainder(w, n);
    int sum = 0;
    for (int i = 0; i < k; ++i) {
      sum += c[i];
      CHECK(std::abs(c[i] - w[i] * n) < 1.0);
    }
    CHECK(sum == n);
  }
  const auto a = initial_counts(InitialProtocol::random_simplex(4), 8, 100);
  CHECK(a == initial_counts(InitialProtocol::random_simplex(4), 8, 100));
  CHECK(a != initial_counts(InitialProtocol::random_simplex(5), 8, 100));
}

TEST_CASE("property: FTVA keeps the budget exact and coupled arms coupled") {
  for (const char* name : {"example2", "example4"}) {
    for (auto tb : {TieBreak::GoodFirst, TieBreak::Uniform}) {
      const auto inst = builtin_instance(name);
      const auto sol = solve_het(inst);
      const int n_arms = 60;
      Rng rng(42);
      std::vector<int> init(n_arms, 0);
      FtvaEngine eng(inst, sol.policies, sol.marginals, assign_types(inst, n_arms), init, tb, rng);
      for (int t = 0; t < 500; ++t) {
        eng.decide(rng);
        int active = 0;
        for (int a : eng.actions()) active += a;
        REQUIRE(active == eng.budget());
        int mism = 0;
        for (int i = 0; i < n_arms; ++i) mism += eng.actions()[i] != eng.virtual_actions()[i];
        CHECK(mism == eng.mismatches());
        std::vector<char> good(n_arms);
        for (int i = 0; i < n_arms; ++i)
          good[i] = eng.real()[i] == eng.virtual_states()[i] && eng.actions()[i] == eng.virtual_actions()[i];
        eng.transition(rng);
        for (int i = 0; i < n_arms; ++i)
          if (good[i]) CHECK(eng.real()[i] == eng.virtual_states()[i]);
      }
    }
  }
}

TEST_CASE("good-first flips uncoupled arms before coupled ones") {
  const auto inst = builtin_instance("example4");
  const auto sol = solve_het(inst);
  const int n_arms = 100;
  Rng rng(8);
  FtvaEngine eng(inst, sol.policies, sol.marginals, assign_types(inst, n_arms), std::vector<int>(n_arms, 0),
                 TieBreak::GoodFirst, rng);
  for (int t = 0; t < 300; ++t) {
    eng.decide(rng);
    int flipped_coupled = 0, unflipped_uncoupled = 0;
    const int want = [&] {
      int ones = 0;
      for (int a : eng.virtual_actions()) ones += a;
      return ones > eng.budget() ? 1 : 0;
    }();
    for (int i = 0; i < n_arms; ++i) {
      if (eng.virtual_actions()[i] != want) continue;
      const bool coupled = eng.real()[i] == eng.virtual_states()[i];
      const bool flipped = eng.actions()[i] != want;
      if (flipped && coupled) ++flipped_coupled;
      if (!flipped && !coupled) ++unflipped_uncoupled;
    }
    if (eng.mismatches() > 0) CHECK((flipped_coupled == 0 || unflipped_uncoupled == 0));
    eng.transition(rng);
  }
}

TEST_CASE("property: priority policies activate highest scores first") {
  const auto inst = builtin_instance("example4");
  const auto occ = solve_relaxation(inst);
  for (const char* text : {"priority:lagrangian:0", "twoclass:{0,1,2,3}|{4,5,6,7}", "priority:list:7>6>5>4>3>2>1>0"}) {
    const auto scores = resolve_priority(parse_policy_selector(text, inst), inst, occ);
    const int n_arms = 50;
    std::vector<int> init(n_arms);
    for (int i = 0; i < n_arms; ++i) init[i] = i % 8;
    PriorityEngine eng(inst, scores, assign_types(inst, n_arms), init);
    Rng rng(3);
    for (int t = 0; t < 300; ++t) {
      eng.decide(rng);
      double lo_active = 1e300, hi_passive = -1e300;
      int active = 0;
      for (int i = 0; i < n_arms; ++i) {
        const double sc = scores.score[0][eng.real()[i]];
        if (eng.actions()[i]) {
          lo_active = std::min(lo_active, sc);
          ++active;
        } else {
          hi_passive = std::max(hi_passive, sc);
        }
      }
      INFO(text);
      REQUIRE(active == eng.budget());
      CHECK(lo_active >= hi_passive);
      eng.transition(rng);
    }
  }
}

TEST_CASE("lagrangian default lambda is the budget dual") {
  const auto inst = builtin_instance("example2");
  const auto occ = solve_relaxation(inst);
  const auto a = resolve_priority(parse_policy_selector("priority:lagrangian", inst), inst, occ);
  const auto idx = lagrangian_indices(inst.dt_types[0], occ.budget_dual);
  CHECK(a.score[0] == idx.index);
}

TEST_CASE("parallel and serial runs are bit-identical and seed-stable") {
  RunConfig cfg;
  cfg.n_arms = 200;
  cfg.horizon = 400;
  cfg.trajectories = 6;
  cfg.seed = 123;
  cfg.initial = InitialProtocol::all_in(0);
  for (const char* policy : {"ftva", "ftva:uniform", "priority:lagrangian", "priority:list:1>2>3"}) {
    cfg.policy = policy;
    const auto inst = builtin_instance("example2");
    const auto par = run(inst, cfg);
    cfg.workers = 3;
    const auto par3 = run(inst, cfg);
    cfg.workers = 0;
    const auto ser = run_serial(inst, cfg);
    INFO(policy);
    REQUIRE(par.trajectories.size() == ser.trajectories.size());
    for (std::size_t r = 0; r < ser.trajectories.size(); ++r) {
      CHECK(same_stats(par.trajectories[r], ser.trajectories[r]));
      CHECK(same_stats(par3.trajectories[r], ser.trajectories[r]));
    }
    CHECK(par.mean == ser.mean);
    cfg.seed = 124;
    CHECK(run_serial(inst, cfg).mean != ser.mean);
    cfg.seed = 123;
  }
}

TEST_CASE("FTVA engine matches a per-arm reference in distribution") {
  const auto inst = builtin_instance("example2");
  const auto sol = solve_het(inst);
  const int n_arms = 20, reps = 60;
  const long horizon = 300, burn = 50;
  RunConfig cfg;
  cfg.n_arms = n_arms;
  cfg.horizon = horizon;
  cfg.burn_in = burn;
  cfg.trajectories = reps;
  cfg.seed = 9;
  cfg.initial = InitialProtocol::all_in(2);
  const auto rep = run(inst, cfg);

  std::vector<double> ref;
  for (int r = 0; r < reps; ++r)
    ref.push_back(oracle::dt_ftva_reference(inst.dt_types[0], inst.alpha, sol.policies[0], sol.marginals[0],
                                            std::vector<int>(n_arms, 2), horizon, burn, 1000 + r));
  const auto est = oracle::summarize(ref);
  const double se = std::hypot(est.se, rep.std_dev / std::sqrt(double(reps)));
  CHECK(std::abs(est.mean - rep.mean) < 4.0 * se);
}

TEST_CASE("virtual law tracks the occupation measure") {
  const auto inst = builtin_instance("example2");
  const auto occ = solve_relaxation(inst);
  RunConfig cfg;
  cfg.n_arms = 100;
  cfg.horizon = 2000;
  cfg.burn_in = 0;
  cfg.trajectories = 1;
  cfg.seed = 77;
  const auto rep = run(inst, cfg);
  double tv = 0.0;
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) tv += std::abs(rep.trajectories[0].virtual_law[0][s * 2 + a] - occ.at(0, s, a));
  CHECK(0.5 * tv < 0.01);
}

TEST_CASE("little's law bookkeeping on a long run") {
  const auto inst = builtin_instance("example4");
  RunConfig cfg;
  cfg.n_arms = 200;
  cfg.horizon = 10000;
  cfg.trajectories = 1;
  cfg.seed = 5;
  cfg.initial = InitialProtocol::from_fractions({{1, 1.0 / 3}, {2, 2.0 / 3}});
  const auto rep = run(inst, cfg);
  const auto& st = rep.trajectories[0];
  CHECK(st.events > 0);
  CHECK(st.periods > 0);
  CHECK(littles_law_ledger(st).relative_gap < 0.05);
  CHECK(rep.ledger.relative_gap < 0.05);
}

TEST_CASE("occupancy series") {
  const auto inst = builtin_instance("example4");
  RunConfig cfg;
  cfg.n_arms = 100;
  cfg.horizon = 50;
  cfg.trajectories = 2;
  cfg.record_occupancy = true;
  cfg.initial = InitialProtocol::all_in(0);
  const auto rep = run(inst, cfg);
  const auto& series = rep.occupancy;
  REQUIRE(series.steps() == 50);
  CHECK(series.at(0, 0) == doctest::Approx(1.0));
  for (int t = 0; t < series.steps(); ++t) {
    double total = 0.0;
    for (int s = 0; s < 8; ++s) total += series.at(t, s);
    CHECK(total == doctest::Approx(1.0));
  }
  CHECK(series.bad_arms.size() == 50u);
  const auto occ = window_occupancy(series, 10);
  double total = 0.0;
  for (double x : occ) total += x;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("run rejects bad configurations") {
  const auto inst = builtin_instance("example2");
  RunConfig cfg;
  cfg.n_arms = 101;
  CHECK_THROWS_AS(run(inst, cfg), DivisibilityError);
  cfg.n_arms = 100;
  cfg.policy = "bogus";
  CHECK_THROWS_AS(run(inst, cfg), SelectorError);
  cfg.policy = "ftva";
  cfg.burn_in = 5000;
  CHECK_THROWS_AS(run(inst, cfg), std::invalid_argument);
  cfg.burn_in = -1;
  CHECK_THROWS_AS(run(builtin_instance("example2-ct"), cfg), std::invalid_argument);
}
