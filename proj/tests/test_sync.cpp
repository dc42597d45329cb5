#include "ftva/lp_relax.hpp"
#include "ftva/sync_analysis.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace ftva;

namespace {

SingleArmPolicy lp_policy(const std::string& name) {
  return policy_from_occupation(solve_relaxation(builtin_instance(name)));
}

std::vector<std::vector<double>> edge_weights(const DtMdp& m, const SingleArmPolicy& pi) {
  const int n = m.n_states;
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 2; ++a)
      for (int t = 0; t < n; ++t) w[s][t] += pi.prob(s, a) * m.p(s, a, t);
  return w;
}

}  // namespace

TEST_CASE("reachability and sufficient conditions on the builtins") {
  const auto m2 = builtin_instance("example2").dt_types[0];
  const auto pi2 = lp_policy("example2");
  CHECK(check_sa_reachability(m2, pi2).holds);
  const auto c2 = check_sufficient_conditions(m2, pi2);
  CHECK(c2.has("self-loop-all-states"));
  CHECK(c2.satisfied.front() == "self-loop-all-states");

  const auto m4 = builtin_instance("example4").dt_types[0];
  const auto pi4 = lp_policy("example4");
  CHECK(check_sa_reachability(m4, pi4).holds);
  const auto c4 = check_sufficient_conditions(m4, pi4);
  CHECK_FALSE(c4.has("self-loop-all-states"));
  CHECK(c4.has("self-loop-one-state"));
  CHECK(c4.self_loop_state == 3);
  CHECK(c4.inconclusive.empty());
}

TEST_CASE("sync fails when the pair can never meet") {
  // two states that swap deterministically under both actions
  DtMdp m(2);
  m.p(0, 0, 1) = m.p(0, 1, 1) = m.p(1, 0, 0) = m.p(1, 1, 0) = 1.0;
  const auto pi = SingleArmPolicy::deterministic({0, 0});
  const auto reach = check_sa_reachability(m, pi);
  CHECK_FALSE(reach.holds);
  REQUIRE(reach.witness.has_value());
  CHECK((*reach.witness)[0] != (*reach.witness)[2]);
  CHECK_THROWS_AS(exact_sync_times(m, pi), SyncError);
  CHECK(check_sufficient_conditions(m, pi).satisfied.empty());
}

TEST_CASE("exact sync times agree with a leader/follower Monte Carlo") {
  for (const char* name : {"example2", "example4"}) {
    const auto m = builtin_instance(name).dt_types[0];
    const auto pi = lp_policy(name);
    const auto rep = exact_sync_times(m, pi);
    INFO(name);
    const auto [s, a, sh, ah] = rep.argmax;
    const auto est = oracle::dt_sync_mc(m, pi, s, a, sh, ah, 20000, 99);
    CHECK(std::abs(est.mean - rep.tau_max) < 3.5 * est.se);
    // every table entry is at least one step and the max is attained
    double mx = 0.0;
    for (double v : rep.tau_table) mx = std::max(mx, v);
    CHECK(mx == rep.tau_max);
    CHECK(rep.tau(s, a, sh, ah) == rep.tau_max);
  }
  const auto rep4 = exact_sync_times(builtin_instance("example4").dt_types[0], lp_policy("example4"));
  CHECK(rep4.tau_max == doctest::Approx(45.2).epsilon(0.01));
}

TEST_CASE("closed classes match a transitive-closure oracle") {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = oracle::random_dt(2 + trial % 7, g, 0.75);
    std::vector<int> acts(m.n_states);
    for (auto& a : acts) a = static_cast<int>(g() & 1);
    const auto pi = SingleArmPolicy::deterministic(acts);
    auto got = recurrent_classes(m, pi);
    for (auto& c : got) std::sort(c.begin(), c.end());
    std::sort(got.begin(), got.end());
    INFO("trial " << trial);
    CHECK(got == oracle::closed_classes(edge_weights(m, pi)));
  }
}

TEST_CASE("property: random kernels certified by reachability have finite times") {
  std::mt19937_64 g(17);
  int certified = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = oracle::random_dt(3, g, 0.5);
    std::vector<double> probs;
    for (int s = 0; s < 3; ++s) {
      const double p = std::uniform_real_distribution<double>(0, 1)(g);
      probs.push_back(1 - p);
      probs.push_back(p);
    }
    const SingleArmPolicy pi{3, probs};
    if (!check_sa_reachability(m, pi).holds) {
      CHECK_THROWS_AS(exact_sync_times(m, pi), SyncError);
      continue;
    }
    ++certified;
    const auto rep = exact_sync_times(m, pi);
    CHECK(std::isfinite(rep.tau_max));
    const auto [s, a, sh, ah] = rep.argmax;
    const auto est = oracle::dt_sync_mc(m, pi, s, a, sh, ah, 4000, trial);
    CHECK(std::abs(est.mean - rep.tau_max) < 4.0 * est.se + 1e-9);
  }
  CHECK(certified > 10);
}

TEST_CASE("unichain enumeration") {
  CHECK(check_unichain(builtin_instance("example2").dt_types[0]).unichain);
  const auto res = check_unichain(builtin_instance("example4").dt_types[0]);
  CHECK_FALSE(res.unichain);
  REQUIRE(res.witness.size() == 8u);
  CHECK(recurrent_classes(builtin_instance("example4").dt_types[0], SingleArmPolicy::deterministic(res.witness)).size() >=
        2u);
  CHECK_THROWS_AS(check_unichain(DtMdp(21)), std::invalid_argument);
}

TEST_CASE("continuous-time sync estimate on a two-state chain") {
  // Any jump of either arm makes them meet, so E[tau] = 1 / (lambda + mu).
  const double lambda = 0.7, mu = 1.6;
  CtMdp m(2);
  for (int a = 0; a < 2; ++a) {
    m.rate_ref(0, a, 1) = lambda;
    m.rate_ref(1, a, 0) = mu;
  }
  const auto pi = SingleArmPolicy::deterministic({1, 0});
  const auto est = ct_sync_time_estimate(m, pi, 40000, 1e3, 5, 1);
  CHECK(std::abs(est.mean - 1.0 / (lambda + mu)) < 4.0 * est.std_error);
  CHECK(est.upper == doctest::Approx(est.mean + 1.96 * est.std_error));
  CHECK(est.censored == 0);
  CHECK(est.episodes_per_pair == 40000);
}

TEST_CASE("continuous-time sync estimate is thread-count invariant") {
  const auto inst = builtin_instance("example2-ct");
  const auto pi = policy_from_occupation(solve_relaxation(inst));
  const auto a = ct_sync_time_estimate(inst.ct_types[0], pi, 2000, 1e4, 11, 1);
  const auto b = ct_sync_time_estimate(inst.ct_types[0], pi, 2000, 1e4, 11, 4);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);
  CHECK(a.worst_s == b.worst_s);
  CHECK(a.worst_s_hat == b.worst_s_hat);
}
