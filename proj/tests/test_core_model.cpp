#include "ftva/core_model.hpp"
#include "ftva/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace ftva;

TEST_CASE("builtins validate and keep their published shape") {
  for (const auto& name : builtin_names()) {
    const auto inst = builtin_instance(name);
    INFO(name);
    CHECK(validate(inst).ok());
    CHECK_FALSE(inst.heterogeneous());
  }
  const auto e2 = builtin_instance("example2");
  CHECK(e2.n_states() == 3);
  CHECK(e2.alpha == doctest::Approx(0.4));
  CHECK(e2.state_label_base == 1);
  CHECK(e2.dt_types[0].p(0, 0, 2) == doctest::Approx(0.87538575).epsilon(1e-12));

  const auto e4 = builtin_instance("example4");
  const auto& m = e4.dt_types[0];
  CHECK(m.n_states == 8);
  CHECK(e4.alpha == 0.5);
  CHECK(m.r(7, 0) == doctest::Approx(0.1));
  CHECK(m.r_max() == doctest::Approx(0.1));
  // preferred action moves right with 0.1; the other one moves left
  CHECK(m.p(0, 1, 1) == doctest::Approx(0.1));
  CHECK(m.p(7, 0, 0) == doctest::Approx(0.1));
  CHECK(m.p(2, 0, 1) == doctest::Approx(0.48));
  CHECK(m.p(5, 1, 4) == doctest::Approx(0.45));
  CHECK(m.p(0, 0, 0) == doctest::Approx(1.0));

  const auto ct = builtin_instance("example2-ct");
  CHECK(ct.kind == TimeKind::Continuous);
  CHECK(g_max(ct.ct_types[0]) > 0.0);

  CHECK_THROWS_AS(builtin_instance("example9"), InstanceError);
}

TEST_CASE("validation names the offending entry") {
  auto inst = builtin_instance("example2");
  inst.dt_types[0].p(1, 1, 0) += 0.01;
  auto rep = validate(inst);
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.summary().find("(s=1,a=1)") != std::string::npos);

  auto ct = builtin_instance("example2-ct");
  ct.ct_types[0].rate_ref(0, 1, 2) = -0.5;
  rep = validate(ct);
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.summary().find("negative rate") != std::string::npos);

  inst = builtin_instance("example4");
  inst.alpha = 1.0;
  CHECK_FALSE(validate(inst).ok());
  inst.alpha = 0.5;
  inst.betas = {0.7};
  CHECK(validate(inst).summary().find("betas must sum to 1") != std::string::npos);

  SingleArmPolicy pol{2, {0.5, 0.5, 0.2, 0.7}};
  CHECK_FALSE(validate(pol).ok());
}

TEST_CASE("exact_count rejects non-integral budgets") {
  CHECK(exact_count(0.4, 100, "alpha") == 40);
  CHECK(exact_count(0.5, 1000, "alpha") == 500);
  CHECK_THROWS_AS(exact_count(0.4, 101, "alpha"), DivisibilityError);
  CHECK_THROWS_AS(exact_count(1.0 / 3.0, 10, "beta"), std::invalid_argument);
}

TEST_CASE("json round trip is lossless") {
  for (const auto& name : builtin_names()) {
    const auto inst = builtin_instance(name);
    const auto back = instance_from_json(instance_to_json(inst));
    INFO(name);
    CHECK(back == inst);
    // through text as well
    const auto text = instance_to_json(inst).dump();
    CHECK(instance_from_json(nlohmann::json::parse(text)) == inst);
  }
  RbInstance het = builtin_instance("example2");
  het.betas = {0.5, 0.5};
  het.dt_types.push_back(het.dt_types[0]);
  het.dt_types[1].r(0, 1) = 0.25;
  CHECK(instance_from_json(instance_to_json(het)) == het);
}

TEST_CASE("file loading reports structural problems") {
  const auto dir = std::filesystem::temp_directory_path() / "ftva_core_model_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "inst.json").string();

  save_instance(builtin_instance("example4"), path);
  CHECK(load_instance(path) == builtin_instance("example4"));
  CHECK(resolve_instance(path) == builtin_instance("example4"));

  auto doc = instance_to_json(builtin_instance("example4"));
  doc.erase("alpha");
  std::ofstream(path) << doc.dump();
  try {
    load_instance(path);
    FAIL("expected InstanceError");
  } catch (const InstanceError& e) {
    CHECK(std::string(e.what()).find("missing required field \"alpha\"") != std::string::npos);
  }

  doc = instance_to_json(builtin_instance("example4"));
  doc["transition"][3][0][0] = 0.9;
  std::ofstream(path) << doc.dump();
  CHECK_THROWS_AS(load_instance(path), InstanceError);

  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_instance(path), InstanceError);
  CHECK_THROWS_AS(load_instance((dir / "absent.json").string()), InstanceError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("policy documents") {
  const auto pol = policy_from_json(nlohmann::json::parse(R"({"probs": [[1,0],[0.25,0.75],[0,1]]})"), 3);
  CHECK(pol.p_active(1) == 0.75);
  CHECK_THROWS_AS(policy_from_json(nlohmann::json::parse("[[1,0],[0.5,0.4]]"), 2), InstanceError);
  CHECK_THROWS_AS(policy_from_json(nlohmann::json::parse("[[1,0]]"), 2), InstanceError);
  CHECK(SingleArmPolicy::deterministic({1, 0}).probs == std::vector<double>{0, 1, 1, 0});
}

TEST_CASE("rng helpers") {
  Rng a(stream_seed(5, 1)), b(stream_seed(5, 1)), c(stream_seed(5, 2));
  CHECK(a.next() == b.next());
  CHECK(a.next() != c.next());

  Rng rng(11);
  const int draws = 200000;
  int hits[3] = {0, 0, 0};
  const std::vector<double> probs{0.2, 0.0, 0.8};
  const auto cdf = cumulative_rows(probs, 3);
  CHECK(cdf[2] == 1.0);
  for (int i = 0; i < draws; ++i) ++hits[rng.from_cdf(cdf)];
  CHECK(hits[1] == 0);
  CHECK(hits[0] / double(draws) == doctest::Approx(0.2).epsilon(0.02));

  // rounding must never leak mass onto a trailing zero-probability entry
  const auto pinned = cumulative_rows({0.3, 0.7 - 1e-16, 0.0}, 3);
  CHECK(pinned[1] == 1.0);

  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = rng.binomial(40, 0.3);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / draws;
  CHECK(mean == doctest::Approx(12.0).epsilon(0.01));
  CHECK(sq / draws - mean * mean == doctest::Approx(8.4).epsilon(0.03));

  std::vector<int> v{0, 1, 2, 3, 4, 5};
  rng.partial_shuffle(v, 3);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{0, 1, 2, 3, 4, 5});

  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);
  const auto d = rng.dirichlet_flat(5);
  double total = 0.0;
  for (double x : d) total += x;
  CHECK(total == doctest::Approx(1.0));
}
