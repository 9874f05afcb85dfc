#include <random>

#include "aemr/engine.hpp"
#include "aemr/oracle.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aemr;
using aemr::testing::check_state_invariants;
using aemr::testing::make_dataset;
using aemr::testing::random_dataset;

TEST_SUITE("oracle") {
  TEST_CASE("pairwise: identical partner and no shared covariate") {
    auto d = make_dataset({{1, 0, 1}, {1, 0, 1}, {0, 1, 0}}, {1, 0, 1}, {0, 0, 0});
    const WeightVector w({1, 2, 3});
    auto r = brute_pairwise(d, w);
    CHECK(r.records[0].weight == 6.0);
    CHECK(r.records[0].witness.empty());
    CHECK(r.records[0].group == std::vector<UnitId>{0, 1});
    CHECK(r.records[2].weight == 0.0);
    CHECK(r.records[2].degenerate);
  }

  TEST_CASE("enumeration on two covariates") {
    // Two twin pairs differing on covariate 1.
    auto d = make_dataset({{0, 0}, {0, 0}, {0, 1}, {0, 1}}, {1, 0, 1, 0}, {0, 0, 0, 0});
    const WeightVector w({2, 1});
    const auto order = enumeration_order(w);
    REQUIRE(order.size() == 3);
    CHECK(order[0].empty());
    CHECK(order[1] == CovariateSet{1});
    CHECK(order[2] == CovariateSet{0});
    auto r = brute_enumerate(d, w);
    CHECK(r.state.groups.size() == 2);
    for (const auto& g : r.state.groups) CHECK(g.id.iteration == 0);
    CHECK(r.state.trace.size() == 1);
    CHECK_THROWS_AS(brute_enumerate(d, w, 1), Error);
  }

  TEST_CASE("oracles agree with each other and with the engine") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t p = 3 + rng() % 6;
      auto d = random_dataset(rng, 20 + rng() % 150, p, 3, trial % 4 == 0 ? 0.1 : 0.0);
      std::vector<double> w(p);
      for (auto& x : w) x = static_cast<double>(1 + rng() % 9);
      auto rep = cross_check(d, WeightVector(w));
      CHECK(rep.all_agree());
      for (const auto& n : rep.notes) MESSAGE(n);
      auto e = brute_enumerate(d, WeightVector(w));
      check_state_invariants(d, e.state);
    }
  }

  TEST_CASE("distinct subset sums make witnesses unique") {
    std::mt19937_64 rng(45);
    for (int trial = 0; trial < 10; ++trial) {
      auto d = random_dataset(rng, 100, 6, 2);
      const WeightVector w({1, 2, 4, 8, 16, 32});
      auto rep = cross_check(d, w);
      CHECK(rep.witness_agree == rep.treated);
      CHECK(rep.enumerate_agree == rep.enumerate_checked);
    }
  }

  TEST_CASE("aux derivation matches the enumeration's bookkeeping") {
    std::mt19937_64 rng(46);
    auto d = random_dataset(rng, 120, 5, 2);
    const WeightVector w({5, 4, 3, 2, 1});
    auto pw = brute_pairwise(d, w);
    auto en = brute_enumerate(d, w);
    for (std::size_t u = 0; u < d.n(); ++u) {
      const auto& rec = pw.records[u];
      if (!rec.has_partner || rec.degenerate) continue;
      REQUIRE(en.state.main_group[u].has_value());
      const auto& g = en.state.groups[*en.state.main_group[u]];
      CHECK(g.aux_members == rec.aux);
    }
  }

  TEST_CASE("row order does not change the optima") {
    std::mt19937_64 rng(47);
    auto d = random_dataset(rng, 80, 5, 3);
    const WeightVector w({1, 3, 2, 5, 4});
    std::vector<UnitId> perm(d.n());
    std::iota(perm.begin(), perm.end(), UnitId{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    auto a = brute_pairwise(d, w);
    auto b = brute_pairwise(d.subset(perm), w, 3);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      CHECK(b.records[i].weight == a.records[perm[i]].weight);
      CHECK(b.records[i].witness == a.records[perm[i]].witness);
    }
  }

  TEST_CASE("an injected selection fault is caught") {
    auto inst = random_instance(5, 0);
    CHECK(cross_check(inst.data, inst.weights).all_agree());
    CHECK_FALSE(cross_check(inst.data, inst.weights, {.inject_fault = true}).all_agree());
  }
}
