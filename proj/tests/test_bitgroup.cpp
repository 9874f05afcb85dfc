#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "aemr/bitgroup.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aemr;
using aemr::testing::make_dataset;
using aemr::testing::random_dataset;

namespace {

std::vector<UnitId> all_units(const Dataset& d) {
  std::vector<UnitId> u(d.n());
  std::iota(u.begin(), u.end(), UnitId{0});
  return u;
}

// Sort rows by their retained tuple and split on change.
std::vector<std::vector<UnitId>> naive_groups(const Dataset& d,
                                              const CovariateSet& retained) {
  std::map<std::vector<Code>, std::vector<UnitId>> by_tuple;
  for (UnitId u = 0; u < d.n(); ++u) {
    if (d.missing_any(u, retained)) continue;
    std::vector<Code> key;
    for (auto j : retained) key.push_back(d.code(u, j));
    by_tuple[key].push_back(u);
  }
  std::vector<std::vector<UnitId>> out;
  for (auto& [k, v] : by_tuple) out.push_back(v);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<UnitId>> members_of(const std::vector<RawGroup>& g) {
  std::vector<std::vector<UnitId>> out;
  for (const auto& x : g) out.push_back(x.members);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_SUITE("bitgroup") {
  TEST_CASE("mixed-radix keys on the two-covariate example") {
    auto d = make_dataset({{0, 1}}, {1}, {0.0});
    auto keys = encode_units(d, CovariateSet{0, 1});
    REQUIRE(keys.has_value());
    CHECK(keys->b[0] == 2);
    CHECK(keys->b_plus[0] == 5);
  }

  TEST_CASE("keys collide exactly on equal retained tuples") {
    std::mt19937_64 rng(3);
    auto d = random_dataset(rng, 50, 6, 4);
    const CovariateSet retained{0, 2, 3, 5};
    auto keys = encode_units(d, retained);
    REQUIRE(keys.has_value());
    for (std::size_t a = 0; a < d.n(); ++a) {
      for (std::size_t b = 0; b < d.n(); ++b) {
        bool same = true;
        for (auto j : retained) same = same && d.code(a, j) == d.code(b, j);
        CHECK((keys->b[a] == keys->b[b]) == same);
      }
    }
  }

  TEST_CASE("group_by splits on values and sets aside missing units") {
    auto d = make_dataset({{0}, {0}, {1}, {1}}, {0, 1, 0, 1}, {0, 0, 0, 0});
    auto units = all_units(d);
    auto r = group_by(d, CovariateSet{0}, units);
    REQUIRE(r.groups.size() == 2);
    CHECK(r.groups[0].members == std::vector<UnitId>{0, 1});
    CHECK(r.groups[1].members == std::vector<UnitId>{2, 3});

    auto m = make_dataset({{0, 0}, {2, 0}, {0, 0}}, {0, 1, 1}, {0, 0, 0}, {3, 2},
                          {0, 0, 1, 0, 0, 0});
    auto mu = all_units(m);
    auto rm = group_by(m, CovariateSet{0, 1}, mu);
    CHECK(rm.ineligible == std::vector<UnitId>{1});
    REQUIRE(rm.groups.size() == 1);
    CHECK(rm.groups[0].members == std::vector<UnitId>{0, 2});
  }

  TEST_CASE("group_by equals sort-then-scan and both key paths agree") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      auto d = random_dataset(rng, 500, 8, 5, trial % 2 ? 0.1 : 0.0);
      CovariateSet retained;
      for (std::uint32_t j = 0; j < 8; ++j) {
        if (rng() % 3) retained = retained.with(j);
      }
      if (retained.empty()) retained = CovariateSet{0};
      auto units = all_units(d);
      auto native = group_by(d, retained, units);
      auto tuple = group_by(d, retained, units, {.force_tuple_keys = true});
      CHECK(members_of(native.groups) == naive_groups(d, retained));
      REQUIRE(native.groups.size() == tuple.groups.size());
      for (std::size_t g = 0; g < native.groups.size(); ++g) {
        CHECK(native.groups[g].members == tuple.groups[g].members);
        CHECK(native.groups[g].key_values == tuple.groups[g].key_values);
      }
    }
  }

  TEST_CASE("wide keys fall back to tuples") {
    std::mt19937_64 rng(8);
    std::vector<std::vector<Code>> rows(40, std::vector<Code>(60));
    std::vector<int> t(40);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (auto& c : rows[i]) c = static_cast<Code>(rng() % 6);
      t[i] = static_cast<int>(i % 2);
    }
    rows[1] = rows[0];
    auto d = make_dataset(rows, t, std::vector<double>(40, 0.0),
                          std::vector<std::uint32_t>(60, 6));
    const auto retained = CovariateSet::all(60);
    CHECK_FALSE(radix_capacity(d, retained).has_value());
    auto units = all_units(d);
    auto r = group_by(d, retained, units);
    CHECK(members_of(r.groups) == naive_groups(d, retained));
  }

  TEST_CASE("prune keeps groups holding both arms") {
    auto d = make_dataset({{0}, {0}, {1}, {2}, {2}}, {1, 1, 0, 1, 0},
                          {0, 0, 0, 0, 0}, {3});
    auto units = all_units(d);
    auto kept = prune(group_by(d, CovariateSet{0}, units).groups);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].members == std::vector<UnitId>{3, 4});

    auto treated_only = make_dataset({{0}, {0}}, {1, 1}, {0, 0});
    auto tu = all_units(treated_only);
    CHECK(prune(group_by(treated_only, CovariateSet{0}, tu).groups).empty());
  }

  TEST_CASE("pruned units are exactly those with c_u != c_u+") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      auto d = random_dataset(rng, 300, 5, 3);
      const CovariateSet retained{0, 1, 3};
      auto keys = encode_units(d, retained);
      REQUIRE(keys.has_value());
      std::map<Key128, int> cb;
      std::map<Key128, int> cbp;
      for (std::size_t u = 0; u < d.n(); ++u) {
        ++cb[keys->b[u]];
        ++cbp[keys->b_plus[u]];
      }
      std::set<UnitId> expected;
      for (UnitId u = 0; u < d.n(); ++u) {
        if (cb[keys->b[u]] != cbp[keys->b_plus[u]]) expected.insert(u);
      }
      auto units = all_units(d);
      std::set<UnitId> got;
      for (const auto& g : prune(group_by(d, retained, units).groups)) {
        got.insert(g.members.begin(), g.members.end());
      }
      CHECK(got == expected);
    }
  }

  TEST_CASE("grouped_mr records main and auxiliary members") {
    auto d = make_dataset({{0}, {0}}, {1, 0}, {1, 0});
    MatchState s(d);
    auto out = grouped_mr(d, CovariateSet{0}, 0, s);
    REQUIRE(s.groups.size() == 1);
    CHECK(s.groups[0].main_members == std::vector<UnitId>{0, 1});
    CHECK(out.remaining.empty());
    CHECK(s.unmatched_treated == 0);

    // A third unit matched earlier joins as auxiliary.
    auto d3 = make_dataset({{0, 0}, {0, 1}, {0, 0}, {1, 0}}, {1, 0, 0, 1},
                           {1, 0, 0, 0});
    MatchState s3(d3);
    grouped_mr(d3, CovariateSet{0, 1}, 0, s3);  // matches units 0 and 2
    REQUIRE(s3.groups.size() == 1);
    grouped_mr(d3, CovariateSet{1}, 1, s3);     // 3 with 2 on the second code
    grouped_mr(d3, CovariateSet{0}, 2, s3);     // 1 with 0 and 2
    const auto& last = s3.groups.back();
    CHECK(last.members == std::vector<UnitId>{0, 1, 2});
    CHECK(last.main_members == std::vector<UnitId>{1});
    CHECK(last.aux_members == std::vector<UnitId>{0, 2});
    CHECK(s3.auxiliary[2].size() == 2);
    aemr::testing::check_state_invariants(d3, s3);
  }

  TEST_CASE("groups need an unmatched member and counts predict commits") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
      auto d = random_dataset(rng, 200, 6, 3, trial % 3 == 0 ? 0.15 : 0.0);
      MatchState s(d);
      std::size_t iteration = 0;
      for (std::uint32_t drop = 0; drop < 6; ++drop) {
        const auto retained = CovariateSet::complement(CovariateSet{drop}, 6);
        auto predicted = count_new_matches(d, retained, s);
        auto predicted_tuple =
            count_new_matches(d, retained, s, {.force_tuple_keys = true});
        CHECK(predicted.treated == predicted_tuple.treated);
        CHECK(predicted.control == predicted_tuple.control);
        const auto before_t = s.unmatched_treated;
        const auto before_c = s.unmatched_control;
        grouped_mr(d, retained, ++iteration, s);
        CHECK(before_t - s.unmatched_treated == predicted.treated);
        CHECK(before_c - s.unmatched_control == predicted.control);
      }
      aemr::testing::check_state_invariants(d, s);
    }
  }

  TEST_CASE("row order does not change the groups") {
    std::mt19937_64 rng(33);
    auto d = random_dataset(rng, 120, 4, 3);
    std::vector<UnitId> perm(d.n());
    std::iota(perm.begin(), perm.end(), UnitId{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = d.subset(perm);
    const CovariateSet retained{0, 2, 3};
    auto a = all_units(d);
    auto groups = prune(group_by(d, retained, a).groups);
    auto b = all_units(shuffled);
    auto groups2 = prune(group_by(shuffled, retained, b).groups);
    REQUIRE(groups.size() == groups2.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      std::vector<UnitId> mapped;
      for (auto u : groups2[g].members) mapped.push_back(perm[u]);
      std::sort(mapped.begin(), mapped.end());
      CHECK(mapped == groups[g].members);
      CHECK(groups[g].key_values == groups2[g].key_values);
    }
  }
}
