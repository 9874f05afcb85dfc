#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "aemr/core.hpp"
#include "aemr/match_state.hpp"
#include "doctest.h"

namespace aemr::testing {

// rows: covariate codes per unit; all arities default to 2.
inline Dataset make_dataset(const std::vector<std::vector<Code>>& rows,
                            const std::vector<int>& t,
                            const std::vector<double>& y,
                            std::vector<std::uint32_t> arity = {},
                            std::vector<std::uint8_t> mask = {}) {
  const std::size_t p = rows.empty() ? 0 : rows[0].size();
  if (arity.empty()) arity.assign(p, 2);
  std::vector<CovariateSpec> specs;
  for (std::size_t j = 0; j < p; ++j) {
    specs.push_back({"c" + std::to_string(j), arity[j]});
  }
  std::vector<Code> codes;
  for (const auto& r : rows) codes.insert(codes.end(), r.begin(), r.end());
  std::vector<std::uint8_t> tr(t.begin(), t.end());
  return Dataset(specs, codes, tr, y, std::move(mask));
}

inline Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t p,
                              std::uint32_t max_arity, double missing_rate = 0.0) {
  std::vector<CovariateSpec> specs;
  for (std::size_t j = 0; j < p; ++j) {
    std::uint32_t a = std::uniform_int_distribution<std::uint32_t>(2, max_arity)(rng);
    if (missing_rate > 0.0) ++a;
    specs.push_back({"c" + std::to_string(j), a});
  }
  std::vector<Code> codes(n * p);
  std::vector<std::uint8_t> t(n);
  std::vector<double> y(n);
  std::vector<std::uint8_t> mask;
  if (missing_rate > 0.0) mask.assign(n * p, 0);
  std::bernoulli_distribution miss(missing_rate);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const std::uint32_t levels = specs[j].arity - (missing_rate > 0.0 ? 1 : 0);
      codes[i * p + j] = std::uniform_int_distribution<Code>(0, levels - 1)(rng);
      if (missing_rate > 0.0 && miss(rng)) {
        mask[i * p + j] = 1;
        codes[i * p + j] = specs[j].arity - 1;
      }
    }
    t[i] = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
    y[i] = std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  t[0] = 0;
  t[1] = 1;
  return Dataset(std::move(specs), std::move(codes), std::move(t), std::move(y),
                 std::move(mask));
}

// Group invariants over a whole run: valid arms, main/aux partition, shared
// codes, no missing value on a retained covariate, and the unit bookkeeping.
inline void check_state_invariants(const Dataset& d, const MatchState& s) {
  std::vector<int> main_count(d.n(), 0);
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    const auto& grp = s.groups[g];
    CHECK(grp.n_treated >= 1);
    CHECK(grp.n_control >= 1);
    CHECK(grp.n_treated + grp.n_control == grp.members.size());
    CHECK(std::is_sorted(grp.members.begin(), grp.members.end()));
    std::vector<UnitId> merged;
    std::merge(grp.main_members.begin(), grp.main_members.end(),
               grp.aux_members.begin(), grp.aux_members.end(),
               std::back_inserter(merged));
    CHECK(merged == grp.members);
    CHECK(!grp.main_members.empty());
    for (auto u : grp.members) {
      std::size_t k = 0;
      for (auto j : grp.retained) {
        CHECK_FALSE(d.missing(u, j));
        CHECK(d.code(u, j) == grp.key_values[k]);
        ++k;
      }
    }
    for (auto u : grp.main_members) {
      ++main_count[u];
      REQUIRE(s.main_group[u].has_value());
      CHECK(*s.main_group[u] == g);
    }
    for (auto u : grp.aux_members) {
      CHECK(std::find(s.auxiliary[u].begin(), s.auxiliary[u].end(), g) !=
            s.auxiliary[u].end());
      REQUIRE(s.main_group[u].has_value());
      CHECK(*s.main_group[u] < g);
    }
  }
  std::size_t unmatched_t = 0;
  std::size_t unmatched_c = 0;
  for (std::size_t u = 0; u < d.n(); ++u) {
    CHECK((s.done[u] != 0) == s.main_group[u].has_value());
    CHECK(main_count[u] == (s.done[u] ? 1 : 0));
    if (!s.done[u]) (d.treated(u) ? unmatched_t : unmatched_c)++;
  }
  CHECK(unmatched_t == s.unmatched_treated);
  CHECK(unmatched_c == s.unmatched_control);
}

// Every dropped set appears after all of its proper subsets.
inline bool downward_closed(const std::vector<TraceEntry>& trace) {
  std::set<std::vector<std::uint32_t>> seen;
  for (const auto& t : trace) {
    const auto& m = t.dropped.members();
    const std::size_t k = m.size();
    if (k > 0 && k < 20) {
      for (std::uint32_t bits = 0; bits + 1 < (1u << k); ++bits) {
        std::vector<std::uint32_t> sub;
        for (std::size_t i = 0; i < k; ++i) {
          if ((bits >> i) & 1u) sub.push_back(m[i]);
        }
        if (!seen.count(sub)) return false;
      }
    }
    seen.insert(m);
  }
  return true;
}

}  // namespace aemr::testing
