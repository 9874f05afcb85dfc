#include <random>

#include "aemr/bitgroup.hpp"
#include "aemr/engine.hpp"
#include "aemr/holdout.hpp"
#include "aemr/synthgen.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aemr;
using aemr::testing::check_state_invariants;
using aemr::testing::downward_closed;
using aemr::testing::make_dataset;
using aemr::testing::random_dataset;

namespace {

// Best agreement weight for unit u over the opposite arm, or -1 when no
// partner shares any covariate.
double best_agreement(const Dataset& d, const WeightVector& w, std::size_t u) {
  double best = -1.0;
  for (std::size_t c = 0; c < d.n(); ++c) {
    if (d.treated(c) == d.treated(u)) continue;
    double s = 0.0;
    std::size_t shared = 0;
    for (std::size_t j = 0; j < d.p(); ++j) {
      if (!d.missing(u, j) && !d.missing(c, j) && d.code(u, j) == d.code(c, j)) {
        s += w[j];
        ++shared;
      }
    }
    if (shared > 0) best = std::max(best, s);
  }
  return best;
}

EngineConfig fixed(const WeightVector& w) {
  EngineConfig cfg;
  cfg.weights = w;
  return cfg;
}

void check_fixed_trace(const MatchResult& r) {
  CHECK(downward_closed(r.state.trace));
  for (std::size_t i = 1; i < r.state.trace.size(); ++i) {
    CHECK(r.state.trace[i].set_weight <= r.state.trace[i - 1].set_weight);
  }
}

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("twins match at iteration 0 on every covariate") {
    auto d = make_dataset({{1, 0, 1}, {1, 0, 1}, {0, 0, 0}}, {1, 0, 0}, {5, 3, 0});
    auto r = run(d, nullptr, fixed(WeightVector({1, 2, 3})));
    REQUIRE(r.state.main_group[0].has_value());
    const auto& g = r.state.groups[*r.state.main_group[0]];
    CHECK(g.id.iteration == 0);
    CHECK(g.retained == CovariateSet::all(3));
    CHECK(r.stop_reason == StopReason::kTreatedExhausted);
  }

  TEST_CASE("fixed mode reaches the per-unit optimum") {
    std::mt19937_64 rng(60);
    for (int trial = 0; trial < 10; ++trial) {
      auto d = random_dataset(rng, 60, 6, 2);
      const WeightVector w({6, 5, 4, 3, 2, 1});
      auto r = run(d, nullptr, fixed(w));
      check_state_invariants(d, r.state);
      check_fixed_trace(r);
      for (std::size_t u = 0; u < d.n(); ++u) {
        if (!d.treated(u)) continue;
        const double best = best_agreement(d, w, u);
        if (best < 0) {
          CHECK_FALSE(r.state.main_group[u].has_value());
          continue;
        }
        REQUIRE(r.state.main_group[u].has_value());
        const auto& g = r.state.groups[*r.state.main_group[u]];
        double got = 0.0;
        for (auto j : g.retained) got += w[j];
        CHECK(got == best);
      }
    }
  }

  TEST_CASE("the first drop is the lightest singleton") {
    std::mt19937_64 rng(61);
    auto d = random_dataset(rng, 80, 5, 3);
    auto r = run(d, nullptr, fixed(WeightVector({3, 1.5, 4, 0.5, 2})));
    REQUIRE(r.state.trace.size() >= 2);
    CHECK(r.state.trace[0].dropped.empty());
    CHECK(r.state.trace[1].dropped == CovariateSet{3});
  }

  TEST_CASE("select_best breaks ties by size then lexicographically") {
    const std::vector<CovariateSet> lambda{{0}, {1}};
    const WeightVector w({2, 1});
    auto score = [&](const CovariateSet& s) { return set_weight(s, w); };
    CHECK(*select_best(lambda, score) == 1);
    const WeightVector flat({1, 1});
    CHECK(*select_best(lambda, [&](const CovariateSet& s) {
      return set_weight(s, flat);
    }) == 0);
    const std::vector<CovariateSet> mixed{{1, 2}, {3}, {0, 4}};
    CHECK(*select_best(mixed, [](const CovariateSet&) { return 1.0; }) == 1);
    CHECK_FALSE(select_best({}, [](const CovariateSet&) { return 0.0; }).has_value());
  }

  TEST_CASE("stop rules") {
    EngineConfig cfg;
    cfg.mode = SelectionMode::kAdaptiveMq;
    LoopSnapshot snap;
    snap.unmatched_treated = 4;
    snap.iterations_done = 3;
    snap.candidate = CovariateSet{1};
    snap.baseline_pe = 10.0;
    snap.candidate_pe = 10.6;
    snap.candidate_control_ratio = 0.1;
    snap.candidate_treated_ratio = 0.1;
    CHECK(stopping_check(snap, cfg) == StopReason::kPeDegraded);
    snap.candidate_pe = 10.4;
    CHECK(stopping_check(snap, cfg) == StopReason::kNone);
    snap.candidate_treated_ratio = 0.25;
    CHECK(stopping_check(snap, cfg) == StopReason::kBalanceGap);
    cfg.stop.max_balance_ratio_gap.reset();
    CHECK(stopping_check(snap, cfg) == StopReason::kNone);
    snap.unmatched_treated = 0;
    CHECK(stopping_check(snap, cfg) == StopReason::kTreatedExhausted);
    snap.unmatched_treated = 2;
    snap.active_empty = true;
    CHECK(stopping_check(snap, cfg) == StopReason::kLatticeExhausted);
    snap.active_empty = false;
    cfg.stop.max_iterations = 3;
    CHECK(stopping_check(snap, cfg) == StopReason::kMaxIterations);

    EngineConfig f;
    f.stop.early_stop_before_important = 1.0;
    LoopSnapshot fs;
    fs.unmatched_treated = 1;
    fs.candidate = CovariateSet{0};
    fs.candidate_max_weight = 0.4;
    CHECK(stopping_check(fs, f) == StopReason::kNone);
    fs.candidate_max_weight = 3.0;
    CHECK(stopping_check(fs, f) == StopReason::kImportantCovariate);
  }

  TEST_CASE("early stop never drops an important covariate") {
    DgpSpec spec = scenario_defaults(Scenario::kIrrelevant);
    spec.n_control = 400;
    spec.n_treated = 400;
    spec.seed = 5;
    auto data = gen_scenario(spec);
    std::vector<double> w(15, 0.1);
    for (int j = 0; j < 5; ++j) w[j] = 5.0;
    EngineConfig cfg = fixed(WeightVector(w));
    cfg.stop.early_stop_before_important = 1.0;
    auto r = run(data.data, nullptr, cfg);
    for (const auto& t : r.state.trace) {
      for (auto j : t.dropped) CHECK(j >= 5);
    }
    CHECK(r.stop_reason != StopReason::kMaxIterations);
  }

  TEST_CASE("adaptive choices match exhaustive rescoring") {
    std::mt19937_64 rng(70);
    for (int trial = 0; trial < 3; ++trial) {
      auto d = random_dataset(rng, 120, 5, 2);
      auto h = random_dataset(rng, 120, 5, 2);
      std::vector<double> y(h.n());
      for (std::size_t u = 0; u < h.n(); ++u) {
        y[u] = 2.0 * h.code(u, 0) + h.code(u, 1) + 0.3 * h.code(u, 3) +
               std::normal_distribution<double>(0, 0.5)(rng);
      }
      Dataset holdout(h.specs(), h.codes(), h.treatments(), y);
      EngineConfig cfg;
      cfg.mode = SelectionMode::kAdaptiveMq;
      cfg.tradeoff_c = 0.5;
      cfg.stop.max_pe_degradation_fraction.reset();
      cfg.stop.max_balance_ratio_gap.reset();
      auto full = run(d, &holdout, cfg);
      CHECK(downward_closed(full.state.trace));
      const std::size_t steps = std::min<std::size_t>(full.state.trace.size(), 8);
      for (std::size_t i = 1; i < steps; ++i) {
        // State after i iterations; the next choice must be the MQ argmax.
        EngineConfig upto = cfg;
        upto.stop.max_iterations = i;
        auto part = run(d, &holdout, upto);
        std::set<CovariateSet> processed;
        for (const auto& t : part.state.trace) processed.insert(t.dropped);
        std::vector<CovariateSet> lambda;
        for (std::uint32_t bits = 1; bits + 1 < (1u << 5); ++bits) {
          std::vector<std::uint32_t> m;
          for (std::uint32_t j = 0; j < 5; ++j) {
            if ((bits >> j) & 1u) m.push_back(j);
          }
          const CovariateSet s(m);
          if (processed.count(s)) continue;
          bool eligible = true;
          for (auto j : s) eligible = eligible && processed.count(s.without(j));
          if (eligible) lambda.push_back(s);
        }
        auto mq = [&](const CovariateSet& s) {
          const auto pending =
              count_new_matches(d, CovariateSet::complement(s, 5), part.state);
          const double bf =
              balancing_factor(pending.control, part.state.unmatched_control,
                               pending.treated, part.state.unmatched_treated);
          return 0.5 * bf - prediction_error(holdout, s, 0.0);
        };
        const auto best = select_best(lambda, mq);
        REQUIRE(best.has_value());
        CHECK(full.state.trace[i].dropped == lambda[*best]);
      }
    }
  }

  TEST_CASE("adaptive stop on PE degradation") {
    DgpSpec spec = scenario_defaults(Scenario::kIrrelevant);
    spec.n_control = 300;
    spec.n_treated = 300;
    spec.seed = 9;
    auto data = gen_scenario(spec);
    EngineConfig cfg;
    cfg.mode = SelectionMode::kAdaptiveMq;
    cfg.stop.max_balance_ratio_gap.reset();
    auto r = run(data.data, &data.holdout, cfg);
    const double pe0 = r.state.trace[0].pe;
    for (const auto& t : r.state.trace) CHECK(t.pe <= pe0 + 0.05 * std::abs(pe0) + 1e-12);
    if (r.stop_reason == StopReason::kPeDegraded) {
      // Nothing important was dropped before the rule fired.
      for (const auto& t : r.state.trace) {
        for (auto j : t.dropped) CHECK(j >= 5);
      }
    }
  }

  TEST_CASE("runs repeat exactly and ignore the thread count") {
    std::mt19937_64 rng(80);
    auto d = random_dataset(rng, 300, 7, 3);
    auto h = random_dataset(rng, 200, 7, 3);
    EngineConfig cfg;
    cfg.mode = SelectionMode::kAdaptiveMq;
    auto a = run(d, &h, cfg);
    cfg.threads = 4;
    auto b = run(d, &h, cfg);
    REQUIRE(a.state.trace.size() == b.state.trace.size());
    for (std::size_t i = 0; i < a.state.trace.size(); ++i) {
      CHECK(a.state.trace[i].dropped == b.state.trace[i].dropped);
      CHECK(a.state.trace[i].mq == b.state.trace[i].mq);
    }
    CHECK(a.state.main_group == b.state.main_group);
    CHECK(a.state.auxiliary == b.state.auxiliary);

    EngineConfig f;
    f.seed = 3;
    f.importance_shuffles = 5;
    auto c = run(d, &h, f);
    auto e = run(d, &h, f);
    CHECK(c.weights->values() == e.weights->values());
    CHECK(c.state.main_group == e.state.main_group);
    check_fixed_trace(c);
  }

  TEST_CASE("missing values never sit on a retained covariate") {
    std::mt19937_64 rng(90);
    auto d = random_dataset(rng, 250, 6, 2, 0.2);
    EngineConfig cfg = fixed(WeightVector({6, 5, 4, 3, 2, 1}));
    cfg.missing_enabled = true;
    auto r = run(d, nullptr, cfg);
    check_state_invariants(d, r.state);
    check_fixed_trace(r);
    for (const auto& g : r.state.groups) {
      std::size_t k = 0;
      for (auto j : g.retained) CHECK(g.key_values[k++] != d.spec(j).arity - 1);
    }
  }

  TEST_CASE("configuration errors") {
    std::mt19937_64 rng(91);
    auto d = random_dataset(rng, 30, 3, 2);
    EngineConfig adaptive;
    adaptive.mode = SelectionMode::kAdaptiveMq;
    CHECK_THROWS_AS(run(d, nullptr, adaptive), Error);
    CHECK_THROWS_AS(run(d, nullptr, EngineConfig{}), Error);
    CHECK_THROWS_AS(run(d, nullptr, fixed(WeightVector({1, 2}))), Error);
    auto m = random_dataset(rng, 30, 3, 2, 0.2);
    CHECK_THROWS_AS(run(m, nullptr, fixed(WeightVector({1, 2, 3}))), Error);
    EngineConfig bad = fixed(WeightVector({1, 2, 3}));
    bad.stop.max_balance_ratio_gap = 1.5;
    CHECK_THROWS_AS(run(d, nullptr, bad), Error);
    Dataset empty({{"a", 2}}, {}, {}, {});
    CHECK_THROWS_AS(run(empty, nullptr, fixed(WeightVector({1}))), Error);
  }

  TEST_CASE("wide covariate spaces use set keys") {
    std::mt19937_64 rng(92);
    const std::size_t p = 130;
    std::vector<std::vector<Code>> rows(40, std::vector<Code>(p, 0));
    std::vector<int> t(40);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < 3; ++j) rows[i][j] = static_cast<Code>(rng() % 2);
      rows[i][100] = static_cast<Code>(rng() % 2);
      t[i] = static_cast<int>(i % 2);
    }
    auto d = make_dataset(rows, t, std::vector<double>(40, 0.0));
    std::vector<double> w(p, 10.0);
    w[0] = w[1] = w[2] = 1.0;
    w[100] = 2.0;
    auto r = run(d, nullptr, fixed(WeightVector(w)));
    check_state_invariants(d, r.state);
    check_fixed_trace(r);
    for (std::size_t u = 0; u < d.n(); ++u) {
      if (!d.treated(u)) continue;
      REQUIRE(r.state.main_group[u].has_value());
      double got = 0.0;
      for (auto j : r.state.groups[*r.state.main_group[u]].retained) got += w[j];
      CHECK(got == best_agreement(d, WeightVector(w), u));
    }
  }
}
