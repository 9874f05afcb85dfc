#include "aemr/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "aemr/bitgroup.hpp"
#include "aemr/parallel.hpp"

namespace aemr {

namespace {

bool agrees(const Dataset& d, std::size_t a, std::size_t b, std::size_t j) {
  return !d.missing(a, j) && !d.missing(b, j) && d.code(a, j) == d.code(b, j);
}

CovariateSet disagreement(const Dataset& d, std::size_t a, std::size_t b) {
  std::vector<std::uint32_t> out;
  for (std::size_t j = 0; j < d.p(); ++j) {
    if (!agrees(d, a, b, j)) out.push_back(static_cast<std::uint32_t>(j));
  }
  return CovariateSet(std::move(out));
}

// True when dropping `a` is tried before dropping `b`.
bool earlier(double wa, const CovariateSet& a, double wb,
             const CovariateSet& b) {
  if (wa != wb) return wa > wb;
  return tie_order_less(a, b);
}

bool agrees_on(const Dataset& d, std::size_t a, std::size_t b,
               const CovariateSet& retained) {
  for (auto j : retained) {
    if (!agrees(d, a, b, j)) return false;
  }
  return true;
}

}  // namespace

PairwiseResult brute_pairwise(const Dataset& d, const WeightVector& w,
                              unsigned threads) {
  require_valid(d, "dataset");
  if (w.size() != d.p()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("weight vector has {} entries, dataset has {} "
                            "covariates",
                            w.size(), d.p()));
  }
  const std::size_t n = d.n();
  const std::size_t p = d.p();
  PairwiseResult out;
  out.records.resize(n);

  parallel_for(n, threads, [&](std::size_t u) {
    auto& rec = out.records[u];
    rec.unit = static_cast<UnitId>(u);
    rec.treated = d.treated(u);
    for (std::size_t c = 0; c < n; ++c) {
      if (d.treated(c) == rec.treated) continue;
      double agree = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        if (agrees(d, u, c, j)) agree += w[j];
      }
      if (rec.has_partner && agree < rec.weight) continue;
      // Recompute through set_weight so sums match the engine bit for bit.
      auto dropped = disagreement(d, u, c);
      const double weight = set_weight(dropped, w);
      if (!rec.has_partner || earlier(weight, dropped, rec.weight, rec.witness)) {
        rec.has_partner = true;
        rec.weight = weight;
        rec.witness = std::move(dropped);
      }
    }
    rec.degenerate = rec.has_partner && rec.witness.size() == p;
  });

  parallel_for(n, threads, [&](std::size_t u) {
    auto& rec = out.records[u];
    if (!rec.has_partner || rec.degenerate) return;
    const auto retained = CovariateSet::complement(rec.witness, p);
    for (std::size_t a = 0; a < n; ++a) {
      if (!agrees_on(d, u, a, retained)) continue;
      rec.group.push_back(static_cast<UnitId>(a));
      const auto& other = out.records[a];
      if (earlier(other.weight, other.witness, rec.weight, rec.witness)) {
        rec.aux.push_back(static_cast<UnitId>(a));
      }
    }
  });
  return out;
}

std::vector<CovariateSet> enumeration_order(const WeightVector& w) {
  const std::size_t p = w.size();
  if (p >= 63) {
    throw Error(ErrorCode::kSize, "too many covariates to enumerate");
  }
  std::vector<std::pair<double, CovariateSet>> sets;
  const std::uint64_t count = std::uint64_t{1} << p;
  sets.reserve(count - 1);
  for (std::uint64_t bits = 0; bits + 1 < count; ++bits) {
    std::vector<std::uint32_t> dropped;
    for (std::size_t j = 0; j < p; ++j) {
      if ((bits >> j) & 1u) dropped.push_back(static_cast<std::uint32_t>(j));
    }
    CovariateSet s(std::move(dropped));
    const double weight = set_weight(s, w);
    sets.emplace_back(weight, std::move(s));
  }
  std::sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) {
    return earlier(a.first, a.second, b.first, b.second);
  });
  std::vector<CovariateSet> order;
  order.reserve(sets.size());
  for (auto& [weight, s] : sets) order.push_back(std::move(s));
  return order;
}

MatchResult brute_enumerate(const Dataset& d, const WeightVector& w,
                            std::size_t cap) {
  require_valid(d, "dataset");
  if (d.p() > cap) {
    throw Error(ErrorCode::kSize,
                fmt::format("brute enumeration is capped at {} covariates, "
                            "dataset has {}",
                            cap, d.p()));
  }
  if (w.size() != d.p()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("weight vector has {} entries, dataset has {} "
                            "covariates",
                            w.size(), d.p()));
  }
  const auto t0 = std::chrono::steady_clock::now();
  MatchResult result;
  result.mode = SelectionMode::kFixedWeight;
  result.p = d.p();
  result.weights = w;
  result.state = MatchState(d);
  auto& state = result.state;
  result.stop_reason = StopReason::kLatticeExhausted;

  const auto order = enumeration_order(w);
  std::size_t iteration = 0;
  for (const auto& s : order) {
    if (state.unmatched_treated == 0 && state.unmatched_control == 0) break;
    const std::size_t rem_t = state.unmatched_treated;
    const std::size_t rem_c = state.unmatched_control;
    const auto step =
        grouped_mr(d, CovariateSet::complement(s, d.p()), iteration, state);
    TraceEntry t;
    t.iteration = iteration;
    t.dropped = s;
    t.set_weight = set_weight(s, w);
    t.pe = std::numeric_limits<double>::quiet_NaN();
    t.mq = std::numeric_limits<double>::quiet_NaN();
    t.newly_matched_treated = rem_t - state.unmatched_treated;
    t.newly_matched_control = rem_c - state.unmatched_control;
    t.unmatched_treated = state.unmatched_treated;
    t.unmatched_control = state.unmatched_control;
    t.groups_formed = step.group_refs.size();
    state.trace.push_back(std::move(t));
    ++iteration;
  }
  result.timing.matching_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
  return result;
}

}  // namespace aemr

namespace aemr {

void CrossCheckReport::merge(const CrossCheckReport& other) {
  instances += other.instances;
  treated += other.treated;
  weight_agree += other.weight_agree;
  witness_agree += other.witness_agree;
  enumerate_checked += other.enumerate_checked;
  enumerate_agree += other.enumerate_agree;
  for (const auto& n : other.notes) {
    if (notes.size() < 20) notes.push_back(n);
  }
}

namespace {

struct UnitView {
  bool matched = false;
  CovariateSet dropped;
  std::vector<UnitId> members;
};

UnitView view_of(const MatchState& s, std::size_t u, std::size_t p) {
  UnitView v;
  if (!s.main_group[u]) return v;
  const auto& g = s.groups[*s.main_group[u]];
  v.matched = true;
  v.dropped = CovariateSet::complement(g.retained, p);
  v.members = g.members;
  return v;
}

}  // namespace

CrossCheckReport cross_check(const Dataset& d, const WeightVector& w,
                             const CrossCheckOptions& opts) {
  EngineConfig cfg;
  cfg.mode = SelectionMode::kFixedWeight;
  cfg.weights = w;
  cfg.missing_enabled = d.has_missing_mask();
  cfg.threads = opts.threads;
  if (opts.inject_fault) {
    cfg.selection_override = [](std::span<const CovariateSet> c) {
      return c.size() - 1;
    };
  }
  const auto engine = run(d, nullptr, cfg);
  const auto pairwise = brute_pairwise(d, w, opts.threads);
  std::optional<MatchResult> enumerated;
  if (d.p() <= opts.enumerate_cap) enumerated = brute_enumerate(d, w, opts.enumerate_cap);

  CrossCheckReport rep;
  rep.instances = 1;
  const std::size_t p = d.p();
  auto note = [&](std::string msg) {
    if (rep.notes.size() < 20) rep.notes.push_back(std::move(msg));
  };
  for (std::size_t u = 0; u < d.n(); ++u) {
    if (!d.treated(u)) continue;
    ++rep.treated;
    const auto& ref = pairwise.records[u];
    const bool ref_matched = ref.has_partner && !ref.degenerate;
    const auto got = view_of(engine.state, u, p);

    bool weight_ok = got.matched == ref_matched;
    if (weight_ok && got.matched) weight_ok = set_weight(got.dropped, w) == ref.weight;
    if (weight_ok) {
      ++rep.weight_agree;
    } else {
      note(fmt::format("unit {}: engine weight {} vs optimum {}", u,
                       got.matched ? set_weight(got.dropped, w) : -1.0,
                       ref_matched ? ref.weight : -1.0));
    }
    const bool witness_ok =
        weight_ok && (!got.matched ||
                      (got.dropped == ref.witness && got.members == ref.group));
    if (witness_ok) {
      ++rep.witness_agree;
    } else if (weight_ok) {
      note(fmt::format("unit {}: engine dropped {} vs witness {}", u,
                       got.dropped.to_string(), ref.witness.to_string()));
    }

    if (enumerated) {
      ++rep.enumerate_checked;
      const auto e = view_of(enumerated->state, u, p);
      const bool ok = e.matched == ref_matched &&
                      (!e.matched || (e.dropped == ref.witness &&
                                      e.members == ref.group &&
                                      set_weight(e.dropped, w) == ref.weight));
      if (ok) {
        ++rep.enumerate_agree;
      } else {
        note(fmt::format("unit {}: enumeration dropped {} vs witness {}", u,
                         e.dropped.to_string(), ref.witness.to_string()));
      }
    }
  }
  return rep;
}

RandomInstance random_instance(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial),
                    static_cast<std::uint32_t>(trial >> 32)};
  std::mt19937_64 rng(seq);
  const auto n = std::uniform_int_distribution<std::size_t>(20, 300)(rng);
  const auto p = std::uniform_int_distribution<std::size_t>(3, 10)(rng);
  std::vector<CovariateSpec> specs;
  for (std::size_t j = 0; j < p; ++j) {
    specs.push_back({fmt::format("x{}", j + 1),
                     std::uniform_int_distribution<std::uint32_t>(2, 3)(rng)});
  }
  std::vector<Code> codes(n * p);
  std::vector<std::uint8_t> treatment(n);
  std::vector<double> outcome(n);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      codes[i * p + j] =
          std::uniform_int_distribution<Code>(0, specs[j].arity - 1)(rng);
    }
    treatment[i] = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
    outcome[i] = noise(rng);
  }
  // Both arms present.
  treatment[0] = 0;
  treatment[1] = 1;
  std::vector<double> w(p);
  for (auto& x : w) x = std::uniform_int_distribution<int>(1, 9)(rng);
  return {Dataset(std::move(specs), std::move(codes), std::move(treatment),
                  std::move(outcome)),
          WeightVector(std::move(w))};
}

}  // namespace aemr
