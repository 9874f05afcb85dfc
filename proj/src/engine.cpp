#include "aemr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "aemr/bitgroup.hpp"
#include "aemr/holdout.hpp"
#include "aemr/lattice.hpp"
#include "aemr/parallel.hpp"

namespace aemr {

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kNone: return "none";
    case StopReason::kTreatedExhausted: return "treated_exhausted";
    case StopReason::kLatticeExhausted: return "lattice_exhausted";
    case StopReason::kPeDegraded: return "pe_degraded";
    case StopReason::kBalanceGap: return "balance_gap";
    case StopReason::kImportantCovariate: return "important_covariate";
    case StopReason::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

std::string to_string(SelectionMode m) {
  return m == SelectionMode::kFixedWeight ? "fixed_weight" : "adaptive_mq";
}

std::vector<std::size_t> MatchResult::groups_of_iteration(std::size_t i) const {
  std::vector<std::size_t> refs;
  for (std::size_t g = 0; g < state.groups.size(); ++g) {
    if (state.groups[g].id.iteration == i) refs.push_back(g);
  }
  return refs;
}

std::optional<std::size_t> select_best(
    std::span<const CovariateSet> candidates,
    const std::function<double(const CovariateSet&)>& score) {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = score(candidates[i]);
    if (!best || s > best_score ||
        (s == best_score && tie_order_less(candidates[i], candidates[*best]))) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

StopReason stopping_check(const LoopSnapshot& snap, const EngineConfig& cfg) {
  const auto& rules = cfg.stop;
  if (rules.exhaust_treated && snap.unmatched_treated == 0) {
    return StopReason::kTreatedExhausted;
  }
  if (snap.active_empty) return StopReason::kLatticeExhausted;
  if (rules.max_iterations && snap.iterations_done >= *rules.max_iterations) {
    return StopReason::kMaxIterations;
  }
  if (!snap.candidate) return StopReason::kNone;

  if (cfg.mode == SelectionMode::kFixedWeight) {
    if (rules.early_stop_before_important && snap.candidate_max_weight &&
        *snap.candidate_max_weight > *rules.early_stop_before_important) {
      return StopReason::kImportantCovariate;
    }
    return StopReason::kNone;
  }

  if (rules.max_pe_degradation_fraction && snap.candidate_pe &&
      snap.baseline_pe) {
    const double base = *snap.baseline_pe;
    if (*snap.candidate_pe - base >
        *rules.max_pe_degradation_fraction * std::abs(base)) {
      return StopReason::kPeDegraded;
    }
  }
  if (rules.max_balance_ratio_gap && snap.candidate_control_ratio &&
      snap.candidate_treated_ratio) {
    const double gap =
        std::abs(*snap.candidate_treated_ratio - *snap.candidate_control_ratio);
    if (gap > *rules.max_balance_ratio_gap) return StopReason::kBalanceGap;
  }
  return StopReason::kNone;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double side_ratio(std::size_t matched, std::size_t remaining) {
  if (remaining == 0) return matched == 0 ? 0.0 : 1.0;
  return static_cast<double>(matched) / static_cast<double>(remaining);
}

void check_config(const Dataset& d, const Dataset* holdout,
                  const EngineConfig& cfg) {
  require_valid(d, "dataset");
  if (holdout != nullptr) {
    require_valid(*holdout, "holdout");
    if (holdout->p() != d.p()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  fmt::format("holdout has {} covariates, dataset has {}",
                              holdout->p(), d.p()));
    }
  }
  if (d.has_missing_mask() && !cfg.missing_enabled) {
    throw Error(ErrorCode::kConfig,
                "dataset carries missing values but missing handling is off");
  }
  if (cfg.mode == SelectionMode::kAdaptiveMq && holdout == nullptr) {
    throw Error(ErrorCode::kConfig, "adaptive mode requires a holdout dataset");
  }
  if (!(cfg.tradeoff_c >= 0.0)) {
    throw Error(ErrorCode::kConfig, "trade-off C must be >= 0");
  }
  auto fraction = [](const std::optional<double>& f, const char* name) {
    if (f && !(*f >= 0.0 && *f <= 1.0)) {
      throw Error(ErrorCode::kConfig, fmt::format("{} must lie in [0, 1]", name));
    }
  };
  fraction(cfg.stop.max_pe_degradation_fraction, "max PE degradation fraction");
  fraction(cfg.stop.max_balance_ratio_gap, "max balance ratio gap");
  if (cfg.weights && cfg.weights->size() != d.p()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("weight vector has {} entries, dataset has {} "
                            "covariates",
                            cfg.weights->size(), d.p()));
  }
}

template <typename Key>
class Runner {
 public:
  Runner(const Dataset& d, const Dataset* holdout, const EngineConfig& cfg,
         std::optional<WeightVector> weights)
      : d_(d),
        holdout_(holdout),
        cfg_(cfg),
        weights_(std::move(weights)),
        p_(d.p()),
        lattice_(d.p()),
        state_(d) {}

  MatchState run(StopReason& reason) {
    first_iteration();
    for (std::size_t j = 0; j < p_ && p_ >= 2; ++j) {
      activate(CovariateSet{static_cast<std::uint32_t>(j)});
    }

    std::size_t iteration = 1;
    for (;;) {
      LoopSnapshot snap;
      snap.iterations_done = state_.trace.size();
      snap.unmatched_treated = state_.unmatched_treated;
      snap.active_empty = lattice_.active().empty();
      reason = stopping_check(snap, cfg_);
      if (reason != StopReason::kNone) break;

      Choice choice = cfg_.mode == SelectionMode::kFixedWeight ? choose_fixed()
                                                               : choose_adaptive();
      snap.candidate = choice.set;
      if (weights_) {
        double heaviest = 0.0;
        for (auto j : choice.set) heaviest = std::max(heaviest, (*weights_)[j]);
        snap.candidate_max_weight = heaviest;
      }
      if (cfg_.mode == SelectionMode::kAdaptiveMq) {
        snap.candidate_pe = choice.pe;
        snap.baseline_pe = baseline_pe_;
        snap.candidate_control_ratio = choice.control_ratio;
        snap.candidate_treated_ratio = choice.treated_ratio;
      }
      reason = stopping_check(snap, cfg_);
      if (reason != StopReason::kNone) break;

      commit(choice, iteration);
      ++iteration;
    }
    return std::move(state_);
  }

 private:
  struct Entry {
    double weight;
    CovariateSet set;
  };
  struct EntryOrder {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.weight != b.weight) return a.weight > b.weight;
      return tie_order_less(a.set, b.set);
    }
  };
  struct Choice {
    CovariateSet set;
    double pe = kNaN;
    double control_ratio = kNaN;
    double treated_ratio = kNaN;
  };

  double weight_of(const CovariateSet& s) const {
    return weights_ ? set_weight(s, *weights_) : kNaN;
  }

  double pe_of(const CovariateSet& s) {
    if (holdout_ == nullptr) return kNaN;
    const Key k = Key::from(s);
    auto it = pe_cache_.find(k);
    if (it != pe_cache_.end()) return it->second;
    const double pe = prediction_error(*holdout_, s, cfg_.ridge_lambda);
    pe_cache_.emplace(k, pe);
    return pe;
  }

  void activate(const CovariateSet& s) {
    if (!lattice_.activate(Key::from(s))) return;
    if (cfg_.mode == SelectionMode::kFixedWeight) {
      queue_.insert(Entry{weight_of(s), s});
    } else {
      candidates_.push_back(s);
    }
  }

  void first_iteration() {
    const CovariateSet none;
    const std::size_t rem_t = state_.unmatched_treated;
    const std::size_t rem_c = state_.unmatched_control;
    grouped_mr(d_, CovariateSet::all(p_), 0, state_);
    baseline_pe_ = pe_of(none);
    record(none, 0, rem_t, rem_c, baseline_pe_);
  }

  Choice choose_fixed() {
    if (!cfg_.selection_override) return Choice{queue_.begin()->set};
    std::vector<CovariateSet> ordered;
    ordered.reserve(queue_.size());
    for (const auto& e : queue_) ordered.push_back(e.set);
    const std::size_t idx = cfg_.selection_override(ordered);
    if (idx >= ordered.size()) {
      throw Error(ErrorCode::kConfig, "selection override out of range");
    }
    return Choice{ordered[idx]};
  }

  Choice choose_adaptive() {
    std::sort(candidates_.begin(), candidates_.end(), tie_order_less);
    const std::size_t m = candidates_.size();

    std::vector<std::size_t> uncached;
    for (std::size_t i = 0; i < m; ++i) {
      if (!pe_cache_.count(Key::from(candidates_[i]))) uncached.push_back(i);
    }
    std::vector<double> fresh(uncached.size());
    parallel_for(uncached.size(), cfg_.threads, [&](std::size_t i) {
      fresh[i] = prediction_error(*holdout_, candidates_[uncached[i]],
                                  cfg_.ridge_lambda);
    });
    for (std::size_t i = 0; i < uncached.size(); ++i) {
      pe_cache_.emplace(Key::from(candidates_[uncached[i]]), fresh[i]);
    }

    std::vector<PendingMatches> pending(m);
    parallel_for(m, cfg_.threads, [&](std::size_t i) {
      pending[i] = count_new_matches(
          d_, CovariateSet::complement(candidates_[i], p_), state_);
    });

    std::vector<double> mq(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double bf =
          balancing_factor(pending[i].control, state_.unmatched_control,
                           pending[i].treated, state_.unmatched_treated);
      mq[i] = match_quality(pe_cache_.at(Key::from(candidates_[i])), bf,
                            cfg_.tradeoff_c);
    }
    std::size_t cursor = 0;
    const auto best = *select_best(candidates_, [&](const CovariateSet&) {
      return mq[cursor++];
    });
    Choice c{candidates_[best]};
    c.pe = pe_cache_.at(Key::from(c.set));
    c.control_ratio = side_ratio(pending[best].control, state_.unmatched_control);
    c.treated_ratio = side_ratio(pending[best].treated, state_.unmatched_treated);
    return c;
  }

  void commit(const Choice& choice, std::size_t iteration) {
    const CovariateSet& s = choice.set;
    const Key key = Key::from(s);
    const std::size_t rem_t = state_.unmatched_treated;
    const std::size_t rem_c = state_.unmatched_control;
    grouped_mr(d_, CovariateSet::complement(s, p_), iteration, state_);

    const auto fresh = lattice_.generate_new_active_sets(key);
    lattice_.deactivate(key);
    if (cfg_.mode == SelectionMode::kFixedWeight) {
      queue_.erase(Entry{weight_of(s), s});
    } else {
      std::erase(candidates_, s);
    }
    lattice_.mark_processed(key);
    for (const auto& r : fresh) {
      // Dropping every covariate leaves nothing to match on.
      if (r.size() < p_) activate(r.to_set());
    }
    const double pe = std::isnan(choice.pe) ? pe_of(s) : choice.pe;
    record(s, iteration, rem_t, rem_c, pe);
  }

  void record(const CovariateSet& s, std::size_t iteration, std::size_t rem_t,
              std::size_t rem_c, double pe) {
    TraceEntry t;
    t.iteration = iteration;
    t.dropped = s;
    t.set_weight = weight_of(s);
    t.pe = pe;
    t.newly_matched_treated = rem_t - state_.unmatched_treated;
    t.newly_matched_control = rem_c - state_.unmatched_control;
    t.bf = balancing_factor(t.newly_matched_control, rem_c,
                            t.newly_matched_treated, rem_t);
    t.mq = std::isnan(pe) ? kNaN : match_quality(pe, t.bf, cfg_.tradeoff_c);
    t.unmatched_treated = state_.unmatched_treated;
    t.unmatched_control = state_.unmatched_control;
    std::size_t formed = 0;
    for (auto it = state_.groups.rbegin();
         it != state_.groups.rend() && it->id.iteration == iteration; ++it) {
      ++formed;
    }
    t.groups_formed = formed;
    state_.trace.push_back(std::move(t));
  }

  const Dataset& d_;
  const Dataset* holdout_;
  const EngineConfig& cfg_;
  std::optional<WeightVector> weights_;
  std::size_t p_;
  LatticeState<Key> lattice_;
  MatchState state_;
  std::set<Entry, EntryOrder> queue_;
  std::vector<CovariateSet> candidates_;
  std::unordered_map<Key, double, typename Key::Hash> pe_cache_;
  double baseline_pe_ = kNaN;
};

}  // namespace

MatchResult run(const Dataset& d, const Dataset* holdout,
                const EngineConfig& cfg) {
  check_config(d, holdout, cfg);
  using Clock = std::chrono::steady_clock;
  MatchResult result;
  result.mode = cfg.mode;
  result.p = d.p();

  const auto t0 = Clock::now();
  std::optional<WeightVector> weights = cfg.weights;
  if (!weights && cfg.mode == SelectionMode::kFixedWeight) {
    if (holdout == nullptr) {
      throw Error(ErrorCode::kConfig,
                  "fixed-weight mode needs weights or a holdout to derive them");
    }
    ImportanceOptions io;
    io.n_shuffles = cfg.importance_shuffles;
    io.ridge_lambda = cfg.importance_lambda;
    io.seed = cfg.seed;
    io.threads = cfg.threads;
    const auto scores = permutation_importance(*holdout, io);
    weights = weights_from_importance(scores);
  }
  const auto t1 = Clock::now();

  if (d.p() <= Mask128::kMaxCovariates) {
    Runner<Mask128> runner(d, holdout, cfg, weights);
    result.state = runner.run(result.stop_reason);
  } else {
    Runner<IndexListKey> runner(d, holdout, cfg, weights);
    result.state = runner.run(result.stop_reason);
  }
  const auto t2 = Clock::now();

  result.weights = std::move(weights);
  result.timing.weights_ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count();
  result.timing.matching_ms =
      std::chrono::duration<double, std::milli>(t2 - t1).count();
  return result;
}

}  // namespace aemr
