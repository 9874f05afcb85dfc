#pragma once

// The dynamic almost-exact matching loop.
//
// Iteration 0 matches exactly on every covariate. Each later iteration picks
// the best active covariate set s*, forms matched groups on the remaining
// covariates with replacement, moves s* to the processed sets, and activates
// the supersets that became eligible. The loop ends when a stop rule fires,
// when no active set is left, or (by default) when every treated unit has a
// main group.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aemr/core.hpp"
#include "aemr/match_state.hpp"

namespace aemr {

enum class SelectionMode { kFixedWeight, kAdaptiveMq };

enum class StopReason {
  kNone,
  kTreatedExhausted,
  kLatticeExhausted,
  kPeDegraded,
  kBalanceGap,
  kImportantCovariate,
  kMaxIterations,
};

std::string to_string(StopReason r);
std::string to_string(SelectionMode m);

struct StopRules {
  // Stop once no treated unit is left unmatched. When off, the loop keeps
  // matching control units until the lattice is exhausted.
  bool exhaust_treated = true;
  // Adaptive mode only: stop before a drop whose PE exceeds the iteration-0
  // PE by more than this fraction.
  std::optional<double> max_pe_degradation_fraction = 0.05;
  // Adaptive mode only: stop before a drop whose matched-to-remaining ratios
  // for treated and control differ by more than this.
  std::optional<double> max_balance_ratio_gap = 0.10;
  std::optional<std::size_t> max_iterations;
  // Fixed mode only: stop before dropping any covariate whose weight is
  // above this threshold.
  std::optional<double> early_stop_before_important;
};

struct EngineConfig {
  SelectionMode mode = SelectionMode::kFixedWeight;
  // Fixed mode. When absent, weights come from permutation importance on
  // the holdout.
  std::optional<WeightVector> weights;
  // Adaptive mode trade-off between BF and PE.
  double tradeoff_c = 0.1;
  StopRules stop;
  bool missing_enabled = false;
  std::uint64_t seed = 0;
  double ridge_lambda = 0.0;
  // Used only when weights are derived from the holdout.
  std::size_t importance_shuffles = 100;
  double importance_lambda = 1.0;
  unsigned threads = 1;
  // Test hook: when set, replaces the fixed-mode choice of s* with the
  // returned index into the (tie-ordered) candidate list.
  std::function<std::size_t(std::span<const CovariateSet>)> selection_override;
};

struct EngineTiming {
  double weights_ms = 0.0;
  double matching_ms = 0.0;
};

struct MatchResult {
  MatchState state;
  StopReason stop_reason = StopReason::kNone;
  // The weight vector actually used (given or derived); empty in adaptive
  // mode when none was supplied.
  std::optional<WeightVector> weights;
  SelectionMode mode = SelectionMode::kFixedWeight;
  std::size_t p = 0;
  // Excluded from any equality or serialization check.
  EngineTiming timing;

  // Groups formed at iteration i, in rank order.
  std::vector<std::size_t> groups_of_iteration(std::size_t i) const;
};

MatchResult run(const Dataset& d, const Dataset* holdout,
                const EngineConfig& cfg);

// Index of the best candidate: highest score, ties broken by smaller
// cardinality and then the lexicographically smaller member list. nullopt
// for an empty candidate list.
std::optional<std::size_t> select_best(
    std::span<const CovariateSet> candidates,
    const std::function<double(const CovariateSet&)>& score);

// What the stop rules see before committing the next drop.
struct LoopSnapshot {
  std::size_t iterations_done = 0;  // including iteration 0
  std::size_t unmatched_treated = 0;
  bool active_empty = false;
  // The chosen next drop, if one was selected.
  std::optional<CovariateSet> candidate;
  // Largest weight among the candidate's covariates (fixed mode).
  std::optional<double> candidate_max_weight;
  // Adaptive mode.
  std::optional<double> candidate_pe;
  std::optional<double> baseline_pe;
  std::optional<double> candidate_control_ratio;
  std::optional<double> candidate_treated_ratio;
};

StopReason stopping_check(const LoopSnapshot& snap, const EngineConfig& cfg);

}  // namespace aemr
