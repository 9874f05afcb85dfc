#pragma once

// Exact group-by on a retained covariate subset.
//
// Each unit's retained codes are packed into a mixed-radix integer: the
// first retained covariate is the least significant digit and digit j is
// scaled by the product of the arities of digits 0..j-1. The encoding is
// injective for any mix of arities. When the radix product does not fit in
// 128 bits the grouping falls back to comparing the code tuples directly,
// using the same ordering, so group order and ids do not depend on the path.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "aemr/core.hpp"
#include "aemr/match_state.hpp"

namespace aemr {

using Key128 = unsigned __int128;

struct EncodedKeys {
  // Parallel to the dataset rows.
  std::vector<Key128> b;
  // b with the treatment bit as an extra lowest digit: t + 2 * b.
  std::vector<Key128> b_plus;
};

// Radix product of the retained arities, or nullopt when it (times two, for
// b_plus) overflows 128 bits.
std::optional<Key128> radix_capacity(const Dataset& d,
                                     const CovariateSet& retained);

// nullopt when the keys do not fit the native width.
std::optional<EncodedKeys> encode_units(const Dataset& d,
                                        const CovariateSet& retained);

struct GroupingOptions {
  // Always use the tuple path; lets tests compare both paths.
  bool force_tuple_keys = false;
};

struct RawGroup {
  std::vector<Code> key_values;
  std::vector<UnitId> members;  // ascending
  std::size_t n_treated = 0;
  std::size_t n_control = 0;

  bool valid() const { return n_treated >= 1 && n_control >= 1; }
};

struct GroupByResult {
  // Ordered by key.
  std::vector<RawGroup> groups;
  // Eligible units with a missing value among the retained covariates.
  std::vector<UnitId> ineligible;
};

// Partitions `eligible` by equal retained codes.
GroupByResult group_by(const Dataset& d, const CovariateSet& retained,
                       std::span<const UnitId> eligible,
                       GroupingOptions opts = {});

// Keeps the groups with at least one treated and one control unit.
std::vector<RawGroup> prune(std::vector<RawGroup> raw);

struct GroupedMrOutput {
  std::vector<UnitId> newly_matched;
  std::vector<UnitId> remaining;
  // Indices into state.groups of the groups formed by this call.
  std::vector<std::size_t> group_refs;
};

// One matching-with-replacement step. Groups are formed over every eligible
// unit of `d`, matched or not. A valid group is recorded when it holds at
// least one unit that is still unmatched: such units become its main members
// and take it as their main group, while previously matched members are
// auxiliary and get the group appended to their auxiliary list.
GroupedMrOutput grouped_mr(const Dataset& d, const CovariateSet& retained,
                           std::size_t iteration, MatchState& state,
                           GroupingOptions opts = {});

struct PendingMatches {
  std::size_t treated = 0;
  std::size_t control = 0;
};

// Units that grouped_mr would newly match on `retained`, without mutating
// anything.
PendingMatches count_new_matches(const Dataset& d, const CovariateSet& retained,
                                 const MatchState& state,
                                 GroupingOptions opts = {});

}  // namespace aemr
