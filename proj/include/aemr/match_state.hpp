#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "aemr/core.hpp"

namespace aemr {

// Deterministic group identity: the iteration that formed the group and the
// rank of its key among the groups formed in that iteration.
struct GroupId {
  std::uint32_t iteration = 0;
  std::uint32_t rank = 0;
  friend bool operator==(const GroupId&, const GroupId&) = default;
};

struct MatchedGroup {
  GroupId id;
  CovariateSet retained;
  // Shared code of every member, one per retained covariate.
  std::vector<Code> key_values;
  // Ascending unit ids. main_members and aux_members partition members.
  std::vector<UnitId> members;
  std::vector<UnitId> main_members;
  std::vector<UnitId> aux_members;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
};

struct TraceEntry {
  std::size_t iteration = 0;
  CovariateSet dropped;
  // NaN when no weight vector is in play.
  double set_weight = 0.0;
  // NaN when no holdout is available.
  double pe = 0.0;
  double bf = 0.0;
  double mq = 0.0;
  std::size_t newly_matched_treated = 0;
  std::size_t newly_matched_control = 0;
  std::size_t unmatched_treated = 0;
  std::size_t unmatched_control = 0;
  std::size_t groups_formed = 0;
};

// Per-unit bookkeeping of one matching run. done[u] holds exactly when
// main_group[u] is set; auxiliary lists only ever grow.
struct MatchState {
  MatchState() = default;
  explicit MatchState(const Dataset& d);

  std::vector<std::uint8_t> done;
  std::vector<std::optional<std::size_t>> main_group;
  std::vector<std::vector<std::size_t>> auxiliary;
  // All groups formed so far; group refs index into this.
  std::vector<MatchedGroup> groups;
  std::vector<TraceEntry> trace;
  std::size_t unmatched_treated = 0;
  std::size_t unmatched_control = 0;
};

}  // namespace aemr
