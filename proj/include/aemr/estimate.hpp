#pragma once

// Treatment effects from matched groups. A group's CATE is the difference of
// treated and control outcome means over all of its members, auxiliary ones
// included; each matched unit takes the CATE of its main group.

#include <cstddef>
#include <span>
#include <vector>

#include "aemr/core.hpp"
#include "aemr/engine.hpp"
#include "aemr/match_state.hpp"

namespace aemr {

struct CateRecord {
  UnitId unit = 0;
  bool treated = false;
  GroupId group_id;
  // Index into MatchState::groups.
  std::size_t group_ref = 0;
  double cate = 0.0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
};

// Throws kValidation when the group lacks a treated or a control member.
double group_cate(const MatchedGroup& g, const Dataset& d);

// One record per matched unit, ascending by unit id.
std::vector<CateRecord> estimate_all(const MatchState& state, const Dataset& d,
                                     unsigned threads = 1);
inline std::vector<CateRecord> estimate_all(const MatchResult& result,
                                            const Dataset& d,
                                            unsigned threads = 1) {
  return estimate_all(result.state, d, threads);
}

// Mean CATE over the treated records; kValidation when there are none.
double ate(std::span<const CateRecord> records);

}  // namespace aemr
