#pragma once

// Reference solutions that are slow but easy to check by eye.
//
// brute_pairwise compares every unit with every unit of the opposite arm and
// keeps the heaviest agreement. brute_enumerate walks every covariate subset
// in the engine's global order and runs a matching step on each.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aemr/core.hpp"
#include "aemr/engine.hpp"

namespace aemr {

struct PairwiseRecord {
  UnitId unit = 0;
  bool treated = false;
  // False when no opposite-arm unit exists at all.
  bool has_partner = false;
  // Largest v . w over the opposite arm.
  double weight = 0.0;
  // Dropped set of the best partner; among partners with the same weight,
  // the one that comes first under tie_order_less.
  CovariateSet witness;
  // The witness drops every covariate: nothing is shared with any partner.
  // Such units never get a CATE.
  bool degenerate = false;
  // Every unit (both arms) that agrees with this one on the retained set,
  // ascending. Includes the unit itself.
  std::vector<UnitId> group;
  // Members of `group` first matched on an earlier set.
  std::vector<UnitId> aux;
};

struct PairwiseResult {
  // Indexed by unit id.
  std::vector<PairwiseRecord> records;
};

PairwiseResult brute_pairwise(const Dataset& d, const WeightVector& w,
                              unsigned threads = 1);

constexpr std::size_t kDefaultEnumerateCap = 16;

// Throws kSize when p exceeds `cap`. Stops once every unit is matched.
MatchResult brute_enumerate(const Dataset& d, const WeightVector& w,
                            std::size_t cap = kDefaultEnumerateCap);

// Every dropped set with at least one retained covariate, heaviest retained
// weight first, ties by tie_order_less.
std::vector<CovariateSet> enumeration_order(const WeightVector& w);

// Engine-versus-oracle comparison over the treated units of one instance.
struct CrossCheckOptions {
  // Replace the engine's choice by the worst active set; the check must
  // then report disagreements.
  bool inject_fault = false;
  std::size_t enumerate_cap = kDefaultEnumerateCap;
  unsigned threads = 1;
};

struct CrossCheckReport {
  std::size_t instances = 0;
  std::size_t treated = 0;
  // Optimal retained-set weight equal to the pairwise optimum (or both
  // leave the unit without a match).
  std::size_t weight_agree = 0;
  // Same dropped set and same main-group members.
  std::size_t witness_agree = 0;
  std::size_t enumerate_checked = 0;
  std::size_t enumerate_agree = 0;
  // First few disagreements, human readable.
  std::vector<std::string> notes;

  bool all_agree() const {
    return weight_agree == treated && witness_agree == treated &&
           enumerate_agree == enumerate_checked;
  }
  void merge(const CrossCheckReport& other);
};

CrossCheckReport cross_check(const Dataset& d, const WeightVector& w,
                             const CrossCheckOptions& opts = {});

struct RandomInstance {
  Dataset data;
  WeightVector weights;
};

// n in [20, 300], p in [3, 10], arities 2 or 3, both arms present, integer
// weights in [1, 9].
RandomInstance random_instance(std::uint64_t seed, std::uint64_t trial);

}  // namespace aemr
