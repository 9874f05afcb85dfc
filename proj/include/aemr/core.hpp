#pragma once

// Domain types shared by every stage of the matcher: the categorical dataset,
// covariate sets with their indicator vectors, and covariate weights.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aemr {

using UnitId = std::uint32_t;
using Code = std::uint32_t;

enum class ErrorCode {
  kInvalidCovariate,
  kDimensionMismatch,
  kValidation,
  kConfig,
  kSize,
  kInput,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct CovariateSpec {
  std::string name;
  // Number of levels, including the missing sentinel when the dataset
  // carries a missing mask.
  std::uint32_t arity = 2;
};

// Sorted, duplicate-free set of 0-based covariate indices.
class CovariateSet {
 public:
  CovariateSet() = default;
  CovariateSet(std::initializer_list<std::uint32_t> members);
  explicit CovariateSet(std::vector<std::uint32_t> members);

  static CovariateSet all(std::size_t p);
  // {0..p-1} minus `dropped`.
  static CovariateSet complement(const CovariateSet& dropped, std::size_t p);

  const std::vector<std::uint32_t>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  bool contains(std::uint32_t j) const;
  bool is_subset_of(const CovariateSet& other) const;
  CovariateSet with(std::uint32_t j) const;
  CovariateSet without(std::uint32_t j) const;
  CovariateSet union_with(const CovariateSet& other) const;

  auto begin() const { return members_.begin(); }
  auto end() const { return members_.end(); }

  friend bool operator==(const CovariateSet&, const CovariateSet&) = default;
  // Plain lexicographic order on the member lists.
  friend bool operator<(const CovariateSet& a, const CovariateSet& b) {
    return a.members_ < b.members_;
  }

  std::string to_string() const;

 private:
  std::vector<std::uint32_t> members_;
};

// Selection order shared by the engine and the oracles: smaller cardinality
// first, then lexicographically smaller member list.
bool tie_order_less(const CovariateSet& a, const CovariateSet& b);

using IndicatorVector = std::vector<std::uint8_t>;

// bits[i] == 1 exactly when covariate i is retained (not in `dropped`).
IndicatorVector indicator_of(const CovariateSet& dropped, std::size_t p);

class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> w);

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  const std::vector<double>& values() const { return w_; }
  double total() const;

 private:
  std::vector<double> w_;
};

// v_s . w, i.e. the summed weight of the covariates NOT in `dropped`.
// Summation runs in ascending index order so equal sets always give
// bit-identical sums.
double set_weight(const CovariateSet& dropped, const WeightVector& w);

// Immutable categorical table. Codes are stored row-major.
class Dataset {
 public:
  Dataset() = default;
  // Throws kDimensionMismatch when the buffers disagree in shape. Content
  // checks are left to validate_dataset().
  Dataset(std::vector<CovariateSpec> specs, std::vector<Code> codes,
          std::vector<std::uint8_t> treatment, std::vector<double> outcome,
          std::vector<std::uint8_t> missing_mask = {});

  std::size_t n() const { return treatment_.size(); }
  std::size_t p() const { return specs_.size(); }
  const std::vector<CovariateSpec>& specs() const { return specs_; }
  const CovariateSpec& spec(std::size_t j) const { return specs_[j]; }

  Code code(std::size_t unit, std::size_t j) const {
    return codes_[unit * specs_.size() + j];
  }
  std::span<const Code> row(std::size_t unit) const {
    return {codes_.data() + unit * specs_.size(), specs_.size()};
  }
  bool treated(std::size_t unit) const { return treatment_[unit] == 1; }
  std::uint8_t treatment(std::size_t unit) const { return treatment_[unit]; }
  double outcome(std::size_t unit) const { return outcome_[unit]; }

  bool has_missing_mask() const { return !missing_.empty(); }
  bool missing(std::size_t unit, std::size_t j) const {
    return !missing_.empty() && missing_[unit * specs_.size() + j] != 0;
  }
  // True when any covariate of `covs` is unobserved for `unit`.
  bool missing_any(std::size_t unit, const CovariateSet& covs) const;

  std::size_t count_treated() const;
  std::size_t count_control() const { return n() - count_treated(); }

  const std::vector<Code>& codes() const { return codes_; }
  const std::vector<std::uint8_t>& treatments() const { return treatment_; }
  const std::vector<double>& outcomes() const { return outcome_; }
  const std::vector<std::uint8_t>& missing_mask() const { return missing_; }

  // Rows `units` in the given order, same columns.
  Dataset subset(std::span<const UnitId> units) const;

 private:
  std::vector<CovariateSpec> specs_;
  std::vector<Code> codes_;
  std::vector<std::uint8_t> treatment_;
  std::vector<double> outcome_;
  std::vector<std::uint8_t> missing_;
};

struct ValidationIssue {
  enum class Kind {
    kArityTooSmall,
    kDuplicateName,
    kCodeOutOfRange,
    kNonBinaryTreatment,
    kNonFiniteOutcome,
    kMissingCodeMismatch,
    kNoTreated,
    kNoControl,
    kEmpty,
  };
  Kind kind;
  // -1 when the issue is not tied to a row or a column.
  std::int64_t row = -1;
  std::int64_t column = -1;
  std::string message;
};

struct ValidationOptions {
  // Matching runs need both arms; plain ingestion does not.
  bool require_both_arms = true;
};

std::vector<ValidationIssue> validate_dataset(const Dataset& d,
                                              ValidationOptions opts = {});

// Throws Error(kValidation) listing every issue, if any.
void require_valid(const Dataset& d, const std::string& what,
                   ValidationOptions opts = {});

}  // namespace aemr
