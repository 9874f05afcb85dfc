#include "aemr/core.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace aemr {

CovariateSet::CovariateSet(std::initializer_list<std::uint32_t> members)
    : CovariateSet(std::vector<std::uint32_t>(members)) {}

CovariateSet::CovariateSet(std::vector<std::uint32_t> members)
    : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end());
  members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

CovariateSet CovariateSet::all(std::size_t p) {
  std::vector<std::uint32_t> m(p);
  for (std::size_t j = 0; j < p; ++j) m[j] = static_cast<std::uint32_t>(j);
  CovariateSet s;
  s.members_ = std::move(m);
  return s;
}

CovariateSet CovariateSet::complement(const CovariateSet& dropped,
                                      std::size_t p) {
  CovariateSet s;
  s.members_.reserve(p);
  auto it = dropped.members_.begin();
  for (std::uint32_t j = 0; j < p; ++j) {
    while (it != dropped.members_.end() && *it < j) ++it;
    if (it != dropped.members_.end() && *it == j) continue;
    s.members_.push_back(j);
  }
  return s;
}

bool CovariateSet::contains(std::uint32_t j) const {
  return std::binary_search(members_.begin(), members_.end(), j);
}

bool CovariateSet::is_subset_of(const CovariateSet& other) const {
  return std::includes(other.members_.begin(), other.members_.end(),
                       members_.begin(), members_.end());
}

CovariateSet CovariateSet::with(std::uint32_t j) const {
  CovariateSet s = *this;
  auto it = std::lower_bound(s.members_.begin(), s.members_.end(), j);
  if (it == s.members_.end() || *it != j) s.members_.insert(it, j);
  return s;
}

CovariateSet CovariateSet::without(std::uint32_t j) const {
  CovariateSet s = *this;
  auto it = std::lower_bound(s.members_.begin(), s.members_.end(), j);
  if (it != s.members_.end() && *it == j) s.members_.erase(it);
  return s;
}

CovariateSet CovariateSet::union_with(const CovariateSet& other) const {
  CovariateSet s;
  std::set_union(members_.begin(), members_.end(), other.members_.begin(),
                 other.members_.end(), std::back_inserter(s.members_));
  return s;
}

std::string CovariateSet::to_string() const {
  return fmt::format("{{{}}}", fmt::join(members_, ","));
}

bool tie_order_less(const CovariateSet& a, const CovariateSet& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

IndicatorVector indicator_of(const CovariateSet& dropped, std::size_t p) {
  IndicatorVector v(p, 1);
  for (auto j : dropped) {
    if (j >= p) {
      throw Error(ErrorCode::kInvalidCovariate,
                  fmt::format("covariate index {} out of range for p={}", j, p));
    }
    v[j] = 0;
  }
  return v;
}

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
  for (std::size_t i = 0; i < w_.size(); ++i) {
    if (!(w_[i] >= 0.0) || !std::isfinite(w_[i])) {
      throw Error(ErrorCode::kConfig,
                  fmt::format("weight {} must be finite and >= 0, got {}", i,
                              w_[i]));
    }
  }
}

double WeightVector::total() const {
  double t = 0.0;
  for (double x : w_) t += x;
  return t;
}

double set_weight(const CovariateSet& dropped, const WeightVector& w) {
  if (!dropped.empty() && dropped.members().back() >= w.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("set {} does not fit weight vector of size {}",
                            dropped.to_string(), w.size()));
  }
  double total = 0.0;
  auto it = dropped.begin();
  for (std::uint32_t j = 0; j < w.size(); ++j) {
    if (it != dropped.end() && *it == j) {
      ++it;
      continue;
    }
    total += w[j];
  }
  return total;
}

Dataset::Dataset(std::vector<CovariateSpec> specs, std::vector<Code> codes,
                 std::vector<std::uint8_t> treatment,
                 std::vector<double> outcome,
                 std::vector<std::uint8_t> missing_mask)
    : specs_(std::move(specs)),
      codes_(std::move(codes)),
      treatment_(std::move(treatment)),
      outcome_(std::move(outcome)),
      missing_(std::move(missing_mask)) {
  const std::size_t n = treatment_.size();
  if (outcome_.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("outcome has {} rows, treatment has {}",
                            outcome_.size(), n));
  }
  if (codes_.size() != n * specs_.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                fmt::format("expected {}x{} covariate codes, got {}", n,
                            specs_.size(), codes_.size()));
  }
  if (!missing_.empty() && missing_.size() != codes_.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "missing mask shape differs from covariate matrix");
  }
}

bool Dataset::missing_any(std::size_t unit, const CovariateSet& covs) const {
  if (missing_.empty()) return false;
  const std::uint8_t* row = missing_.data() + unit * specs_.size();
  for (auto j : covs) {
    if (row[j]) return true;
  }
  return false;
}

std::size_t Dataset::count_treated() const {
  return static_cast<std::size_t>(
      std::count(treatment_.begin(), treatment_.end(), std::uint8_t{1}));
}

Dataset Dataset::subset(std::span<const UnitId> units) const {
  const std::size_t p = specs_.size();
  std::vector<Code> codes;
  std::vector<std::uint8_t> t;
  std::vector<double> y;
  std::vector<std::uint8_t> miss;
  codes.reserve(units.size() * p);
  for (auto u : units) {
    auto r = row(u);
    codes.insert(codes.end(), r.begin(), r.end());
    t.push_back(treatment_[u]);
    y.push_back(outcome_[u]);
    if (!missing_.empty()) {
      miss.insert(miss.end(), missing_.begin() + u * p,
                  missing_.begin() + (u + 1) * p);
    }
  }
  return Dataset(specs_, std::move(codes), std::move(t), std::move(y),
                 std::move(miss));
}

std::vector<ValidationIssue> validate_dataset(const Dataset& d,
                                              ValidationOptions opts) {
  using Kind = ValidationIssue::Kind;
  std::vector<ValidationIssue> issues;
  std::unordered_set<std::string> names;
  for (std::size_t j = 0; j < d.p(); ++j) {
    const auto& s = d.spec(j);
    if (s.arity < 2) {
      issues.push_back({Kind::kArityTooSmall, -1, static_cast<std::int64_t>(j),
                        fmt::format("covariate '{}' has arity {} (< 2)", s.name,
                                    s.arity)});
    }
    if (!names.insert(s.name).second) {
      issues.push_back({Kind::kDuplicateName, -1, static_cast<std::int64_t>(j),
                        fmt::format("duplicate covariate name '{}'", s.name)});
    }
  }
  if (d.n() == 0) {
    issues.push_back({Kind::kEmpty, -1, -1, "dataset has no units"});
  }
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto row = static_cast<std::int64_t>(i);
    for (std::size_t j = 0; j < d.p(); ++j) {
      const Code c = d.code(i, j);
      const auto arity = d.spec(j).arity;
      const auto col = static_cast<std::int64_t>(j);
      if (c >= arity) {
        issues.push_back({Kind::kCodeOutOfRange, row, col,
                          fmt::format("code {} >= arity {} at row {}, column '{}'",
                                      c, arity, i, d.spec(j).name)});
      } else if (d.has_missing_mask()) {
        const bool sentinel = (c == arity - 1);
        if (sentinel != d.missing(i, j)) {
          issues.push_back(
              {Kind::kMissingCodeMismatch, row, col,
               fmt::format("row {}, column '{}': missing flag and sentinel "
                           "code disagree",
                           i, d.spec(j).name)});
        }
      }
    }
    if (d.treatment(i) > 1) {
      issues.push_back({Kind::kNonBinaryTreatment, row, -1,
                        fmt::format("treatment {} at row {} is not 0/1",
                                    static_cast<int>(d.treatment(i)), i)});
    }
    if (!std::isfinite(d.outcome(i))) {
      issues.push_back({Kind::kNonFiniteOutcome, row, -1,
                        fmt::format("outcome at row {} is not finite", i)});
    }
  }
  if (opts.require_both_arms && d.n() > 0) {
    std::size_t nt = 0, nc = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
      if (d.treatment(i) == 1) ++nt;
      if (d.treatment(i) == 0) ++nc;
    }
    if (nt == 0) issues.push_back({Kind::kNoTreated, -1, -1, "no treated units"});
    if (nc == 0) issues.push_back({Kind::kNoControl, -1, -1, "no control units"});
  }
  return issues;
}

void require_valid(const Dataset& d, const std::string& what,
                   ValidationOptions opts) {
  auto issues = validate_dataset(d, opts);
  if (issues.empty()) return;
  std::string msg = fmt::format("{} failed validation ({} issue{}):", what,
                                issues.size(), issues.size() == 1 ? "" : "s");
  constexpr std::size_t kShown = 20;
  for (std::size_t i = 0; i < issues.size() && i < kShown; ++i) {
    msg += "\n  " + issues[i].message;
  }
  if (issues.size() > kShown) {
    msg += fmt::format("\n  ... and {} more", issues.size() - kShown);
  }
  throw Error(ErrorCode::kValidation, msg);
}

}  // namespace aemr
