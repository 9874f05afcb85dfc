#include "aemr/lattice.hpp"

#include <set>

#include <fmt/format.h>

namespace aemr {

namespace {

void check_range(const CovariateSet& s, std::size_t p) {
  if (!s.empty() && s.members().back() >= p) {
    throw Error(ErrorCode::kInvalidCovariate,
                fmt::format("set {} has a covariate >= p={}", s.to_string(), p));
  }
}

template <typename Key>
std::vector<CovariateSet> generate_with(std::span<const CovariateSet> processed,
                                        const CovariateSet& s, std::size_t p) {
  LatticeState<Key> state(p);
  for (const auto& d : processed) {
    check_range(d, p);
    state.mark_processed(Key::from(d));
  }
  std::vector<CovariateSet> out;
  for (const auto& r : state.generate_new_active_sets(Key::from(s))) {
    out.push_back(r.to_set());
  }
  return out;
}

}  // namespace

std::vector<CovariateSet> generate_new_active_sets(
    std::span<const CovariateSet> processed, const CovariateSet& s,
    std::size_t p) {
  check_range(s, p);
  if (p <= Mask128::kMaxCovariates) return generate_with<Mask128>(processed, s, p);
  return generate_with<IndexListKey>(processed, s, p);
}

std::vector<CovariateSet> brute_eligible(std::span<const CovariateSet> processed,
                                         const CovariateSet& s, std::size_t p) {
  check_range(s, p);
  const std::set<CovariateSet> done(processed.begin(), processed.end());
  std::vector<CovariateSet> out;
  if (s.empty()) return out;
  for (std::uint32_t f = 0; f < p; ++f) {
    if (s.contains(f)) continue;
    const CovariateSet r = s.with(f);
    bool eligible = true;
    for (auto x : r) {
      const CovariateSet sub = r.without(x);
      if (sub != s && done.count(sub) == 0) {
        eligible = false;
        break;
      }
    }
    if (eligible) out.push_back(r);
  }
  return out;
}

}  // namespace aemr
