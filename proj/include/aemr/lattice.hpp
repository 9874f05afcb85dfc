#pragma once

// Active/processed bookkeeping for the covariate-set lattice and generation
// of newly eligible sets.
//
// A set r of size k+1 may become active only once every k-subset of r has
// been processed. New candidates are generated from the set s that was just
// processed: per-size support counts rule out covariates that appear in
// fewer than k processed k-sets, and every surviving candidate is then
// checked subset by subset.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <unordered_set>
#include <vector>

#include "aemr/core.hpp"

namespace aemr {

// Fixed-width bitmask key for p <= 128.
struct Mask128 {
  static constexpr std::size_t kMaxCovariates = 128;

  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  static Mask128 from(const CovariateSet& s) {
    Mask128 m;
    for (auto e : s) m = m.with(e);
    return m;
  }
  CovariateSet to_set() const {
    std::vector<std::uint32_t> out;
    for_each([&](std::uint32_t e) { out.push_back(e); });
    return CovariateSet(std::move(out));
  }
  bool contains(std::uint32_t e) const {
    return e < 64 ? (lo >> e) & 1u : (hi >> (e - 64)) & 1u;
  }
  Mask128 with(std::uint32_t e) const {
    Mask128 m = *this;
    if (e < 64) {
      m.lo |= std::uint64_t{1} << e;
    } else {
      m.hi |= std::uint64_t{1} << (e - 64);
    }
    return m;
  }
  Mask128 without(std::uint32_t e) const {
    Mask128 m = *this;
    if (e < 64) {
      m.lo &= ~(std::uint64_t{1} << e);
    } else {
      m.hi &= ~(std::uint64_t{1} << (e - 64));
    }
    return m;
  }
  std::size_t size() const {
    return static_cast<std::size_t>(std::popcount(lo) + std::popcount(hi));
  }
  template <typename F>
  void for_each(F&& f) const {
    for (std::uint64_t w = lo; w != 0; w &= w - 1) {
      f(static_cast<std::uint32_t>(std::countr_zero(w)));
    }
    for (std::uint64_t w = hi; w != 0; w &= w - 1) {
      f(static_cast<std::uint32_t>(64 + std::countr_zero(w)));
    }
  }
  friend bool operator==(const Mask128&, const Mask128&) = default;

  struct Hash {
    std::size_t operator()(const Mask128& m) const {
      std::uint64_t h = m.lo * 0x9E3779B97F4A7C15ull;
      h ^= m.hi + 0x632BE59BD9B4E019ull + (h << 6) + (h >> 2);
      h ^= h >> 33;
      return static_cast<std::size_t>(h);
    }
  };
};

// Sorted-index key for wider covariate spaces.
struct IndexListKey {
  static constexpr std::size_t kMaxCovariates = static_cast<std::size_t>(-1);

  CovariateSet set;

  static IndexListKey from(const CovariateSet& s) { return {s}; }
  CovariateSet to_set() const { return set; }
  bool contains(std::uint32_t e) const { return set.contains(e); }
  IndexListKey with(std::uint32_t e) const { return {set.with(e)}; }
  IndexListKey without(std::uint32_t e) const { return {set.without(e)}; }
  std::size_t size() const { return set.size(); }
  template <typename F>
  void for_each(F&& f) const {
    for (auto e : set) f(e);
  }
  friend bool operator==(const IndexListKey&, const IndexListKey&) = default;

  struct Hash {
    std::size_t operator()(const IndexListKey& k) const {
      std::uint64_t h = 0xCBF29CE484222325ull;
      for (auto e : k.set) {
        h ^= e + 1;
        h *= 0x100000001B3ull;
      }
      return static_cast<std::size_t>(h);
    }
  };
};

template <typename Key>
class LatticeState {
 public:
  using KeySet = std::unordered_set<Key, typename Key::Hash>;

  explicit LatticeState(std::size_t p)
      : p_(p), processed_(p + 1), support_(p + 1) {
    if (p > Key::kMaxCovariates) {
      throw Error(ErrorCode::kSize, "too many covariates for this lattice key");
    }
  }

  std::size_t p() const { return p_; }
  const KeySet& active() const { return active_; }
  const KeySet& processed_of_size(std::size_t k) const { return processed_[k]; }
  bool is_processed(const Key& s) const { return processed_[s.size()].count(s) > 0; }
  bool is_active(const Key& s) const { return active_.count(s) > 0; }
  std::size_t processed_count() const { return processed_total_; }
  // Number of processed sets of size k that contain covariate e.
  std::uint32_t support(std::size_t k, std::uint32_t e) const {
    return support_[k].empty() ? 0 : support_[k][e];
  }

  bool activate(const Key& s) { return active_.insert(s).second; }
  bool deactivate(const Key& s) { return active_.erase(s) > 0; }

  // Records `s` as processed and keeps the per-size support counts in step.
  void mark_processed(const Key& s) {
    const std::size_t k = s.size();
    if (!processed_[k].insert(s).second) return;
    ++processed_total_;
    if (support_[k].empty()) support_[k].assign(p_, 0);
    s.for_each([&](std::uint32_t e) { ++support_[k][e]; });
  }

  // Supersets r of s with |r| = |s| + 1 whose k-subsets all lie in the
  // processed sets of size k together with s itself. `s` must not be
  // processed yet. Results come in ascending order of the added covariate.
  std::vector<Key> generate_new_active_sets(const Key& s) const {
    std::vector<Key> z;
    const std::size_t k = s.size();
    if (k == 0 || k >= p_) return z;
    const auto& delta_k = processed_[k];
    auto support_of = [&](std::uint32_t e) -> std::uint32_t {
      std::uint32_t base = support_[k].empty() ? 0 : support_[k][e];
      return base + (s.contains(e) ? 1u : 0u);
    };
    bool s_supported = true;
    s.for_each([&](std::uint32_t e) {
      if (support_of(e) < k) s_supported = false;
    });
    if (!s_supported) return z;

    for (std::uint32_t alpha = 0; alpha < p_; ++alpha) {
      if (s.contains(alpha) || support_of(alpha) < k) continue;
      const Key r = s.with(alpha);
      bool all_present = true;
      r.for_each([&](std::uint32_t x) {
        if (!all_present || x == alpha) return;
        if (delta_k.count(r.without(x)) == 0) all_present = false;
      });
      if (all_present) z.push_back(r);
    }
    return z;
  }

 private:
  std::size_t p_;
  KeySet active_;
  std::vector<KeySet> processed_;
  // support_[k][e]; lazily sized.
  std::vector<std::vector<std::uint32_t>> support_;
  std::size_t processed_total_ = 0;
};

// Set-valued entry points; pick the key type from p.
std::vector<CovariateSet> generate_new_active_sets(
    std::span<const CovariateSet> processed, const CovariateSet& s,
    std::size_t p);

// Direct enumeration: every r = s + {f}, f outside s, whose k-subsets are all
// in processed or equal to s. Ascending in f.
std::vector<CovariateSet> brute_eligible(std::span<const CovariateSet> processed,
                                         const CovariateSet& s, std::size_t p);

}  // namespace aemr
