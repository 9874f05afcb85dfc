#include "aemr/bitgroup.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace aemr {

MatchState::MatchState(const Dataset& d)
    : done(d.n(), 0),
      main_group(d.n()),
      auxiliary(d.n()),
      unmatched_treated(d.count_treated()),
      unmatched_control(d.count_control()) {}

namespace {

struct Key128Hash {
  std::size_t operator()(Key128 k) const {
    auto lo = static_cast<std::uint64_t>(k);
    auto hi = static_cast<std::uint64_t>(k >> 64);
    std::uint64_t h = lo * 0x9E3779B97F4A7C15ull;
    h ^= hi + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
    h ^= h >> 31;
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 29;
    return static_cast<std::size_t>(h);
  }
};

// Tuple order matching the mixed-radix key order: the last retained
// covariate is the most significant digit.
bool tuple_less(const Dataset& d, const CovariateSet& retained, UnitId a,
                UnitId b) {
  const auto& m = retained.members();
  for (auto it = m.rbegin(); it != m.rend(); ++it) {
    const Code ca = d.code(a, *it);
    const Code cb = d.code(b, *it);
    if (ca != cb) return ca < cb;
  }
  return false;
}

bool tuple_equal(const Dataset& d, const CovariateSet& retained, UnitId a,
                 UnitId b) {
  for (auto j : retained) {
    if (d.code(a, j) != d.code(b, j)) return false;
  }
  return true;
}

Key128 encode_one(const Dataset& d, const CovariateSet& retained, UnitId u) {
  Key128 key = 0;
  Key128 scale = 1;
  for (auto j : retained) {
    key += static_cast<Key128>(d.code(u, j)) * scale;
    scale *= d.spec(j).arity;
  }
  return key;
}

RawGroup make_group(const Dataset& d, const CovariateSet& retained,
                    std::vector<UnitId> members) {
  RawGroup g;
  g.key_values.reserve(retained.size());
  for (auto j : retained) g.key_values.push_back(d.code(members.front(), j));
  for (auto u : members) {
    if (d.treated(u)) {
      ++g.n_treated;
    } else {
      ++g.n_control;
    }
  }
  g.members = std::move(members);
  return g;
}

struct CollectRequest {
  // Units to consider, ascending.
  std::span<const UnitId> units;
  // When set, only groups holding a unit with done[u] == 0 are kept.
  const std::vector<std::uint8_t>* done = nullptr;
  bool only_valid = false;
  bool force_tuple = false;
};

struct Collected {
  std::vector<RawGroup> groups;
  std::vector<UnitId> ineligible;
};

Collected collect_groups(const Dataset& d, const CovariateSet& retained,
                         const CollectRequest& req) {
  Collected out;
  std::vector<UnitId> eligible;
  eligible.reserve(req.units.size());
  for (auto u : req.units) {
    if (d.missing_any(u, retained)) {
      out.ineligible.push_back(u);
    } else {
      eligible.push_back(u);
    }
  }
  if (eligible.empty()) return out;

  auto keep = [&](const RawGroup& g) {
    if (req.only_valid && !g.valid()) return false;
    if (req.done == nullptr) return true;
    return std::any_of(g.members.begin(), g.members.end(),
                       [&](UnitId u) { return (*req.done)[u] == 0; });
  };

  const bool native = !req.force_tuple && radix_capacity(d, retained).has_value();

  if (native && req.done != nullptr) {
    // Only keys carried by some unmatched unit can yield a new group, so
    // hash those first and route everything else past them.
    struct Slot {
      Key128 key;
      std::vector<UnitId> members;
    };
    std::vector<Key128> keys(eligible.size());
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      keys[i] = encode_one(d, retained, eligible[i]);
    }
    std::unordered_map<Key128, std::uint32_t, Key128Hash> slot_of;
    std::vector<Slot> slots;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      if ((*req.done)[eligible[i]] != 0) continue;
      auto [it, inserted] =
          slot_of.try_emplace(keys[i], static_cast<std::uint32_t>(slots.size()));
      if (inserted) slots.push_back({keys[i], {}});
    }
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      auto it = slot_of.find(keys[i]);
      if (it != slot_of.end()) slots[it->second].members.push_back(eligible[i]);
    }
    std::sort(slots.begin(), slots.end(),
              [](const Slot& a, const Slot& b) { return a.key < b.key; });
    for (auto& s : slots) {
      RawGroup g = make_group(d, retained, std::move(s.members));
      if (keep(g)) out.groups.push_back(std::move(g));
    }
    return out;
  }

  if (native) {
    std::vector<std::pair<Key128, UnitId>> keyed(eligible.size());
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      keyed[i] = {encode_one(d, retained, eligible[i]), eligible[i]};
    }
    std::sort(keyed.begin(), keyed.end());
    std::size_t start = 0;
    for (std::size_t i = 1; i <= keyed.size(); ++i) {
      if (i == keyed.size() || keyed[i].first != keyed[start].first) {
        std::vector<UnitId> members;
        members.reserve(i - start);
        for (std::size_t k = start; k < i; ++k) members.push_back(keyed[k].second);
        RawGroup g = make_group(d, retained, std::move(members));
        if (keep(g)) out.groups.push_back(std::move(g));
        start = i;
      }
    }
    return out;
  }

  std::vector<UnitId> order = eligible;
  std::stable_sort(order.begin(), order.end(), [&](UnitId a, UnitId b) {
    return tuple_less(d, retained, a, b);
  });
  std::size_t start = 0;
  for (std::size_t i = 1; i <= order.size(); ++i) {
    if (i == order.size() || !tuple_equal(d, retained, order[i], order[start])) {
      std::vector<UnitId> members(order.begin() + start, order.begin() + i);
      std::sort(members.begin(), members.end());
      RawGroup g = make_group(d, retained, std::move(members));
      if (keep(g)) out.groups.push_back(std::move(g));
      start = i;
    }
  }
  return out;
}

std::vector<UnitId> all_units(const Dataset& d) {
  std::vector<UnitId> units(d.n());
  std::iota(units.begin(), units.end(), UnitId{0});
  return units;
}

}  // namespace

std::optional<Key128> radix_capacity(const Dataset& d,
                                     const CovariateSet& retained) {
  Key128 product = 1;
  for (auto j : retained) {
    if (__builtin_mul_overflow(product, static_cast<Key128>(d.spec(j).arity),
                               &product)) {
      return std::nullopt;
    }
  }
  Key128 doubled;
  if (__builtin_mul_overflow(product, static_cast<Key128>(2), &doubled)) {
    return std::nullopt;
  }
  return product;
}

std::optional<EncodedKeys> encode_units(const Dataset& d,
                                        const CovariateSet& retained) {
  if (!radix_capacity(d, retained)) return std::nullopt;
  EncodedKeys keys;
  keys.b.resize(d.n());
  keys.b_plus.resize(d.n());
  for (UnitId u = 0; u < d.n(); ++u) {
    keys.b[u] = encode_one(d, retained, u);
    keys.b_plus[u] = static_cast<Key128>(d.treatment(u)) + 2 * keys.b[u];
  }
  return keys;
}

GroupByResult group_by(const Dataset& d, const CovariateSet& retained,
                       std::span<const UnitId> eligible, GroupingOptions opts) {
  std::vector<UnitId> units(eligible.begin(), eligible.end());
  std::sort(units.begin(), units.end());
  CollectRequest req{units, nullptr, false, opts.force_tuple_keys};
  auto c = collect_groups(d, retained, req);
  return {std::move(c.groups), std::move(c.ineligible)};
}

std::vector<RawGroup> prune(std::vector<RawGroup> raw) {
  std::erase_if(raw, [](const RawGroup& g) { return !g.valid(); });
  return raw;
}

GroupedMrOutput grouped_mr(const Dataset& d, const CovariateSet& retained,
                           std::size_t iteration, MatchState& state,
                           GroupingOptions opts) {
  const auto units = all_units(d);
  CollectRequest req{units, &state.done, true, opts.force_tuple_keys};
  auto collected = collect_groups(d, retained, req);

  GroupedMrOutput out;
  std::uint32_t rank = 0;
  for (auto& raw : collected.groups) {
    MatchedGroup g;
    g.id = {static_cast<std::uint32_t>(iteration), rank++};
    g.retained = retained;
    g.key_values = std::move(raw.key_values);
    g.n_treated = raw.n_treated;
    g.n_control = raw.n_control;
    for (auto u : raw.members) {
      if (state.done[u] == 0) {
        g.main_members.push_back(u);
      } else {
        g.aux_members.push_back(u);
      }
    }
    g.members = std::move(raw.members);

    const std::size_t ref = state.groups.size();
    for (auto u : g.main_members) {
      state.done[u] = 1;
      state.main_group[u] = ref;
      if (d.treated(u)) {
        --state.unmatched_treated;
      } else {
        --state.unmatched_control;
      }
      out.newly_matched.push_back(u);
    }
    for (auto u : g.aux_members) state.auxiliary[u].push_back(ref);
    out.group_refs.push_back(ref);
    state.groups.push_back(std::move(g));
  }
  std::sort(out.newly_matched.begin(), out.newly_matched.end());
  for (auto u : units) {
    if (state.done[u] == 0) out.remaining.push_back(u);
  }
  return out;
}

PendingMatches count_new_matches(const Dataset& d, const CovariateSet& retained,
                                 const MatchState& state, GroupingOptions opts) {
  const auto units = all_units(d);
  CollectRequest req{units, &state.done, true, opts.force_tuple_keys};
  auto collected = collect_groups(d, retained, req);
  PendingMatches pending;
  for (const auto& g : collected.groups) {
    for (auto u : g.members) {
      if (state.done[u] != 0) continue;
      if (d.treated(u)) {
        ++pending.treated;
      } else {
        ++pending.control;
      }
    }
  }
  return pending;
}

}  // namespace aemr
