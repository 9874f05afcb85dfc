#include "aemr/estimate.hpp"

#include <fmt/format.h>

#include "aemr/parallel.hpp"

namespace aemr {

double group_cate(const MatchedGroup& g, const Dataset& d) {
  double sum_t = 0.0;
  double sum_c = 0.0;
  std::size_t n_t = 0;
  std::size_t n_c = 0;
  for (auto u : g.members) {
    if (d.treated(u)) {
      sum_t += d.outcome(u);
      ++n_t;
    } else {
      sum_c += d.outcome(u);
      ++n_c;
    }
  }
  if (n_t == 0 || n_c == 0) {
    throw Error(ErrorCode::kValidation,
                fmt::format("group {}:{} needs a treated and a control member",
                            g.id.iteration, g.id.rank));
  }
  return sum_t / static_cast<double>(n_t) - sum_c / static_cast<double>(n_c);
}

std::vector<CateRecord> estimate_all(const MatchState& state, const Dataset& d,
                                     unsigned threads) {
  std::vector<double> cates(state.groups.size());
  parallel_for(state.groups.size(), threads, [&](std::size_t g) {
    cates[g] = group_cate(state.groups[g], d);
  });
  std::vector<CateRecord> out;
  for (UnitId u = 0; u < state.main_group.size(); ++u) {
    if (!state.main_group[u]) continue;
    const std::size_t g = *state.main_group[u];
    const auto& group = state.groups[g];
    out.push_back(CateRecord{u, d.treated(u), group.id, g, cates[g],
                             group.n_treated, group.n_control});
  }
  return out;
}

double ate(std::span<const CateRecord> records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.treated) continue;
    sum += r.cate;
    ++n;
  }
  if (n == 0) {
    throw Error(ErrorCode::kValidation, "ATE needs at least one treated record");
  }
  return sum / static_cast<double>(n);
}

}  // namespace aemr
