#include "q2c/pareto.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "q2c/errors.hpp"

namespace q2c {

std::vector<std::string> strict_frontier(const std::vector<ConfigStats>& stats) {
  if (stats.empty()) throw IntegrityError("strict_frontier: empty stats");

  // Sort by cost ascending; within a cost group the max accuracy wins and
  // must also beat the best accuracy at strictly lower cost. Equal (cost,
  // accuracy) points neither dominate each other, so all of them survive.
  std::vector<std::size_t> order(stats.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (stats[a].mean_cost != stats[b].mean_cost)
      return stats[a].mean_cost < stats[b].mean_cost;
    return stats[a].mean_accuracy > stats[b].mean_accuracy;
  });

  std::vector<std::string> frontier;
  double best_acc_below = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    const double cost = stats[order[i]].mean_cost;
    while (j < order.size() && stats[order[j]].mean_cost == cost) ++j;
    const double group_max_acc = stats[order[i]].mean_accuracy;
    if (group_max_acc > best_acc_below) {
      for (std::size_t t = i; t < j; ++t) {
        if (stats[order[t]].mean_accuracy == group_max_acc)
          frontier.push_back(stats[order[t]].config_id);
      }
      best_acc_below = group_max_acc;
    }
    i = j;
  }

  // Report in the input stats order for stable output.
  std::unordered_set<std::string> in_frontier(frontier.begin(), frontier.end());
  std::vector<std::string> out;
  for (const auto& s : stats)
    if (in_frontier.count(s.config_id)) out.push_back(s.config_id);
  return out;
}

PruneResult fuzzy_prune(const std::vector<ConfigStats>& stats,
                        const PruneParams& params) {
  if (params.tau_acc < 0.0 || params.tau_cost < 0.0)
    throw IntegrityError("fuzzy_prune: tolerances must be non-negative");

  PruneResult result;
  result.strict_frontier = strict_frontier(stats);
  std::unordered_set<std::string> frontier_set(result.strict_frontier.begin(),
                                               result.strict_frontier.end());

  std::vector<const ConfigStats*> vertices;
  for (const auto& s : stats)
    if (frontier_set.count(s.config_id)) vertices.push_back(&s);
  // Lowest-cost qualifying vertex is reported as the witness; sort for that.
  std::sort(vertices.begin(), vertices.end(),
            [](const ConfigStats* a, const ConfigStats* b) {
              if (a->mean_cost != b->mean_cost) return a->mean_cost < b->mean_cost;
              return a->config_id < b->config_id;
            });

  for (const auto& s : stats) {
    if (frontier_set.count(s.config_id)) {
      result.retained.push_back(s.config_id);
      continue;
    }
    for (const auto* v : vertices) {
      const bool acc_ok = v->mean_accuracy - s.mean_accuracy <= params.tau_acc;
      const bool cost_ok = s.mean_cost <= (1.0 + params.tau_cost) * v->mean_cost;
      if (acc_ok && cost_ok) {
        result.retained.push_back(s.config_id);
        result.witnesses.emplace(s.config_id, v->config_id);
        break;
      }
    }
  }
  return result;
}

}  // namespace q2c
