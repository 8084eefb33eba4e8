#pragma once

#include <map>
#include <string>
#include <vector>

#include "q2c/trace.hpp"

namespace q2c {

struct PruneParams {
  double tau_acc = 0.02;   // accuracy tolerance below a frontier vertex
  double tau_cost = 0.10;  // multiplicative cost headroom above a vertex
};

struct PruneResult {
  // Non-dominated configs in (mean_cost down, mean_accuracy up).
  std::vector<std::string> strict_frontier;
  // Frontier plus every config within (tau_acc, tau_cost) of some vertex.
  std::vector<std::string> retained;
  // For each retained non-frontier config: the lowest-cost frontier vertex
  // satisfying both retention inequalities.
  std::map<std::string, std::string> witnesses;
};

// A config is on the strict frontier iff no other config has
// (mean_cost <=, mean_accuracy >=) with at least one strict inequality.
// Exact duplicate points are all retained. Comparisons are exact.
std::vector<std::string> strict_frontier(const std::vector<ConfigStats>& stats);

// Retains a config c' whenever some strict-frontier vertex c* satisfies
//   acc(c*) - acc(c') <= tau_acc  and  cost(c') <= (1 + tau_cost) * cost(c*).
PruneResult fuzzy_prune(const std::vector<ConfigStats>& stats,
                        const PruneParams& params);

}  // namespace q2c
