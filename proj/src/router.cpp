#include "q2c/router.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "q2c/errors.hpp"

namespace q2c {

namespace {

constexpr double kTieTol = 1e-12;

// Non-dominated points in (cost down, accuracy up), exact comparisons,
// duplicates kept.
std::vector<std::size_t> pareto_of_points(
    const std::vector<CalibrationPoint>& points) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      if (j == i) continue;
      const bool no_worse = points[j].mean_cost <= points[i].mean_cost &&
                            points[j].mean_accuracy >= points[i].mean_accuracy;
      const bool strictly = points[j].mean_cost < points[i].mean_cost ||
                            points[j].mean_accuracy > points[i].mean_accuracy;
      dominated = no_worse && strictly;
    }
    if (!dominated) out.push_back(i);
  }
  return out;
}

}  // namespace

ScoreMatrix score_with_bank(const PredictorBank& bank,
                            const std::vector<FeatureVector>& vectors) {
  if (bank.predictors.empty()) throw IntegrityError("empty predictor bank");
  ScoreMatrix m;
  for (const auto& [cid, pred] : bank.predictors) {
    m.config_ids.push_back(cid);
    auto it = bank.mean_costs.find(cid);
    if (it == bank.mean_costs.end())
      throw IntegrityError("bank has no mean cost for config \"" + cid + "\"");
    m.mean_costs.push_back(it->second);
  }
  m.p_hat.reserve(vectors.size() * m.config_ids.size());
  for (const auto& fv : vectors) {
    m.query_ids.push_back(fv.query_id);
    for (const auto& cid : m.config_ids)
      m.p_hat.push_back(bank.predictors.at(cid).predict(fv.values));
  }
  return m;
}

std::size_t select_config(std::span<const double> p_hat,
                          std::span<const double> costs,
                          std::span<const std::string> ids, double lambda) {
  if (p_hat.empty()) throw IntegrityError("select_config: no candidates");

  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p_hat.size(); ++i)
    best_score = std::max(best_score, p_hat[i] - lambda * costs[i]);

  // Among scores within the tie tolerance of the maximum, lowest cost wins,
  // then lexicographic id.
  std::size_t chosen = p_hat.size();
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    const double score = p_hat[i] - lambda * costs[i];
    if (best_score - score > kTieTol) continue;
    if (chosen == p_hat.size() || costs[i] < costs[chosen] ||
        (costs[i] == costs[chosen] && ids[i] < ids[chosen]))
      chosen = i;
  }
  return chosen;
}

RouteDecision route(const RoutingPolicy& policy, const FeatureVector& fv) {
  if (!policy.bank || policy.bank->predictors.empty())
    throw IntegrityError("route: empty bank");
  if (policy.lambda < 0.0) throw Error("domain", "route: negative lambda");

  const auto& bank = *policy.bank;
  std::vector<std::string> ids;
  std::vector<double> costs, p_hat;
  ids.reserve(bank.predictors.size());
  for (const auto& [cid, pred] : bank.predictors) {
    ids.push_back(cid);
    costs.push_back(bank.mean_costs.at(cid));
    p_hat.push_back(pred.predict(fv.values));
  }

  const std::size_t best = select_config(p_hat, costs, ids, policy.lambda);
  RouteDecision decision;
  decision.config_id = ids[best];
  decision.p_hat = p_hat[best];
  decision.mean_cost = costs[best];
  decision.score = p_hat[best] - policy.lambda * costs[best];

  if (ids.size() > 1) {
    std::vector<std::string> rest_ids;
    std::vector<double> rest_costs, rest_p;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i == best) continue;
      rest_ids.push_back(ids[i]);
      rest_costs.push_back(costs[i]);
      rest_p.push_back(p_hat[i]);
    }
    const std::size_t second =
        select_config(rest_p, rest_costs, rest_ids, policy.lambda);
    decision.runner_up = {rest_ids[second],
                          rest_p[second] - policy.lambda * rest_costs[second]};
  }
  return decision;
}

CalibrationTable sweep_lambda(const ScoreMatrix& matrix,
                              const TruthTable& truth,
                              const std::vector<double>& grid,
                              double characterization_cost_usd,
                              const FallbackMeans* fallback) {
  if (grid.empty()) throw IntegrityError("sweep_lambda: empty lambda grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0) throw IntegrityError("sweep_lambda: negative lambda");
    if (i > 0 && grid[i] <= grid[i - 1])
      throw IntegrityError("sweep_lambda: grid must be strictly increasing");
  }
  if (matrix.query_ids.empty())
    throw IntegrityError("sweep_lambda: empty calibration set");

  // Observed per-config means from the truth table back missing cells.
  FallbackMeans derived;
  if (!fallback) {
    std::map<std::string, std::pair<double, std::pair<double, double>>> acc;
    for (const auto& [key, outcome] : truth) {
      auto& slot = acc[key.second];
      slot.first += 1.0;
      slot.second.first += outcome.correct;
      slot.second.second += outcome.cost_usd;
    }
    for (const auto& [cid, slot] : acc)
      derived[cid] = {slot.second.first / slot.first,
                      slot.second.second / slot.first};
    fallback = &derived;
  }

  CalibrationTable table;
  for (double lambda : grid) {
    CalibrationPoint point;
    point.lambda = lambda;
    double acc_sum = 0.0, cost_sum = 0.0;
    for (std::size_t q = 0; q < matrix.query_ids.size(); ++q) {
      const std::size_t chosen =
          select_config(matrix.row(q), matrix.mean_costs, matrix.config_ids,
                        lambda);
      const auto& cid = matrix.config_ids[chosen];
      auto it = truth.find({matrix.query_ids[q], cid});
      if (it != truth.end()) {
        acc_sum += it->second.correct;
        cost_sum += it->second.cost_usd;
      } else {
        ++point.fallback_cells;
        auto fb = fallback->find(cid);
        if (fb != fallback->end()) {
          acc_sum += fb->second.first;
          cost_sum += fb->second.second;
        } else {
          cost_sum += matrix.mean_costs[chosen];
        }
      }
      cost_sum += characterization_cost_usd;
    }
    const double n = static_cast<double>(matrix.query_ids.size());
    point.mean_accuracy = acc_sum / n;
    point.mean_cost = cost_sum / n;
    table.points.push_back(point);
  }
  table.pareto_indices = pareto_of_points(table.points);
  return table;
}

CalibrationTable sweep_lambda(const PredictorBank& bank,
                              const std::vector<FeatureVector>& vectors,
                              const TruthTable& truth,
                              const std::vector<double>& grid,
                              double characterization_cost_usd) {
  return sweep_lambda(score_with_bank(bank, vectors), truth, grid,
                      characterization_cost_usd);
}

std::vector<double> default_lambda_grid(const std::vector<ConfigStats>& stats,
                                        std::size_t size) {
  if (size < 2) throw IntegrityError("lambda grid size must be >= 2");
  if (stats.empty()) throw IntegrityError("lambda grid needs config stats");

  std::vector<double> costs;
  costs.reserve(stats.size());
  for (const auto& s : stats) costs.push_back(s.mean_cost);
  std::sort(costs.begin(), costs.end());
  const std::size_t n = costs.size();
  const double median = (n % 2 == 1)
                            ? costs[n / 2]
                            : 0.5 * (costs[n / 2 - 1] + costs[n / 2]);
  if (median <= 0.0)
    throw IntegrityError("lambda grid: median mean cost is zero");

  const double lo = 1e-6 / median;
  const double hi = 1e3 / median;
  std::vector<double> grid;
  grid.push_back(0.0);
  const std::size_t m = size - 1;
  if (m == 1) {
    grid.push_back(lo);
  } else {
    const double log_lo = std::log(lo);
    const double log_hi = std::log(hi);
    for (std::size_t i = 0; i < m; ++i)
      grid.push_back(std::exp(log_lo + (log_hi - log_lo) *
                                           static_cast<double>(i) /
                                           static_cast<double>(m - 1)));
  }
  return grid;
}

CalibrationChoice calibrate(const CalibrationTable& table,
                            const Target& target) {
  if (table.points.empty()) throw IntegrityError("calibrate: empty table");

  std::vector<const CalibrationPoint*> pareto;
  for (std::size_t i : table.pareto_indices) pareto.push_back(&table.points[i]);
  if (pareto.empty())
    for (const auto& p : table.points) pareto.push_back(&p);

  auto nearest_max_accuracy = [&]() {
    const CalibrationPoint* best = pareto[0];
    for (const auto* p : pareto)
      if (p->mean_accuracy > best->mean_accuracy ||
          (p->mean_accuracy == best->mean_accuracy &&
           p->mean_cost < best->mean_cost))
        best = p;
    return best;
  };
  auto nearest_min_cost = [&]() {
    const CalibrationPoint* best = pareto[0];
    for (const auto* p : pareto)
      if (p->mean_cost < best->mean_cost ||
          (p->mean_cost == best->mean_cost &&
           p->mean_accuracy > best->mean_accuracy))
        best = p;
    return best;
  };

  switch (target.kind) {
    case Target::Kind::kAccuracyFloor: {
      const CalibrationPoint* best = nullptr;
      for (const auto* p : pareto) {
        if (p->mean_accuracy < target.value) continue;
        if (!best || p->mean_cost < best->mean_cost ||
            (p->mean_cost == best->mean_cost &&
             (p->mean_accuracy > best->mean_accuracy ||
              (p->mean_accuracy == best->mean_accuracy &&
               p->lambda < best->lambda))))
          best = p;
      }
      if (!best) {
        const auto* near = nearest_max_accuracy();
        throw InfeasibleTargetError(
            "no operating point reaches accuracy " + std::to_string(target.value),
            near->lambda, near->mean_accuracy, near->mean_cost);
      }
      return {best->lambda, *best};
    }
    case Target::Kind::kCostBudget: {
      const CalibrationPoint* best = nullptr;
      for (const auto* p : pareto) {
        if (p->mean_cost > target.value) continue;
        if (!best || p->mean_accuracy > best->mean_accuracy ||
            (p->mean_accuracy == best->mean_accuracy &&
             (p->mean_cost < best->mean_cost ||
              (p->mean_cost == best->mean_cost && p->lambda < best->lambda))))
          best = p;
      }
      if (!best) {
        const auto* near = nearest_min_cost();
        throw InfeasibleTargetError(
            "no operating point fits budget " + std::to_string(target.value),
            near->lambda, near->mean_accuracy, near->mean_cost);
      }
      return {best->lambda, *best};
    }
    case Target::Kind::kLambda: {
      if (target.value < 0.0)
        throw Error("domain", "calibrate: negative lambda");
      const CalibrationPoint* closest = &table.points[0];
      for (const auto& p : table.points)
        if (std::abs(p.lambda - target.value) <
            std::abs(closest->lambda - target.value))
          closest = &p;
      return {target.value, *closest};
    }
  }
  throw Error("domain", "calibrate: bad target");
}

RoutingPolicy retarget(const RoutingPolicy& policy, double new_lambda) {
  if (new_lambda < 0.0) throw Error("domain", "retarget: negative lambda");
  RoutingPolicy next = policy;
  next.lambda = new_lambda;
  return next;
}

std::string calibration_to_csv(const CalibrationTable& table) {
  std::ostringstream out;
  out.precision(17);
  out << "lambda,mean_accuracy,mean_cost,pareto\n";
  std::vector<bool> is_pareto(table.points.size(), false);
  for (std::size_t i : table.pareto_indices) is_pareto[i] = true;
  for (std::size_t i = 0; i < table.points.size(); ++i) {
    const auto& p = table.points[i];
    out << p.lambda << ',' << p.mean_accuracy << ',' << p.mean_cost << ','
        << (is_pareto[i] ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace q2c
