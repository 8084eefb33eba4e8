#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "q2c/featurize.hpp"
#include "q2c/predictor.hpp"
#include "q2c/trace.hpp"

namespace q2c {

// Immutable serving policy: predictor bank + per-config mean costs + the
// operating lambda. Retargeting produces a new policy sharing the bank.
struct RoutingPolicy {
  std::shared_ptr<const PredictorBank> bank;
  double lambda = 0.0;
  std::string tie_break = "cost_then_id";
  double characterization_cost_usd = 0.0012;
};

struct RouteDecision {
  std::string config_id;
  double score = 0.0;      // p_hat - lambda * mean_cost of the chosen config
  double p_hat = 0.0;
  double mean_cost = 0.0;
  std::optional<std::pair<std::string, double>> runner_up;  // (id, score)
};

// Precomputed p_hat per (query, config); lets sweeps re-score a lambda grid
// without re-running predictors, and lets tests replay published per-query
// accuracies directly.
struct ScoreMatrix {
  std::vector<std::string> config_ids;  // ascending
  std::vector<double> mean_costs;       // aligned with config_ids
  std::vector<std::string> query_ids;
  std::vector<double> p_hat;  // row-major [query][config]

  std::span<const double> row(std::size_t q) const {
    return {p_hat.data() + q * config_ids.size(), config_ids.size()};
  }
};

ScoreMatrix score_with_bank(const PredictorBank& bank,
                            const std::vector<FeatureVector>& vectors);

// Index of argmax of p_hat[i] - lambda * cost[i]. Scores within 1e-12 of the
// maximum tie; ties break to lower cost, then lexicographic id.
std::size_t select_config(std::span<const double> p_hat,
                          std::span<const double> costs,
                          std::span<const std::string> ids, double lambda);

RouteDecision route(const RoutingPolicy& policy, const FeatureVector& fv);

struct CalibrationPoint {
  double lambda = 0.0;
  double mean_accuracy = 0.0;
  double mean_cost = 0.0;  // includes the per-query characterization cost
  std::size_t fallback_cells = 0;  // routed cells missing from the truth table
};

struct CalibrationTable {
  std::vector<CalibrationPoint> points;        // lambda ascending
  std::vector<std::size_t> pareto_indices;     // non-dominated (cost, accuracy)
};

struct CellOutcome {
  double correct = 0.0;
  double cost_usd = 0.0;
};

// (query_id, config_id) -> realized outcome.
using TruthTable = std::map<std::pair<std::string, std::string>, CellOutcome>;

// Per-config (mean correctness, mean cost) used when a routed cell is absent
// from the truth table.
using FallbackMeans = std::map<std::string, std::pair<double, double>>;

// Routes every query at each lambda in the grid and records realized mean
// accuracy and mean cost (plus characterization cost per query) from the
// truth table. Missing cells fall back to the config's observed means and
// are counted in fallback_cells.
CalibrationTable sweep_lambda(const ScoreMatrix& matrix,
                              const TruthTable& truth,
                              const std::vector<double>& grid,
                              double characterization_cost_usd = 0.0,
                              const FallbackMeans* fallback = nullptr);

CalibrationTable sweep_lambda(const PredictorBank& bank,
                              const std::vector<FeatureVector>& vectors,
                              const TruthTable& truth,
                              const std::vector<double>& grid,
                              double characterization_cost_usd = 0.0);

// {0} followed by size-1 log-spaced values spanning [1e-6/m, 1e3/m] where m
// is the median per-config mean cost.
std::vector<double> default_lambda_grid(const std::vector<ConfigStats>& stats,
                                        std::size_t size = 201);

struct Target {
  enum class Kind { kAccuracyFloor, kCostBudget, kLambda };
  Kind kind = Kind::kLambda;
  double value = 0.0;

  static Target accuracy_floor(double a) {
    return {Kind::kAccuracyFloor, a};
  }
  static Target cost_budget(double b) { return {Kind::kCostBudget, b}; }
  static Target lambda(double l) { return {Kind::kLambda, l}; }
};

struct CalibrationChoice {
  double lambda = 0.0;
  CalibrationPoint point;
};

// Accuracy floor A: the cheapest Pareto point with accuracy >= A.
// Cost budget B: the most accurate Pareto point with cost <= B.
// Lambda: passthrough (point is the nearest swept lambda, for reporting).
// Throws InfeasibleTargetError carrying the nearest achievable point.
CalibrationChoice calibrate(const CalibrationTable& table, const Target& target);

RoutingPolicy retarget(const RoutingPolicy& policy, double new_lambda);

// Tabular export: lambda, mean_accuracy, mean_cost, pareto flag.
std::string calibration_to_csv(const CalibrationTable& table);

}  // namespace q2c
