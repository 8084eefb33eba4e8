#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "q2c/featurize.hpp"
#include "q2c/pareto.hpp"
#include "q2c/router.hpp"
#include "q2c/trace.hpp"

namespace q2c {

struct EvalOptions {
  std::size_t folds = 5;
  std::size_t trials = 30;
  std::size_t inner_folds = 3;
  PruneParams prune;
  std::vector<double> grid;    // empty: default grid from full-trace stats
  std::size_t grid_size = 201;
  std::uint64_t seed = 1;
  double characterization_cost_usd = 0.0012;
  std::size_t min_cells = 1;
  std::size_t parallelism = 0;  // per-config training workers, 0 = auto
};

struct HoldoutPoint {
  double lambda = 0.0;
  double accuracy = 0.0;
  double cost = 0.0;  // includes characterization cost
};

struct FoldResult {
  std::size_t fold_index = 0;
  std::vector<std::string> holdout_ids;
  CalibrationTable calibration;              // swept on the train split
  std::vector<HoldoutPoint> holdout_curve;   // same grid, replayed on holdout
  std::vector<std::string> config_ids;       // retained configs (bank order)
  // decisions[g][q]: index into config_ids chosen for holdout_ids[q] at grid
  // point g.
  std::vector<std::vector<std::uint32_t>> decisions;
};

// Per fold: prune on train-split stats, train a bank on the train split,
// sweep the lambda grid on the train split, then replay every grid point on
// the holdout with realized costs plus characterization cost.
std::vector<FoldResult> outer_cv_evaluate(const ProfilingTrace& trace,
                                          const std::vector<FeatureVector>& vectors,
                                          const CharacteristicSchema& schema,
                                          const EvalOptions& options);

struct StaticPoint {
  std::string config_id;
  double accuracy = 0.0;
  double cost = 0.0;
};

// Fold-averaged holdout (accuracy, cost) per static config: per-fold means
// over that fold's holdout cells, averaged across the folds where the config
// is observed.
std::vector<StaticPoint> static_holdout_stats(
    const ProfilingTrace& trace,
    const std::vector<std::vector<std::string>>& folds);

// Holdout curve averaged across folds, point by point on the shared grid.
std::vector<HoldoutPoint> fold_averaged_curve(const std::vector<FoldResult>& folds);

struct GoalReport {
  enum class Kind { kMatchedAccuracy, kBudgetFraction };
  enum class Outcome { kSaving, kCostMultiple, kNotAchievable };

  Kind kind = Kind::kMatchedAccuracy;
  double goal_value = 1.0;  // accuracy ratio r, or budget fraction b

  double accuracy_floor = 0.0;  // matched-accuracy goals
  double cost_budget = 0.0;     // budget goals

  std::string baseline_config;
  double baseline_accuracy = 0.0;
  double baseline_cost = 0.0;

  // "oracle-lambda" row: the best fold-averaged holdout point for the goal.
  bool has_routed = false;
  double routed_lambda = 0.0;
  double routed_accuracy = 0.0;
  double routed_cost = 0.0;

  Outcome outcome = Outcome::kNotAchievable;
  double outcome_value = 0.0;  // saving % or cost multiple

  // "calibrated" row: lambda resolved per fold on the train-split
  // calibration table, then measured on that fold's holdout and averaged.
  // Only present when folds carry their calibration tables.
  bool has_calibrated = false;
  double calibrated_accuracy = 0.0;
  double calibrated_cost = 0.0;
  double calibrated_accuracy_std = 0.0;
  double calibrated_cost_std = 0.0;
  Outcome calibrated_outcome = Outcome::kNotAchievable;
  double calibrated_outcome_value = 0.0;
};

// Floor = r x best static holdout accuracy. Baseline: cheapest static config
// reaching the floor. Routed: cheapest fold-averaged operating point
// reaching the floor; n/a when none does.
GoalReport matched_accuracy_metric(const std::vector<FoldResult>& folds,
                                   const std::vector<StaticPoint>& static_stats,
                                   double ratio);

// Budget = b x the most accurate static config's holdout cost. Routed: the
// most accurate fold-averaged point within budget; n/a when none fits.
GoalReport budget_goal_metric(const std::vector<FoldResult>& folds,
                              const std::vector<StaticPoint>& static_stats,
                              double fraction = 0.5);

struct SyntheticWorkloadSpec {
  std::size_t n_queries = 2000;
  std::size_t n_configs = 12;
  std::size_t n_features = 10;
  double weight_scale = 2.0;       // per-config logistic weights ~ N(0, scale)
  double bias_scale = 0.5;
  double cost_log_min = 1e-4;      // per-config base cost ~ LogUniform
  double cost_log_max = 1.0;
  double cost_jitter = 0.0;        // per-cell lognormal sigma
  bool deterministic_correctness = false;  // threshold instead of Bernoulli
  std::uint64_t seed = 0;
};

struct SyntheticWorkload {
  ProfilingTrace trace;
  std::vector<FeatureVector> vectors;
  CharacteristicSchema schema;
  nlohmann::json oracle;  // ground-truth weights, biases, base costs
};

// Bernoulli(logistic(w . f + b)) correctness over random binary features,
// log-uniform per-config costs. Deterministic for a given spec.
SyntheticWorkload generate_synthetic_workload(const SyntheticWorkloadSpec& spec);

// Writes report.json (per-goal outcomes with per-fold mean and 1-sigma at the
// selected operating point) and plot_data.csv (series, config_id_or_lambda,
// mean_cost, mean_accuracy).
void emit_report(const std::vector<GoalReport>& reports,
                 const std::vector<FoldResult>& folds,
                 const std::vector<StaticPoint>& static_stats,
                 const std::string& out_dir);

nlohmann::json goal_report_to_json(const GoalReport& report);
std::string outcome_to_string(const GoalReport& report);

// Round-trip of fold curves so `report` can re-derive goals without
// re-training.
nlohmann::json fold_results_to_json(const std::vector<FoldResult>& folds,
                                    const std::vector<StaticPoint>& static_stats);
void fold_results_from_json(const nlohmann::json& j,
                            std::vector<FoldResult>& folds,
                            std::vector<StaticPoint>& static_stats);

}  // namespace q2c
