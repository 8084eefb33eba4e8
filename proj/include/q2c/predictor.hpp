#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "q2c/featurize.hpp"
#include "q2c/trace.hpp"

namespace q2c {

enum class ModelFamily { kConstant, kLogistic, kTree, kBoostedTrees };

std::string family_name(ModelFamily family);
ModelFamily family_from_name(const std::string& name);

struct PredictorSpec {
  ModelFamily family = ModelFamily::kConstant;
  std::map<std::string, double> hyperparams;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1: leaf
  double threshold = 0.0;     // left if x[feature] <= threshold
  double value = 0.0;         // leaf payload
  std::int32_t left = -1;
  std::int32_t right = -1;
};

struct TreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
};

struct TrainingMeta {
  std::size_t n_train = 0;
  double inner_cv_logloss = 0.0;
  std::uint64_t seed = 0;
  bool degenerate_labels = false;
};

// One correctness predictor for one configuration. Flat parameter storage
// keeps serialization simple; only the fields of the active family are used.
struct TrainedPredictor {
  std::string config_id;
  PredictorSpec spec;
  std::size_t dim = 0;

  double constant_p = 0.5;                  // kConstant
  std::vector<double> weights;              // kLogistic
  double bias = 0.0;                        // kLogistic
  std::vector<TreeModel> trees;             // kTree (one) / kBoostedTrees
  double base_score = 0.0;                  // kBoostedTrees initial logit
  double learning_rate = 0.0;               // kBoostedTrees

  TrainingMeta meta;

  // Probability in [0, 1]; pure. Throws on dimension mismatch (constant
  // predictors accept any dimension).
  double predict(std::span<const double> fv) const;
};

// Mean cross-entropy of soft labels plus (l2_reg / 2) * ||w||^2 (bias
// unregularized), with the analytic gradient. Exposed so tests can check the
// gradient against finite differences. x is row-major n x d.
double logistic_loss_grad(std::span<const double> x, std::size_t d,
                          std::span<const double> y,
                          std::span<const double> w, double b, double l2_reg,
                          std::span<double> grad_w, double& grad_b);

// Mean log-loss of predictions p against labels y, with p clipped away from
// 0 and 1. The model-selection criterion.
double log_loss(std::span<const double> p, std::span<const double> y);

// Random hyperparameter search across the logistic / decision-tree / boosted
// family grids, scored by mean log-loss over stratified inner folds, with a
// Laplace-smoothed constant predictor as the incumbent; the winner is refit
// on all rows. Degenerate (single-valued) labels short-circuit to the
// constant predictor. Deterministic for a given seed.
TrainedPredictor train_predictor(const std::vector<std::vector<double>>& x,
                                 const std::vector<double>& y,
                                 std::size_t trials, std::size_t inner_folds,
                                 std::uint64_t seed);

// Inner-CV log-loss of the Laplace-constant predictor on the same stratified
// folds train_predictor uses for (y, inner_folds, seed). The selected model's
// meta.inner_cv_logloss never exceeds this value.
double constant_cv_logloss(const std::vector<double>& y,
                           std::size_t inner_folds, std::uint64_t seed);

struct PredictorBank {
  std::string schema_digest;
  std::map<std::string, TrainedPredictor> predictors;
  std::map<std::string, double> mean_costs;
};

struct TrainBankResult {
  PredictorBank bank;
  std::vector<std::string> skipped;  // retained configs with no observed cells
};

// Trains one predictor per retained config on that config's observed cells
// only. Per-config seeds derive from (seed, config_id), so adding or removing
// other configs never changes an existing predictor. Configs may train in
// parallel (parallelism 0 = hardware default).
TrainBankResult train_bank(const ProfilingTrace& trace,
                           const std::vector<FeatureVector>& vectors,
                           const std::string& schema_digest,
                           const std::vector<std::string>& retained,
                           std::size_t trials, std::size_t inner_folds,
                           std::uint64_t seed, std::size_t parallelism = 0);

}  // namespace q2c
