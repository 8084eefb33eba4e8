#include "q2c/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "q2c/digest.hpp"
#include "q2c/errors.hpp"
#include "q2c/rng.hpp"

namespace q2c {

namespace {

constexpr double kProbClip = 1e-6;      // boosted-tree probability clipping
constexpr double kLossClip = 1e-15;     // log-loss evaluation clipping
constexpr double kGainTol = 1e-12;      // minimum split gain
constexpr double kGradTol = 1e-8;       // logistic convergence on ||grad||
constexpr int kMaxBins = 64;
constexpr int kNewtonMaxDim = 200;      // larger problems use gradient descent

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> x;  // row-major n*d
  std::vector<double> y;

  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * d, d};
  }
};

// Per-feature bin codes over midpoint thresholds; at most kMaxBins bins per
// feature (quantile cuts beyond that). Trees split on bin boundaries, so one
// pass per node per feature suffices.
struct BinnedData {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<std::vector<double>> thresholds;  // ascending per feature
  std::vector<std::uint8_t> codes;              // n*d, code = #thresholds < x
};

BinnedData bin_features(const Dataset& data) {
  BinnedData b;
  b.n = data.n;
  b.d = data.d;
  b.thresholds.resize(data.d);
  b.codes.assign(data.n * data.d, 0);

  std::vector<double> col(data.n);
  for (std::size_t j = 0; j < data.d; ++j) {
    for (std::size_t i = 0; i < data.n; ++i) col[i] = data.x[i * data.d + j];
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());

    auto& thr = b.thresholds[j];
    if (col.size() <= 1) {
      // constant feature: no thresholds
    } else if (col.size() <= kMaxBins) {
      thr.reserve(col.size() - 1);
      for (std::size_t t = 1; t < col.size(); ++t)
        thr.push_back(0.5 * (col[t - 1] + col[t]));
    } else {
      for (int t = 1; t < kMaxBins; ++t) {
        const std::size_t idx = t * col.size() / kMaxBins;
        const double cut = 0.5 * (col[idx - 1] + col[idx]);
        if (thr.empty() || cut > thr.back()) thr.push_back(cut);
      }
    }
    for (std::size_t i = 0; i < data.n; ++i) {
      const double v = data.x[i * data.d + j];
      const auto it = std::lower_bound(thr.begin(), thr.end(), v);
      b.codes[i * data.d + j] =
          static_cast<std::uint8_t>(std::distance(thr.begin(), it));
    }
  }
  return b;
}

enum class SplitCrit { kGini, kGradient };

struct BuildParams {
  SplitCrit crit = SplitCrit::kGini;
  int max_depth = 3;
  std::size_t min_leaf = 1;
  double hess_reg = 1.0;  // gradient criterion only
};

// Histogram CART over binned features. Per-row stats (v0, v1):
//   gini:     v0 = label,    v1 unused; leaf = mean label
//   gradient: v0 = gradient, v1 = hessian; leaf = -G / (H + reg)
class TreeBuilder {
public:
  TreeBuilder(const BinnedData& bins, BuildParams params)
      : bins_(bins), params_(params) {}

  TreeModel fit(std::vector<std::uint32_t> rows, std::span<const double> v0,
                std::span<const double> v1) {
    TreeModel tree;
    v0_ = v0;
    v1_ = v1;
    idx_ = std::move(rows);
    build(tree, 0, idx_.size(), 0);
    return tree;
  }

private:
  struct Acc {
    double cnt = 0, s0 = 0, s1 = 0;
  };

  double leaf_value(const Acc& a) const {
    if (params_.crit == SplitCrit::kGini)
      return a.cnt > 0 ? a.s0 / a.cnt : 0.0;
    return -a.s0 / (a.s1 + params_.hess_reg);
  }

  // Weighted impurity (gini) or split score (gradient); both formulated so
  // that gain = parent - left - right (gini) flips sign for gradient.
  double gini_w(const Acc& a) const {
    return a.cnt > 0 ? 2.0 * a.s0 * (a.cnt - a.s0) / a.cnt : 0.0;
  }
  double grad_score(const Acc& a) const {
    return a.s0 * a.s0 / (a.s1 + params_.hess_reg);
  }

  int build(TreeModel& tree, std::size_t lo, std::size_t hi, int depth) {
    Acc total;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint32_t r = idx_[i];
      total.cnt += 1.0;
      total.s0 += v0_[r];
      total.s1 += v1_[r];
    }

    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{-1, 0.0, leaf_value(total), -1, -1});

    if (depth >= params_.max_depth || total.cnt < 2.0 * params_.min_leaf)
      return node_id;

    double best_gain = kGainTol;
    std::size_t best_feature = 0;
    int best_bin = -1;
    for (std::size_t j = 0; j < bins_.d; ++j) {
      const auto& thr = bins_.thresholds[j];
      if (thr.empty()) continue;
      hist_.assign(thr.size() + 1, Acc{});
      for (std::size_t i = lo; i < hi; ++i) {
        const std::uint32_t r = idx_[i];
        Acc& a = hist_[bins_.codes[r * bins_.d + j]];
        a.cnt += 1.0;
        a.s0 += v0_[r];
        a.s1 += v1_[r];
      }
      Acc left;
      for (std::size_t k = 0; k + 1 < hist_.size(); ++k) {
        left.cnt += hist_[k].cnt;
        left.s0 += hist_[k].s0;
        left.s1 += hist_[k].s1;
        const Acc right{total.cnt - left.cnt, total.s0 - left.s0,
                        total.s1 - left.s1};
        if (left.cnt < params_.min_leaf || right.cnt < params_.min_leaf)
          continue;
        double gain;
        if (params_.crit == SplitCrit::kGini)
          gain = gini_w(total) - gini_w(left) - gini_w(right);
        else
          gain = grad_score(left) + grad_score(right) - grad_score(total);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = j;
          best_bin = static_cast<int>(k);
        }
      }
    }
    if (best_bin < 0) return node_id;

    const auto mid = std::partition(
        idx_.begin() + static_cast<std::ptrdiff_t>(lo),
        idx_.begin() + static_cast<std::ptrdiff_t>(hi),
        [&](std::uint32_t r) {
          return bins_.codes[r * bins_.d + best_feature] <=
                 static_cast<std::uint8_t>(best_bin);
        });
    const std::size_t split =
        static_cast<std::size_t>(mid - idx_.begin());
    if (split == lo || split == hi) return node_id;  // degenerate partition

    const int left_id = build(tree, lo, split, depth + 1);
    const int right_id = build(tree, split, hi, depth + 1);
    TreeNode& node = tree.nodes[node_id];
    node.feature = static_cast<std::int32_t>(best_feature);
    node.threshold = bins_.thresholds[best_feature][best_bin];
    node.left = left_id;
    node.right = right_id;
    return node_id;
  }

  const BinnedData& bins_;
  BuildParams params_;
  std::span<const double> v0_;
  std::span<const double> v1_;
  std::vector<std::uint32_t> idx_;
  std::vector<Acc> hist_;
};

// --- logistic regression ---------------------------------------------------

// Dense symmetric solve via Cholesky; returns false if not positive definite.
bool cholesky_solve(std::vector<double>& a, std::size_t m,
                    std::vector<double>& rhs) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i * m + j];
      for (std::size_t k = 0; k < j; ++k) sum -= a[i * m + k] * a[j * m + k];
      if (i == j) {
        if (sum <= 0.0) return false;
        a[i * m + i] = std::sqrt(sum);
      } else {
        a[i * m + j] = sum / a[j * m + j];
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    double sum = rhs[i];
    for (std::size_t k = 0; k < i; ++k) sum -= a[i * m + k] * rhs[k];
    rhs[i] = sum / a[i * m + i];
  }
  for (std::size_t ii = m; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double sum = rhs[i];
    for (std::size_t k = i + 1; k < m; ++k) sum -= a[k * m + i] * rhs[k];
    rhs[i] = sum / a[i * m + i];
  }
  return true;
}

double logistic_objective(std::span<const double> x, std::size_t d,
                          std::span<const double> y,
                          std::span<const double> w, double b, double l2_reg) {
  const std::size_t n = y.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    const double* xi = x.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * xi[j];
    // Stable -y*log(sigma) - (1-y)*log(1-sigma) = log(1+e^-|z|) + max(z,0) - y*z
    loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y[i] * z;
  }
  loss /= static_cast<double>(n);
  double reg = 0.0;
  for (std::size_t j = 0; j < d; ++j) reg += w[j] * w[j];
  return loss + 0.5 * l2_reg * reg;
}

void fit_logistic(const Dataset& data, double l2_reg, std::vector<double>& w,
                  double& b) {
  const std::size_t n = data.n;
  const std::size_t d = data.d;
  w.assign(d, 0.0);
  b = 0.0;

  std::vector<double> grad_w(d), p(n), direction(d + 1);
  const bool use_newton = d <= kNewtonMaxDim;
  std::vector<double> hess(use_newton ? (d + 1) * (d + 1) : 0);

  double loss = logistic_objective(data.x, d, data.y, w, b, l2_reg);
  for (int iter = 0; iter < 1000; ++iter) {
    double grad_b = 0.0;
    logistic_loss_grad(data.x, d, data.y, w, b, l2_reg, grad_w, grad_b);
    double gnorm = grad_b * grad_b;
    for (double g : grad_w) gnorm += g * g;
    if (std::sqrt(gnorm) <= kGradTol) break;

    if (use_newton) {
      for (std::size_t i = 0; i < n; ++i) {
        double z = b;
        const double* xi = data.x.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * xi[j];
        const double s = sigmoid(z);
        p[i] = std::max(s * (1.0 - s), 1e-12);
      }
      const std::size_t m = d + 1;
      std::fill(hess.begin(), hess.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double* xi = data.x.data() + i * d;
        const double si = p[i];
        for (std::size_t j = 0; j < d; ++j) {
          const double sx = si * xi[j];
          for (std::size_t k = 0; k <= j; ++k) hess[j * m + k] += sx * xi[k];
          hess[d * m + j] += sx;
        }
        hess[d * m + d] += si;
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (auto& h : hess) h *= inv_n;
      for (std::size_t j = 0; j < d; ++j) hess[j * m + j] += l2_reg;
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = j + 1; k < m; ++k) hess[j * m + k] = hess[k * m + j];

      std::vector<double> rhs(m);
      for (std::size_t j = 0; j < d; ++j) rhs[j] = -grad_w[j];
      rhs[d] = -grad_b;

      // Levenberg damping until the system factors.
      double mu = 0.0;
      std::vector<double> h_try;
      std::vector<double> sol;
      for (;;) {
        h_try = hess;
        if (mu > 0.0)
          for (std::size_t j = 0; j < m; ++j) h_try[j * m + j] += mu;
        sol = rhs;
        if (cholesky_solve(h_try, m, sol)) break;
        mu = (mu == 0.0) ? 1e-10 : mu * 10.0;
        if (mu > 1e6) {  // fall back to steepest descent
          sol = rhs;
          break;
        }
      }
      std::copy(sol.begin(), sol.end(), direction.begin());
    } else {
      for (std::size_t j = 0; j < d; ++j) direction[j] = -grad_w[j];
      direction[d] = -grad_b;
    }

    double dot = direction[d] * grad_b;
    for (std::size_t j = 0; j < d; ++j) dot += direction[j] * grad_w[j];
    if (dot >= 0.0) {  // not a descent direction; use the gradient
      for (std::size_t j = 0; j < d; ++j) direction[j] = -grad_w[j];
      direction[d] = -grad_b;
      dot = -gnorm;
    }

    // Armijo backtracking.
    double step = 1.0;
    bool moved = false;
    std::vector<double> w_try(d);
    for (int ls = 0; ls < 50; ++ls) {
      for (std::size_t j = 0; j < d; ++j) w_try[j] = w[j] + step * direction[j];
      const double b_try = b + step * direction[d];
      const double loss_try =
          logistic_objective(data.x, d, data.y, w_try, b_try, l2_reg);
      if (loss_try <= loss + 1e-4 * step * dot) {
        w = w_try;
        b = b_try;
        loss = loss_try;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
}

// --- model fitting dispatch --------------------------------------------------

double get_param(const PredictorSpec& spec, const char* name) {
  auto it = spec.hyperparams.find(name);
  if (it == spec.hyperparams.end())
    throw IntegrityError(std::string("missing hyperparameter ") + name);
  return it->second;
}

TrainedPredictor fit_constant(std::span<const double> y) {
  TrainedPredictor p;
  p.spec.family = ModelFamily::kConstant;
  double sum = 0.0;
  for (double v : y) sum += v;
  p.constant_p = (sum + 1.0) / (static_cast<double>(y.size()) + 2.0);
  p.dim = 0;
  return p;
}

Dataset subset(const Dataset& data, std::span<const std::uint32_t> rows) {
  Dataset s;
  s.n = rows.size();
  s.d = data.d;
  s.x.resize(s.n * s.d);
  s.y.resize(s.n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(s.x.data() + i * s.d, data.x.data() + rows[i] * data.d,
                s.d * sizeof(double));
    s.y[i] = data.y[rows[i]];
  }
  return s;
}

TrainedPredictor fit_spec(const PredictorSpec& spec, const Dataset& data,
                          const BinnedData& bins,
                          std::span<const std::uint32_t> rows) {
  TrainedPredictor model;
  model.spec = spec;
  model.dim = data.d;

  switch (spec.family) {
    case ModelFamily::kConstant: {
      std::vector<double> y;
      y.reserve(rows.size());
      for (auto r : rows) y.push_back(data.y[r]);
      model = fit_constant(y);
      model.dim = 0;
      break;
    }
    case ModelFamily::kLogistic: {
      const Dataset sub = subset(data, rows);
      fit_logistic(sub, get_param(spec, "l2_reg"), model.weights, model.bias);
      break;
    }
    case ModelFamily::kTree: {
      BuildParams params;
      params.crit = SplitCrit::kGini;
      params.max_depth = static_cast<int>(get_param(spec, "max_depth"));
      params.min_leaf = static_cast<std::size_t>(get_param(spec, "min_leaf"));
      TreeBuilder builder(bins, params);
      std::vector<std::uint32_t> idx(rows.begin(), rows.end());
      model.trees.push_back(builder.fit(std::move(idx), data.y, data.y));
      break;
    }
    case ModelFamily::kBoostedTrees: {
      const int depth = static_cast<int>(get_param(spec, "max_depth"));
      const int n_trees = static_cast<int>(get_param(spec, "n_trees"));
      const double lr = get_param(spec, "learning_rate");
      model.learning_rate = lr;

      double mean_y = 0.0;
      for (auto r : rows) mean_y += data.y[r];
      mean_y /= static_cast<double>(rows.size());
      mean_y = std::clamp(mean_y, kProbClip, 1.0 - kProbClip);
      model.base_score = std::log(mean_y / (1.0 - mean_y));

      BuildParams params;
      params.crit = SplitCrit::kGradient;
      params.max_depth = depth;
      params.min_leaf = 1;
      TreeBuilder builder(bins, params);

      std::vector<double> f(data.n, 0.0), g(data.n, 0.0), h(data.n, 0.0);
      for (auto r : rows) f[r] = model.base_score;
      std::vector<std::uint32_t> idx(rows.begin(), rows.end());
      for (int m = 0; m < n_trees; ++m) {
        for (auto r : rows) {
          const double p = sigmoid(f[r]);
          g[r] = p - data.y[r];
          h[r] = std::max(p * (1.0 - p), 1e-12);
        }
        TreeModel tree = builder.fit(idx, g, h);
        for (auto r : rows) f[r] += lr * tree.predict(data.row(r));
        model.trees.push_back(std::move(tree));
      }
      break;
    }
  }
  return model;
}

std::vector<int> stratified_assignment(const std::vector<double>& y,
                                       std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i)
    (y[i] >= 0.5 ? pos : neg).push_back(i);
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<int> assign(y.size(), 0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < pos.size(); ++i, ++next)
    assign[pos[i]] = static_cast<int>(next % k);
  for (std::size_t i = 0; i < neg.size(); ++i, ++next)
    assign[neg[i]] = static_cast<int>(next % k);
  return assign;
}

double cv_logloss(const PredictorSpec& spec, const Dataset& data,
                  const BinnedData& bins, const std::vector<int>& assign,
                  std::size_t k) {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::uint32_t> train_rows;
    std::vector<std::uint32_t> val_rows;
    for (std::size_t i = 0; i < data.n; ++i)
      (assign[i] == static_cast<int>(f) ? val_rows : train_rows)
          .push_back(static_cast<std::uint32_t>(i));
    if (val_rows.empty() || train_rows.empty()) continue;
    const TrainedPredictor model = fit_spec(spec, data, bins, train_rows);
    std::vector<double> p, yv;
    p.reserve(val_rows.size());
    yv.reserve(val_rows.size());
    for (auto r : val_rows) {
      p.push_back(model.predict(data.row(r)));
      yv.push_back(data.y[r]);
    }
    total += log_loss(p, yv);
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted)
                     : std::numeric_limits<double>::infinity();
}

PredictorSpec draw_spec(Rng& rng) {
  static const double kLogisticReg[] = {0.01, 0.1, 1.0, 10.0};
  static const double kTreeDepth[] = {2, 3, 5, 8};
  static const double kTreeMinLeaf[] = {2, 5, 10};
  static const double kGbtDepth[] = {1, 2, 3};
  static const double kGbtTrees[] = {50, 100, 200};
  static const double kGbtLr[] = {0.1, 0.3};

  PredictorSpec spec;
  switch (rng.uniform_index(3)) {
    case 0:
      spec.family = ModelFamily::kLogistic;
      spec.hyperparams["l2_reg"] = kLogisticReg[rng.uniform_index(4)];
      break;
    case 1:
      spec.family = ModelFamily::kTree;
      spec.hyperparams["max_depth"] = kTreeDepth[rng.uniform_index(4)];
      spec.hyperparams["min_leaf"] = kTreeMinLeaf[rng.uniform_index(3)];
      break;
    default:
      spec.family = ModelFamily::kBoostedTrees;
      spec.hyperparams["max_depth"] = kGbtDepth[rng.uniform_index(3)];
      spec.hyperparams["n_trees"] = kGbtTrees[rng.uniform_index(3)];
      spec.hyperparams["learning_rate"] = kGbtLr[rng.uniform_index(2)];
      break;
  }
  return spec;
}

}  // namespace

std::string family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::kConstant: return "constant";
    case ModelFamily::kLogistic: return "logistic-regression";
    case ModelFamily::kTree: return "decision-tree";
    case ModelFamily::kBoostedTrees: return "gradient-boosted-trees";
  }
  return "unknown";
}

ModelFamily family_from_name(const std::string& name) {
  if (name == "constant") return ModelFamily::kConstant;
  if (name == "logistic-regression") return ModelFamily::kLogistic;
  if (name == "decision-tree") return ModelFamily::kTree;
  if (name == "gradient-boosted-trees") return ModelFamily::kBoostedTrees;
  throw ParseError("unknown model family \"" + name + "\"");
}

double TreeModel::predict(std::span<const double> x) const {
  const TreeNode* node = &nodes[0];
  while (node->feature >= 0) {
    node = x[static_cast<std::size_t>(node->feature)] <= node->threshold
               ? &nodes[static_cast<std::size_t>(node->left)]
               : &nodes[static_cast<std::size_t>(node->right)];
  }
  return node->value;
}

double TrainedPredictor::predict(std::span<const double> fv) const {
  if (spec.family != ModelFamily::kConstant && fv.size() != dim)
    throw Error("domain", "feature vector has dimension " +
                              std::to_string(fv.size()) + ", predictor needs " +
                              std::to_string(dim));
  switch (spec.family) {
    case ModelFamily::kConstant:
      return constant_p;
    case ModelFamily::kLogistic: {
      double z = bias;
      for (std::size_t j = 0; j < dim; ++j) z += weights[j] * fv[j];
      return sigmoid(z);
    }
    case ModelFamily::kTree:
      return trees[0].predict(fv);
    case ModelFamily::kBoostedTrees: {
      double f = base_score;
      for (const auto& tree : trees) f += learning_rate * tree.predict(fv);
      return std::clamp(sigmoid(f), kProbClip, 1.0 - kProbClip);
    }
  }
  return 0.5;
}

double logistic_loss_grad(std::span<const double> x, std::size_t d,
                          std::span<const double> y,
                          std::span<const double> w, double b, double l2_reg,
                          std::span<double> grad_w, double& grad_b) {
  const std::size_t n = y.size();
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    const double* xi = x.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * xi[j];
    loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y[i] * z;
    const double r = sigmoid(z) - y[i];
    for (std::size_t j = 0; j < d; ++j) grad_w[j] += r * xi[j];
    grad_b += r;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  grad_b *= inv_n;
  double reg = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    grad_w[j] = grad_w[j] * inv_n + l2_reg * w[j];
    reg += w[j] * w[j];
  }
  return loss + 0.5 * l2_reg * reg;
}

double log_loss(std::span<const double> p, std::span<const double> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::clamp(p[i], kLossClip, 1.0 - kLossClip);
    total += -(y[i] * std::log(pi) + (1.0 - y[i]) * std::log1p(-pi));
  }
  return total / static_cast<double>(p.size());
}

double constant_cv_logloss(const std::vector<double>& y,
                           std::size_t inner_folds, std::uint64_t seed) {
  if (inner_folds < 2 || y.size() < inner_folds)
    throw IntegrityError("constant_cv_logloss: bad fold configuration");
  const auto assign =
      stratified_assignment(y, inner_folds, derive_seed(seed, "inner-folds"));
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t f = 0; f < inner_folds; ++f) {
    double train_sum = 0.0, train_n = 0.0;
    std::vector<double> val;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (assign[i] == static_cast<int>(f)) {
        val.push_back(y[i]);
      } else {
        train_sum += y[i];
        train_n += 1.0;
      }
    }
    if (val.empty() || train_n == 0.0) continue;
    const double p = (train_sum + 1.0) / (train_n + 2.0);
    const std::vector<double> preds(val.size(), p);
    total += log_loss(preds, val);
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted)
                     : std::numeric_limits<double>::infinity();
}

TrainedPredictor train_predictor(const std::vector<std::vector<double>>& x,
                                 const std::vector<double>& y,
                                 std::size_t trials, std::size_t inner_folds,
                                 std::uint64_t seed) {
  if (x.size() != y.size())
    throw IntegrityError("train_predictor: feature/label count mismatch");
  if (inner_folds < 2) throw IntegrityError("train_predictor: inner_folds < 2");
  if (x.size() < inner_folds)
    throw IntegrityError("train_predictor: fewer rows than inner folds");
  if (trials < 1) throw IntegrityError("train_predictor: trials < 1");

  Dataset data;
  data.n = x.size();
  data.d = x[0].size();
  data.x.reserve(data.n * data.d);
  for (const auto& row : x) {
    if (row.size() != data.d)
      throw IntegrityError("train_predictor: ragged feature rows");
    data.x.insert(data.x.end(), row.begin(), row.end());
  }
  for (double v : y)
    if (v < 0.0 || v > 1.0)
      throw IntegrityError("train_predictor: label outside [0,1]");
  data.y = y;

  const BinnedData bins = bin_features(data);
  const auto assign =
      stratified_assignment(data.y, inner_folds, derive_seed(seed, "inner-folds"));

  const PredictorSpec constant_spec{ModelFamily::kConstant, {}};
  const double constant_loss =
      cv_logloss(constant_spec, data, bins, assign, inner_folds);

  const bool degenerate =
      std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });

  PredictorSpec best_spec = constant_spec;
  double best_loss = constant_loss;
  if (!degenerate) {
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(derive_seed(seed, "trial:" + std::to_string(t)));
      const PredictorSpec spec = draw_spec(rng);
      const double loss = cv_logloss(spec, data, bins, assign, inner_folds);
      if (std::isfinite(loss) && loss < best_loss) {
        best_loss = loss;
        best_spec = spec;
      }
    }
  }

  std::vector<std::uint32_t> all_rows(data.n);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  TrainedPredictor model = fit_spec(best_spec, data, bins, all_rows);
  model.meta.n_train = data.n;
  model.meta.inner_cv_logloss = best_loss;
  model.meta.seed = seed;
  model.meta.degenerate_labels = degenerate;
  return model;
}

TrainBankResult train_bank(const ProfilingTrace& trace,
                           const std::vector<FeatureVector>& vectors,
                           const std::string& schema_digest,
                           const std::vector<std::string>& retained,
                           std::size_t trials, std::size_t inner_folds,
                           std::uint64_t seed, std::size_t parallelism) {
  if (retained.empty()) throw IntegrityError("train_bank: empty retained set");
  for (const auto& cid : retained)
    if (!trace.has_config(cid))
      throw IntegrityError("train_bank: retained config \"" + cid +
                           "\" not in trace");

  std::unordered_map<std::string, const FeatureVector*> by_query;
  for (const auto& v : vectors) by_query[v.query_id] = &v;

  struct Task {
    std::string config_id;
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    double mean_cost = 0.0;
  };
  std::vector<Task> tasks;
  TrainBankResult result;
  result.bank.schema_digest = schema_digest;

  for (const auto& cid : retained) {
    const auto cells = trace.cells_for_config(cid);
    if (cells.empty()) {
      result.skipped.push_back(cid);
      continue;
    }
    Task task;
    task.config_id = cid;
    double cost_sum = 0.0;
    for (const auto* cell : cells) {
      auto it = by_query.find(cell->query_id);
      if (it == by_query.end())
        throw IntegrityError("train_bank: no feature vector for query \"" +
                             cell->query_id + "\"");
      task.x.push_back(it->second->values);
      task.y.push_back(cell->correct);
      cost_sum += cell->cost_usd;
    }
    task.mean_cost = cost_sum / static_cast<double>(cells.size());
    tasks.push_back(std::move(task));
  }
  if (tasks.empty())
    throw IntegrityError("train_bank: no retained config has observed cells");

  std::vector<TrainedPredictor> trained(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto& task = tasks[i];
      try {
        TrainedPredictor p =
            train_predictor(task.x, task.y, trials, inner_folds,
                            derive_seed(seed, "predictor:" + task.config_id));
        p.config_id = task.config_id;
        trained[i] = std::move(p);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  std::size_t n_workers = parallelism;
  if (n_workers == 0)
    n_workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  n_workers = std::min(n_workers, tasks.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw IntegrityError("train_bank: config \"" + tasks[i].config_id +
                           "\": " + e.what());
    }
  }

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    result.bank.mean_costs[tasks[i].config_id] = tasks[i].mean_cost;
    result.bank.predictors[tasks[i].config_id] = std::move(trained[i]);
  }
  return result;
}

}  // namespace q2c
