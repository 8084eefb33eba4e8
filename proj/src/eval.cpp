#include "q2c/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "q2c/artifact.hpp"
#include "q2c/digest.hpp"
#include "q2c/errors.hpp"
#include "q2c/predictor.hpp"
#include "q2c/rng.hpp"

namespace q2c {

namespace {

TruthTable truth_from_cells(const ProfilingTrace& trace,
                            const std::unordered_set<std::string>& query_ids) {
  TruthTable truth;
  for (const auto& cell : trace.cells())
    if (query_ids.count(cell.query_id))
      truth[{cell.query_id, cell.config_id}] = {cell.correct, cell.cost_usd};
  return truth;
}

std::vector<ConfigStats> stats_from_truth(const TruthTable& truth,
                                          std::size_t min_cells) {
  std::map<std::string, std::pair<double, std::pair<double, double>>> acc;
  for (const auto& [key, outcome] : truth) {
    auto& slot = acc[key.second];
    slot.first += 1.0;
    slot.second.first += outcome.correct;
    slot.second.second += outcome.cost_usd;
  }
  std::vector<ConfigStats> stats;
  for (const auto& [cid, slot] : acc) {
    if (slot.first < static_cast<double>(min_cells)) continue;
    ConfigStats s;
    s.config_id = cid;
    s.n_observed = static_cast<std::size_t>(slot.first);
    s.mean_accuracy = slot.second.first / slot.first;
    s.mean_cost = slot.second.second / slot.first;
    stats.push_back(std::move(s));
  }
  return stats;
}

}  // namespace

std::vector<FoldResult> outer_cv_evaluate(const ProfilingTrace& trace,
                                          const std::vector<FeatureVector>& vectors,
                                          const CharacteristicSchema& schema,
                                          const EvalOptions& options) {
  if (options.folds < 2) throw IntegrityError("outer_cv_evaluate: folds < 2");

  std::unordered_map<std::string, const FeatureVector*> by_query;
  for (const auto& v : vectors) by_query[v.query_id] = &v;
  for (const auto& q : trace.queries())
    if (!by_query.count(q.query_id))
      throw IntegrityError("outer_cv_evaluate: no feature vector for query \"" +
                           q.query_id + "\"");

  // One grid for every fold so holdout curves can be fold-averaged.
  std::vector<double> grid = options.grid;
  if (grid.empty()) {
    const auto full_stats = compute_stats(trace, options.min_cells);
    grid = default_lambda_grid(full_stats.stats, options.grid_size);
  }

  const auto folds =
      split_folds(trace, options.folds, derive_seed(options.seed, "outer-folds"));

  std::vector<FoldResult> results;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldResult fold;
    fold.fold_index = f;
    fold.holdout_ids = folds[f];

    std::unordered_set<std::string> holdout_set(folds[f].begin(), folds[f].end());
    std::unordered_set<std::string> train_set;
    for (const auto& q : trace.queries())
      if (!holdout_set.count(q.query_id)) train_set.insert(q.query_id);

    const TruthTable train_truth = truth_from_cells(trace, train_set);
    const auto train_stats = stats_from_truth(train_truth, options.min_cells);
    if (train_stats.empty())
      throw IntegrityError("fold " + std::to_string(f) +
                           ": no config meets min_cells on the train split");

    const PruneResult pruned = fuzzy_prune(train_stats, options.prune);
    if (pruned.retained.empty())
      throw IntegrityError("fold " + std::to_string(f) + ": empty retained set");

    // Train only on train-split cells.
    std::vector<QueryRecord> train_queries;
    std::vector<OutcomeCell> train_cells;
    for (const auto& q : trace.queries())
      if (train_set.count(q.query_id)) train_queries.push_back(q);
    for (const auto& cell : trace.cells())
      if (train_set.count(cell.query_id)) train_cells.push_back(cell);
    std::vector<ConfigDescriptor> configs = trace.configs();
    const ProfilingTrace train_trace(std::move(train_queries),
                                     std::move(configs), std::move(train_cells));

    std::vector<FeatureVector> train_vectors;
    for (const auto& q : train_trace.queries())
      train_vectors.push_back(*by_query.at(q.query_id));

    const auto bank_result = train_bank(
        train_trace, train_vectors, schema.digest(), pruned.retained,
        options.trials, options.inner_folds,
        derive_seed(options.seed, "fold:" + std::to_string(f)),
        options.parallelism);
    const PredictorBank& bank = bank_result.bank;

    fold.calibration =
        sweep_lambda(bank, train_vectors, train_truth, grid,
                     options.characterization_cost_usd);

    // Holdout replay at every grid point, using realized holdout cells and
    // falling back to the train-split means the router itself relies on.
    std::vector<FeatureVector> holdout_vectors;
    for (const auto& qid : fold.holdout_ids)
      holdout_vectors.push_back(*by_query.at(qid));
    const ScoreMatrix matrix = score_with_bank(bank, holdout_vectors);
    const TruthTable holdout_truth = truth_from_cells(trace, holdout_set);

    FallbackMeans fallback;
    for (const auto& s : stats_from_truth(train_truth, 1))
      fallback[s.config_id] = {s.mean_accuracy, s.mean_cost};

    fold.config_ids = matrix.config_ids;
    for (double lambda : grid) {
      HoldoutPoint point;
      point.lambda = lambda;
      std::vector<std::uint32_t> chosen_row;
      double acc_sum = 0.0, cost_sum = 0.0;
      for (std::size_t q = 0; q < matrix.query_ids.size(); ++q) {
        const std::size_t chosen = select_config(
            matrix.row(q), matrix.mean_costs, matrix.config_ids, lambda);
        chosen_row.push_back(static_cast<std::uint32_t>(chosen));
        const auto& cid = matrix.config_ids[chosen];
        auto it = holdout_truth.find({matrix.query_ids[q], cid});
        if (it != holdout_truth.end()) {
          acc_sum += it->second.correct;
          cost_sum += it->second.cost_usd;
        } else {
          auto fb = fallback.find(cid);
          if (fb != fallback.end()) {
            acc_sum += fb->second.first;
            cost_sum += fb->second.second;
          } else {
            cost_sum += matrix.mean_costs[chosen];
          }
        }
        cost_sum += options.characterization_cost_usd;
      }
      const double n = static_cast<double>(matrix.query_ids.size());
      point.accuracy = acc_sum / n;
      point.cost = cost_sum / n;
      fold.holdout_curve.push_back(point);
      fold.decisions.push_back(std::move(chosen_row));
    }
    results.push_back(std::move(fold));
  }
  return results;
}

std::vector<StaticPoint> static_holdout_stats(
    const ProfilingTrace& trace,
    const std::vector<std::vector<std::string>>& folds) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      per_config;  // config -> (per-fold accuracy, per-fold cost)
  for (const auto& fold : folds) {
    std::unordered_set<std::string> holdout(fold.begin(), fold.end());
    const auto stats = stats_from_truth(truth_from_cells(trace, holdout), 1);
    for (const auto& s : stats) {
      per_config[s.config_id].first.push_back(s.mean_accuracy);
      per_config[s.config_id].second.push_back(s.mean_cost);
    }
  }
  std::vector<StaticPoint> out;
  for (const auto& [cid, lists] : per_config) {
    StaticPoint p;
    p.config_id = cid;
    for (double a : lists.first) p.accuracy += a;
    for (double c : lists.second) p.cost += c;
    p.accuracy /= static_cast<double>(lists.first.size());
    p.cost /= static_cast<double>(lists.second.size());
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<HoldoutPoint> fold_averaged_curve(
    const std::vector<FoldResult>& folds) {
  if (folds.empty()) return {};
  const std::size_t g = folds[0].holdout_curve.size();
  for (const auto& f : folds)
    if (f.holdout_curve.size() != g)
      throw IntegrityError("fold curves are not aligned to one grid");
  std::vector<HoldoutPoint> curve(g);
  for (std::size_t i = 0; i < g; ++i) {
    curve[i].lambda = folds[0].holdout_curve[i].lambda;
    for (const auto& f : folds) {
      curve[i].accuracy += f.holdout_curve[i].accuracy;
      curve[i].cost += f.holdout_curve[i].cost;
    }
    curve[i].accuracy /= static_cast<double>(folds.size());
    curve[i].cost /= static_cast<double>(folds.size());
  }
  return curve;
}

namespace {

const StaticPoint* most_accurate_static(
    const std::vector<StaticPoint>& static_stats) {
  if (static_stats.empty()) throw IntegrityError("no static stats");
  const StaticPoint* best = &static_stats[0];
  for (const auto& s : static_stats)
    if (s.accuracy > best->accuracy ||
        (s.accuracy == best->accuracy &&
         (s.cost < best->cost ||
          (s.cost == best->cost && s.config_id < best->config_id))))
      best = &s;
  return best;
}

void classify_outcome(double cost, double baseline_cost,
                      GoalReport::Outcome& outcome, double& value) {
  if (cost < baseline_cost) {
    outcome = GoalReport::Outcome::kSaving;
    value = 100.0 * (1.0 - cost / baseline_cost);
  } else {
    outcome = GoalReport::Outcome::kCostMultiple;
    value = cost / baseline_cost;
  }
}

void finish_outcome(GoalReport& report) {
  if (!report.has_routed) {
    report.outcome = GoalReport::Outcome::kNotAchievable;
    report.outcome_value = 0.0;
    return;
  }
  classify_outcome(report.routed_cost, report.baseline_cost, report.outcome,
                   report.outcome_value);
}

// Resolves the goal's target per fold on the train-split calibration table
// (nearest achievable point when the target is infeasible), replays the
// chosen lambda on that fold's holdout, and averages. The row is n/a when
// the averaged point misses the goal on the holdout.
void add_calibrated_row(GoalReport& report, const std::vector<FoldResult>& folds,
                        const Target& target) {
  std::vector<double> accs, costs;
  for (const auto& fold : folds) {
    if (fold.calibration.points.empty()) return;
    double lambda;
    try {
      lambda = calibrate(fold.calibration, target).lambda;
    } catch (const InfeasibleTargetError& e) {
      lambda = e.nearest_lambda;
    }
    bool found = false;
    for (const auto& p : fold.holdout_curve) {
      if (p.lambda == lambda) {
        accs.push_back(p.accuracy);
        costs.push_back(p.cost);
        found = true;
        break;
      }
    }
    if (!found) return;  // calibration grid not aligned with the holdout grid
  }
  if (accs.empty()) return;

  auto mean_std = [](const std::vector<double>& v, double& mean, double& std) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    std = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1))
                       : 0.0;
  };
  report.has_calibrated = true;
  mean_std(accs, report.calibrated_accuracy, report.calibrated_accuracy_std);
  mean_std(costs, report.calibrated_cost, report.calibrated_cost_std);

  const bool goal_met =
      report.kind == GoalReport::Kind::kMatchedAccuracy
          ? report.calibrated_accuracy >= report.accuracy_floor
          : report.calibrated_cost <= report.cost_budget;
  if (!goal_met) {
    report.calibrated_outcome = GoalReport::Outcome::kNotAchievable;
    report.calibrated_outcome_value = 0.0;
    return;
  }
  classify_outcome(report.calibrated_cost, report.baseline_cost,
                   report.calibrated_outcome, report.calibrated_outcome_value);
}

}  // namespace

GoalReport matched_accuracy_metric(const std::vector<FoldResult>& folds,
                                   const std::vector<StaticPoint>& static_stats,
                                   double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw IntegrityError("accuracy ratio must be in (0, 1]");

  GoalReport report;
  report.kind = GoalReport::Kind::kMatchedAccuracy;
  report.goal_value = ratio;

  const StaticPoint* best = most_accurate_static(static_stats);
  report.accuracy_floor = ratio * best->accuracy;

  // Cheapest static config that reaches the floor. The most accurate config
  // itself always qualifies, so a baseline always exists.
  const StaticPoint* baseline = nullptr;
  for (const auto& s : static_stats) {
    if (s.accuracy < report.accuracy_floor) continue;
    if (!baseline || s.cost < baseline->cost ||
        (s.cost == baseline->cost &&
         (s.accuracy > baseline->accuracy ||
          (s.accuracy == baseline->accuracy &&
           s.config_id < baseline->config_id))))
      baseline = &s;
  }
  report.baseline_config = baseline->config_id;
  report.baseline_accuracy = baseline->accuracy;
  report.baseline_cost = baseline->cost;

  const auto curve = fold_averaged_curve(folds);
  const HoldoutPoint* routed = nullptr;
  for (const auto& p : curve) {
    if (p.accuracy < report.accuracy_floor) continue;
    if (!routed || p.cost < routed->cost ||
        (p.cost == routed->cost &&
         (p.accuracy > routed->accuracy ||
          (p.accuracy == routed->accuracy && p.lambda < routed->lambda))))
      routed = &p;
  }
  if (routed) {
    report.has_routed = true;
    report.routed_lambda = routed->lambda;
    report.routed_accuracy = routed->accuracy;
    report.routed_cost = routed->cost;
  }
  finish_outcome(report);
  add_calibrated_row(report, folds,
                     Target::accuracy_floor(report.accuracy_floor));
  return report;
}

GoalReport budget_goal_metric(const std::vector<FoldResult>& folds,
                              const std::vector<StaticPoint>& static_stats,
                              double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw IntegrityError("budget fraction must be in (0, 1]");

  GoalReport report;
  report.kind = GoalReport::Kind::kBudgetFraction;
  report.goal_value = fraction;

  const StaticPoint* best = most_accurate_static(static_stats);
  report.baseline_config = best->config_id;
  report.baseline_accuracy = best->accuracy;
  report.baseline_cost = best->cost;
  report.cost_budget = fraction * best->cost;

  const auto curve = fold_averaged_curve(folds);
  const HoldoutPoint* routed = nullptr;
  for (const auto& p : curve) {
    if (p.cost > report.cost_budget) continue;
    if (!routed || p.accuracy > routed->accuracy ||
        (p.accuracy == routed->accuracy &&
         (p.cost < routed->cost ||
          (p.cost == routed->cost && p.lambda < routed->lambda))))
      routed = &p;
  }
  if (routed) {
    report.has_routed = true;
    report.routed_lambda = routed->lambda;
    report.routed_accuracy = routed->accuracy;
    report.routed_cost = routed->cost;
  }
  finish_outcome(report);
  add_calibrated_row(report, folds, Target::cost_budget(report.cost_budget));
  return report;
}

SyntheticWorkload generate_synthetic_workload(const SyntheticWorkloadSpec& spec) {
  if (spec.n_queries == 0 || spec.n_configs == 0 || spec.n_features == 0)
    throw IntegrityError("synthetic workload: sizes must be positive");

  CharacteristicSchema schema;
  for (std::size_t j = 0; j < spec.n_features; ++j)
    schema.characteristics.push_back(
        {"f" + std::to_string(j),
         "Does the query have synthetic property " + std::to_string(j) + "?"});
  schema.version = schema.digest().substr(0, 12);

  Rng feature_rng(derive_seed(spec.seed, "synthetic:features"));
  std::vector<QueryRecord> queries;
  std::vector<FeatureVector> vectors;
  for (std::size_t i = 0; i < spec.n_queries; ++i) {
    const std::string qid = "q" + std::to_string(i);
    FeatureVector fv;
    fv.query_id = qid;
    std::string bits;
    for (std::size_t j = 0; j < spec.n_features; ++j) {
      const double bit = feature_rng.uniform() < 0.5 ? 0.0 : 1.0;
      fv.values.push_back(bit);
      bits += bit > 0.5 ? '1' : '0';
    }
    queries.push_back({qid, "synthetic query " + std::to_string(i) +
                                " with properties " + bits});
    vectors.push_back(std::move(fv));
  }

  Rng config_rng(derive_seed(spec.seed, "synthetic:configs"));
  struct ConfigTruth {
    std::vector<double> weights;
    double bias = 0.0;
    double base_cost = 0.0;
  };
  std::vector<ConfigDescriptor> configs;
  std::vector<ConfigTruth> truths;
  for (std::size_t c = 0; c < spec.n_configs; ++c) {
    ConfigTruth t;
    for (std::size_t j = 0; j < spec.n_features; ++j)
      t.weights.push_back(config_rng.normal() * spec.weight_scale);
    t.bias = config_rng.normal() * spec.bias_scale;
    t.base_cost = config_rng.log_uniform(spec.cost_log_min, spec.cost_log_max);
    ConfigDescriptor cd;
    cd.config_id = std::string("c") + (c < 10 ? "0" : "") + std::to_string(c);
    truths.push_back(std::move(t));
    configs.push_back(std::move(cd));
  }

  Rng cell_rng(derive_seed(spec.seed, "synthetic:cells"));
  std::vector<OutcomeCell> cells;
  for (std::size_t i = 0; i < spec.n_queries; ++i) {
    for (std::size_t c = 0; c < spec.n_configs; ++c) {
      const auto& t = truths[c];
      double z = t.bias;
      for (std::size_t j = 0; j < spec.n_features; ++j)
        z += t.weights[j] * vectors[i].values[j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      double correct;
      if (spec.deterministic_correctness)
        correct = z > 0.0 ? 1.0 : 0.0;
      else
        correct = cell_rng.uniform() < p ? 1.0 : 0.0;
      double cost = t.base_cost;
      if (spec.cost_jitter > 0.0)
        cost *= std::exp(spec.cost_jitter * cell_rng.normal());
      cells.push_back({queries[i].query_id, configs[c].config_id, correct, cost});
    }
  }

  nlohmann::json oracle_configs = nlohmann::json::array();
  for (std::size_t c = 0; c < spec.n_configs; ++c)
    oracle_configs.push_back({{"config_id", configs[c].config_id},
                              {"weights", truths[c].weights},
                              {"bias", truths[c].bias},
                              {"base_cost", truths[c].base_cost}});
  nlohmann::json oracle = {{"deterministic", spec.deterministic_correctness},
                           {"configs", oracle_configs},
                           {"seed", spec.seed}};

  return SyntheticWorkload{
      ProfilingTrace(std::move(queries), std::move(configs), std::move(cells)),
      std::move(vectors), std::move(schema), std::move(oracle)};
}

namespace {

std::string outcome_string(GoalReport::Outcome outcome, double value) {
  std::ostringstream out;
  switch (outcome) {
    case GoalReport::Outcome::kSaving:
      out.precision(1);
      out << std::fixed << value << "% saving";
      break;
    case GoalReport::Outcome::kCostMultiple:
      out.precision(1);
      out << std::fixed << value << "x cost";
      break;
    case GoalReport::Outcome::kNotAchievable:
      out << "n/a";
      break;
  }
  return out.str();
}

}  // namespace

std::string outcome_to_string(const GoalReport& report) {
  return outcome_string(report.outcome, report.outcome_value);
}

nlohmann::json goal_report_to_json(const GoalReport& report) {
  nlohmann::json j = {
      {"goal", report.kind == GoalReport::Kind::kMatchedAccuracy
                   ? "matched_accuracy"
                   : "budget_fraction"},
      {"goal_value", report.goal_value},
      {"baseline",
       {{"config_id", report.baseline_config},
        {"accuracy", report.baseline_accuracy},
        {"cost", report.baseline_cost}}},
      {"outcome", outcome_to_string(report)},
  };
  if (report.kind == GoalReport::Kind::kMatchedAccuracy)
    j["accuracy_floor"] = report.accuracy_floor;
  else
    j["cost_budget"] = report.cost_budget;
  if (report.has_routed)
    j["routed"] = {{"selection", "oracle-lambda"},
                   {"lambda", report.routed_lambda},
                   {"accuracy", report.routed_accuracy},
                   {"cost", report.routed_cost}};
  if (report.has_calibrated)
    j["calibrated"] = {
        {"selection", "calibrated"},
        {"accuracy", report.calibrated_accuracy},
        {"accuracy_std", report.calibrated_accuracy_std},
        {"cost", report.calibrated_cost},
        {"cost_std", report.calibrated_cost_std},
        {"outcome", outcome_string(report.calibrated_outcome,
                                   report.calibrated_outcome_value)}};
  return j;
}

void emit_report(const std::vector<GoalReport>& reports,
                 const std::vector<FoldResult>& folds,
                 const std::vector<StaticPoint>& static_stats,
                 const std::string& out_dir) {
  if (reports.empty()) throw IntegrityError("emit_report: no goal reports");
  std::filesystem::create_directories(out_dir);

  nlohmann::json goals = nlohmann::json::array();
  for (const auto& report : reports) {
    nlohmann::json j = goal_report_to_json(report);
    if (report.has_routed && !folds.empty()) {
      // Per-fold spread at the selected grid point (1 sigma across folds).
      std::vector<double> accs, costs;
      for (const auto& fold : folds) {
        for (const auto& p : fold.holdout_curve) {
          if (p.lambda == report.routed_lambda) {
            accs.push_back(p.accuracy);
            costs.push_back(p.cost);
            break;
          }
        }
      }
      auto mean_std = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double std =
            v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1))
                         : 0.0;
        return std::make_pair(mean, std);
      };
      if (!accs.empty()) {
        const auto [am, as] = mean_std(accs);
        const auto [cm, cs] = mean_std(costs);
        j["fold_spread"] = {{"accuracy_mean", am},
                            {"accuracy_std", as},
                            {"cost_mean", cm},
                            {"cost_std", cs},
                            {"n_folds", accs.size()}};
      }
    }
    goals.push_back(std::move(j));
  }
  nlohmann::json summary = {{"format", "q2c.report.v1"}, {"goals", goals}};
  {
    std::ofstream out(std::filesystem::path(out_dir) / "report.json",
                      std::ios::trunc);
    if (!out) throw Error("io", "cannot write report.json in " + out_dir);
    out << summary.dump(2) << "\n";
  }

  std::ofstream csv(std::filesystem::path(out_dir) / "plot_data.csv",
                    std::ios::trunc);
  if (!csv) throw Error("io", "cannot write plot_data.csv in " + out_dir);
  csv.precision(17);
  csv << "series,config_id_or_lambda,mean_cost,mean_accuracy\n";
  for (const auto& s : static_stats)
    csv << "static," << s.config_id << ',' << s.cost << ',' << s.accuracy
        << '\n';
  for (const auto& p : fold_averaged_curve(folds))
    csv << "router," << p.lambda << ',' << p.cost << ',' << p.accuracy << '\n';
}

nlohmann::json fold_results_to_json(const std::vector<FoldResult>& folds,
                                    const std::vector<StaticPoint>& static_stats) {
  nlohmann::json jfolds = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : f.holdout_curve)
      curve.push_back(
          {{"lambda", p.lambda}, {"accuracy", p.accuracy}, {"cost", p.cost}});
    nlohmann::json entry = {{"fold_index", f.fold_index},
                            {"holdout_ids", f.holdout_ids},
                            {"holdout_curve", curve}};
    if (!f.calibration.points.empty())
      entry["calibration"] = calibration_to_json(f.calibration);
    jfolds.push_back(std::move(entry));
  }
  nlohmann::json jstatic = nlohmann::json::array();
  for (const auto& s : static_stats)
    jstatic.push_back({{"config_id", s.config_id},
                       {"accuracy", s.accuracy},
                       {"cost", s.cost}});
  return {{"format", "q2c.folds.v1"},
          {"folds", jfolds},
          {"static_stats", jstatic}};
}

void fold_results_from_json(const nlohmann::json& j,
                            std::vector<FoldResult>& folds,
                            std::vector<StaticPoint>& static_stats) {
  if (j.value("format", "") != "q2c.folds.v1")
    throw ParseError("expected artifact format \"q2c.folds.v1\"");
  folds.clear();
  static_stats.clear();
  for (const auto& jf : j.at("folds")) {
    FoldResult f;
    f.fold_index = jf.at("fold_index").get<std::size_t>();
    f.holdout_ids = jf.at("holdout_ids").get<std::vector<std::string>>();
    for (const auto& jp : jf.at("holdout_curve")) {
      HoldoutPoint p;
      p.lambda = jp.at("lambda").get<double>();
      p.accuracy = jp.at("accuracy").get<double>();
      p.cost = jp.at("cost").get<double>();
      f.holdout_curve.push_back(p);
    }
    if (jf.contains("calibration"))
      f.calibration = calibration_from_json(jf["calibration"]);
    folds.push_back(std::move(f));
  }
  for (const auto& js : j.at("static_stats")) {
    StaticPoint s;
    s.config_id = js.at("config_id").get<std::string>();
    s.accuracy = js.at("accuracy").get<double>();
    s.cost = js.at("cost").get<double>();
    static_stats.push_back(std::move(s));
  }
}

}  // namespace q2c
