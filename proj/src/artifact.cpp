#include "q2c/artifact.hpp"

#include <fstream>

#include "q2c/errors.hpp"

namespace q2c {

namespace {

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

void save_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path);
  out << j.dump(2) << "\n";
}

void require_format(const nlohmann::json& j, const char* format) {
  if (!j.is_object() || j.value("format", "") != format)
    throw ParseError(std::string("expected artifact format \"") + format +
                     "\"");
}

nlohmann::json tree_to_json(const TreeModel& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes)
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"value", n.value},
                     {"left", n.left},
                     {"right", n.right}});
  return nodes;
}

TreeModel tree_from_json(const nlohmann::json& j) {
  TreeModel tree;
  for (const auto& item : j) {
    TreeNode n;
    n.feature = item.at("feature").get<std::int32_t>();
    n.threshold = item.at("threshold").get<double>();
    n.value = item.at("value").get<double>();
    n.left = item.at("left").get<std::int32_t>();
    n.right = item.at("right").get<std::int32_t>();
    tree.nodes.push_back(n);
  }
  if (tree.nodes.empty()) throw ParseError("tree artifact has no nodes");
  return tree;
}

nlohmann::json predictor_to_json(const TrainedPredictor& p) {
  nlohmann::json j = {
      {"config_id", p.config_id},
      {"family", family_name(p.spec.family)},
      {"hyperparams", p.spec.hyperparams},
      {"dim", p.dim},
      {"meta",
       {{"n_train", p.meta.n_train},
        {"inner_cv_logloss", p.meta.inner_cv_logloss},
        {"seed", p.meta.seed},
        {"degenerate_labels", p.meta.degenerate_labels}}},
  };
  switch (p.spec.family) {
    case ModelFamily::kConstant:
      j["constant_p"] = p.constant_p;
      break;
    case ModelFamily::kLogistic:
      j["weights"] = p.weights;
      j["bias"] = p.bias;
      break;
    case ModelFamily::kTree:
      j["tree"] = tree_to_json(p.trees[0]);
      break;
    case ModelFamily::kBoostedTrees: {
      j["base_score"] = p.base_score;
      j["learning_rate"] = p.learning_rate;
      nlohmann::json trees = nlohmann::json::array();
      for (const auto& t : p.trees) trees.push_back(tree_to_json(t));
      j["trees"] = trees;
      break;
    }
  }
  return j;
}

TrainedPredictor predictor_from_json(const nlohmann::json& j) {
  TrainedPredictor p;
  p.config_id = j.at("config_id").get<std::string>();
  p.spec.family = family_from_name(j.at("family").get<std::string>());
  if (j.contains("hyperparams"))
    p.spec.hyperparams =
        j["hyperparams"].get<std::map<std::string, double>>();
  p.dim = j.at("dim").get<std::size_t>();
  const auto& meta = j.at("meta");
  p.meta.n_train = meta.at("n_train").get<std::size_t>();
  p.meta.inner_cv_logloss = meta.at("inner_cv_logloss").get<double>();
  p.meta.seed = meta.at("seed").get<std::uint64_t>();
  p.meta.degenerate_labels = meta.at("degenerate_labels").get<bool>();

  switch (p.spec.family) {
    case ModelFamily::kConstant:
      p.constant_p = j.at("constant_p").get<double>();
      break;
    case ModelFamily::kLogistic:
      p.weights = j.at("weights").get<std::vector<double>>();
      p.bias = j.at("bias").get<double>();
      break;
    case ModelFamily::kTree:
      p.trees.push_back(tree_from_json(j.at("tree")));
      break;
    case ModelFamily::kBoostedTrees:
      p.base_score = j.at("base_score").get<double>();
      p.learning_rate = j.at("learning_rate").get<double>();
      for (const auto& t : j.at("trees")) p.trees.push_back(tree_from_json(t));
      break;
  }
  return p;
}

}  // namespace

nlohmann::json bank_to_json(const PredictorBank& bank) {
  nlohmann::json predictors = nlohmann::json::object();
  for (const auto& [cid, p] : bank.predictors)
    predictors[cid] = predictor_to_json(p);
  return {{"format", kBankFormat},
          {"schema_digest", bank.schema_digest},
          {"mean_costs", bank.mean_costs},
          {"predictors", predictors}};
}

PredictorBank bank_from_json(const nlohmann::json& j) {
  require_format(j, kBankFormat);
  PredictorBank bank;
  bank.schema_digest = j.at("schema_digest").get<std::string>();
  bank.mean_costs = j.at("mean_costs").get<std::map<std::string, double>>();
  for (const auto& [cid, pj] : j.at("predictors").items()) {
    TrainedPredictor p = predictor_from_json(pj);
    if (p.config_id != cid)
      throw ParseError("bank predictor key \"" + cid +
                       "\" does not match config_id \"" + p.config_id + "\"");
    bank.predictors.emplace(cid, std::move(p));
  }
  if (bank.predictors.empty()) throw IntegrityError("bank has no predictors");
  return bank;
}

void save_bank(const std::string& path, const PredictorBank& bank) {
  save_json_file(path, bank_to_json(bank));
}

PredictorBank load_bank(const std::string& path) {
  return bank_from_json(load_json_file(path));
}

nlohmann::json calibration_to_json(const CalibrationTable& table) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : table.points)
    points.push_back({{"lambda", p.lambda},
                      {"mean_accuracy", p.mean_accuracy},
                      {"mean_cost", p.mean_cost},
                      {"fallback_cells", p.fallback_cells}});
  return {{"format", kCalibrationFormat},
          {"points", points},
          {"pareto_indices", table.pareto_indices}};
}

CalibrationTable calibration_from_json(const nlohmann::json& j) {
  require_format(j, kCalibrationFormat);
  CalibrationTable table;
  for (const auto& pj : j.at("points")) {
    CalibrationPoint p;
    p.lambda = pj.at("lambda").get<double>();
    p.mean_accuracy = pj.at("mean_accuracy").get<double>();
    p.mean_cost = pj.at("mean_cost").get<double>();
    p.fallback_cells = pj.value("fallback_cells", std::size_t{0});
    table.points.push_back(p);
  }
  table.pareto_indices =
      j.at("pareto_indices").get<std::vector<std::size_t>>();
  return table;
}

void save_calibration(const std::string& path, const CalibrationTable& table) {
  save_json_file(path, calibration_to_json(table));
}

CalibrationTable load_calibration(const std::string& path) {
  return calibration_from_json(load_json_file(path));
}

nlohmann::json policy_to_json(const PolicyArtifact& artifact) {
  nlohmann::json j = {
      {"format", kPolicyFormat},
      {"lambda", artifact.policy.lambda},
      {"tie_break", artifact.policy.tie_break},
      {"characterization_cost_usd", artifact.policy.characterization_cost_usd},
      {"bank", bank_to_json(*artifact.policy.bank)},
  };
  if (artifact.has_calibration)
    j["calibration"] = calibration_to_json(artifact.calibration);
  if (!artifact.knobs.empty()) {
    nlohmann::json knobs = nlohmann::json::object();
    for (const auto& [cid, kv] : artifact.knobs) {
      nlohmann::json one = nlohmann::json::object();
      for (const auto& [k, v] : kv) one[k] = v;
      knobs[cid] = one;
    }
    j["knobs"] = knobs;
  }
  return j;
}

PolicyArtifact policy_from_json(const nlohmann::json& j) {
  require_format(j, kPolicyFormat);
  PolicyArtifact artifact;
  artifact.policy.lambda = j.at("lambda").get<double>();
  if (artifact.policy.lambda < 0.0)
    throw IntegrityError("policy artifact has negative lambda");
  artifact.policy.tie_break = j.value("tie_break", "cost_then_id");
  artifact.policy.characterization_cost_usd =
      j.value("characterization_cost_usd", 0.0012);
  artifact.policy.bank =
      std::make_shared<const PredictorBank>(bank_from_json(j.at("bank")));
  if (j.contains("calibration")) {
    artifact.calibration = calibration_from_json(j["calibration"]);
    artifact.has_calibration = true;
  }
  if (j.contains("knobs")) {
    for (const auto& [cid, kv] : j["knobs"].items()) {
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& [k, v] : kv.items())
        pairs.emplace_back(k, v.get<std::string>());
      artifact.knobs.emplace(cid, std::move(pairs));
    }
  }
  return artifact;
}

void save_policy(const std::string& path, const PolicyArtifact& artifact) {
  save_json_file(path, policy_to_json(artifact));
}

PolicyArtifact load_policy(const std::string& path) {
  return policy_from_json(load_json_file(path));
}

}  // namespace q2c
