// q2c: per-query pipeline-configuration routing over profiled traces.
//
// Offline workflow: ingest -> features-propose -> features-label -> prune ->
// train -> sweep -> calibrate, then route/serve with the policy artifact, or
// evaluate/report for cross-validated goal metrics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "q2c/artifact.hpp"
#include "q2c/digest.hpp"
#include "q2c/errors.hpp"
#include "q2c/eval.hpp"
#include "q2c/featurize.hpp"
#include "q2c/llm.hpp"
#include "q2c/pareto.hpp"
#include "q2c/predictor.hpp"
#include "q2c/router.hpp"
#include "q2c/service.hpp"
#include "q2c/trace.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 ok, 2 usage, 3 data integrity, 4 upstream LLM, 5 infeasible
// target.
int exit_code_for(const q2c::Error& e) {
  if (e.tag() == "llm") return 4;
  if (e.tag() == "infeasible") return 5;
  return 3;
}

class Manifest {
public:
  Manifest(std::string command, std::uint64_t seed)
      : command_(std::move(command)), seed_(seed) {}

  void param(const std::string& name, const nlohmann::json& value) {
    params_[name] = value;
  }
  void input(const std::string& path) {
    if (!path.empty()) inputs_[path] = q2c::sha256_file(path);
  }
  void output(const std::string& path) { outputs_.push_back(path); }

  void write(const std::string& manifest_path) {
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& path : outputs_) outputs[path] = q2c::sha256_file(path);
    nlohmann::json j = {{"format", q2c::kManifestFormat},
                        {"tool_version", kToolVersion},
                        {"command", command_},
                        {"seed", seed_},
                        {"params", params_},
                        {"inputs", inputs_},
                        {"outputs", outputs}};
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw q2c::Error("io", "cannot write " + manifest_path);
    out << j.dump(2) << "\n";
  }

private:
  std::string command_;
  std::uint64_t seed_;
  nlohmann::json params_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::object();
  std::vector<std::string> outputs_;
};

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw q2c::Error("io", "cannot write " + path);
  out << content;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw q2c::ParseError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw q2c::ParseError(path + ": " + e.what());
  }
  return j;
}

std::vector<q2c::QueryRecord> read_queries_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw q2c::ParseError("cannot open " + path);
  std::vector<q2c::QueryRecord> queries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      queries.push_back({rec.at("query_id").get<std::string>(),
                         rec.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw q2c::ParseError(path + ":" + std::to_string(lineno) + ": " +
                            e.what());
    }
  }
  return queries;
}

std::vector<double> parse_grid_flag(const std::string& csv) {
  std::vector<double> grid;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    grid.push_back(std::stod(item));
  }
  return grid;
}

struct TracePaths {
  std::string queries, configs, cells;
};

void add_trace_flags(CLI::App* cmd, TracePaths& paths) {
  cmd->add_option("--queries", paths.queries, "queries JSONL file")->required();
  cmd->add_option("--configs", paths.configs, "configs JSONL file")->required();
  cmd->add_option("--cells", paths.cells, "outcome cells JSONL file")
      ->required();
}

q2c::TruthTable truth_from_trace(const q2c::ProfilingTrace& trace) {
  q2c::TruthTable truth;
  for (const auto& cell : trace.cells())
    truth[{cell.query_id, cell.config_id}] = {cell.correct, cell.cost_usd};
  return truth;
}

struct LlmStack {
  std::unique_ptr<q2c::LlmClient> transport;
  std::shared_ptr<q2c::ResponseCache> cache;
  std::unique_ptr<q2c::LlmClient> client;
};

LlmStack make_llm_stack(const std::string& cache_dir) {
  LlmStack stack;
  stack.transport =
      std::make_unique<q2c::HttpLlmClient>(q2c::HttpLlmClient::from_env());
  stack.cache = cache_dir.empty()
                    ? std::make_shared<q2c::ResponseCache>()
                    : std::make_shared<q2c::ResponseCache>(cache_dir);
  stack.client =
      std::make_unique<q2c::CachingLlmClient>(*stack.transport, stack.cache);
  return stack;
}

// --- subcommand bodies -------------------------------------------------------

int run_ingest(const TracePaths& paths, std::size_t min_cells,
               const std::string& out_dir, std::uint64_t seed) {
  const auto trace = q2c::load_trace(paths.queries, paths.configs, paths.cells);
  const auto stats = q2c::compute_stats(trace, min_cells);
  std::filesystem::create_directories(out_dir);

  nlohmann::json jstats = nlohmann::json::array();
  for (const auto& s : stats.stats)
    jstats.push_back({{"config_id", s.config_id},
                      {"mean_accuracy", s.mean_accuracy},
                      {"mean_cost", s.mean_cost},
                      {"n_observed", s.n_observed}});
  nlohmann::json summary = {{"format", "q2c.stats.v1"},
                            {"n_queries", trace.n_queries()},
                            {"n_configs", trace.n_configs()},
                            {"n_cells", trace.cells().size()},
                            {"stats", jstats},
                            {"below_min_cells", stats.below_min_cells}};
  const std::string stats_path =
      (std::filesystem::path(out_dir) / "stats.json").string();
  write_text(stats_path, summary.dump(2) + "\n");

  for (const auto& cid : stats.below_min_cells)
    std::cerr << "warning: config \"" << cid << "\" has fewer than "
              << min_cells << " cells; omitted from stats\n";
  std::cout << "ingested " << trace.n_queries() << " queries, "
            << trace.n_configs() << " configs, " << trace.cells().size()
            << " cells -> " << stats_path << "\n";

  Manifest manifest("ingest", seed);
  manifest.param("min_cells", min_cells);
  manifest.input(paths.queries);
  manifest.input(paths.configs);
  manifest.input(paths.cells);
  manifest.output(stats_path);
  manifest.write(
      (std::filesystem::path(out_dir) / "ingest.manifest.json").string());
  return 0;
}

int run_features_propose(const std::string& queries_path, std::size_t d,
                         const std::string& model, const std::string& cache_dir,
                         const std::string& out_path, std::uint64_t seed) {
  const auto queries = read_queries_jsonl(queries_path);
  auto stack = make_llm_stack(cache_dir);
  const auto schema = q2c::propose_characteristics(
      queries, d, q2c::LlmEndpoint{stack.client.get(), model});
  q2c::save_schema(out_path, schema);
  std::cout << "proposed " << schema.dim() << " characteristics -> "
            << out_path << "\n";

  Manifest manifest("features-propose", seed);
  manifest.param("d", d);
  manifest.param("model", model);
  manifest.input(queries_path);
  manifest.output(out_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int run_features_label(const std::string& queries_path,
                       const std::string& schema_path, const std::string& model,
                       const std::string& cache_dir, std::size_t parallelism,
                       double dedup_threshold, const std::string& out_path,
                       std::string out_schema_path, std::uint64_t seed) {
  const auto queries = read_queries_jsonl(queries_path);
  const auto schema = q2c::load_schema(schema_path);
  auto stack = make_llm_stack(cache_dir);
  auto result = q2c::label_all(
      queries, schema, q2c::LlmEndpoint{stack.client.get(), model}, parallelism);
  if (!result.ok()) {
    q2c::save_feature_vectors(out_path, result.vectors);
    std::cerr << "error: llm: labeling failed for " << result.failures.size()
              << " queries: " << result.failed_ids() << "\n";
    return 4;
  }

  Manifest manifest("features-label", seed);
  manifest.param("model", model);
  manifest.param("parallelism", parallelism);
  manifest.param("dedup_threshold", dedup_threshold);
  manifest.input(queries_path);
  manifest.input(schema_path);

  if (out_schema_path.empty()) out_schema_path = out_path + ".schema.json";
  if (dedup_threshold > 0 && result.vectors.size() >= 2) {
    auto deduped =
        q2c::dedup_features(result.vectors, schema, dedup_threshold);
    q2c::save_feature_vectors(out_path, deduped.vectors);
    q2c::save_schema(out_schema_path, deduped.schema);
    for (const auto& id : deduped.report.dropped_constant)
      std::cerr << "warning: dropped constant characteristic \"" << id
                << "\"\n";
    for (const auto& drop : deduped.report.dropped_correlated)
      std::cerr << "warning: dropped \"" << drop.dropped_id
                << "\" (|corr| = " << std::abs(drop.correlation) << " with \""
                << drop.kept_id << "\")\n";
    std::cout << "labeled " << result.vectors.size() << " queries, retained "
              << deduped.schema.dim() << "/" << schema.dim()
              << " characteristics -> " << out_path << ", " << out_schema_path
              << "\n";
    manifest.output(out_schema_path);
  } else {
    q2c::save_feature_vectors(out_path, result.vectors);
    q2c::save_schema(out_schema_path, schema);
    std::cout << "labeled " << result.vectors.size() << " queries -> "
              << out_path << "\n";
    manifest.output(out_schema_path);
  }
  manifest.output(out_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int run_prune(const TracePaths& paths, double tau_acc, double tau_cost,
              std::size_t min_cells, const std::string& out_path,
              std::uint64_t seed) {
  const auto trace = q2c::load_trace(paths.queries, paths.configs, paths.cells);
  const auto stats = q2c::compute_stats(trace, min_cells);
  const auto result =
      q2c::fuzzy_prune(stats.stats, q2c::PruneParams{tau_acc, tau_cost});

  nlohmann::json witnesses = nlohmann::json::object();
  for (const auto& [dropped, vertex] : result.witnesses)
    witnesses[dropped] = vertex;
  nlohmann::json j = {{"format", q2c::kPruneFormat},
                      {"params", {{"tau_acc", tau_acc}, {"tau_cost", tau_cost}}},
                      {"strict_frontier", result.strict_frontier},
                      {"retained", result.retained},
                      {"witnesses", witnesses}};
  write_text(out_path, j.dump(2) + "\n");
  std::cout << "frontier " << result.strict_frontier.size() << " / retained "
            << result.retained.size() << " of " << stats.stats.size()
            << " configs -> " << out_path << "\n";

  Manifest manifest("prune", seed);
  manifest.param("tau_acc", tau_acc);
  manifest.param("tau_cost", tau_cost);
  manifest.param("min_cells", min_cells);
  manifest.input(paths.queries);
  manifest.input(paths.configs);
  manifest.input(paths.cells);
  manifest.output(out_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int run_train(const TracePaths& paths, const std::string& features_path,
              const std::string& schema_path, const std::string& retained_path,
              std::size_t trials, std::size_t inner_folds, std::uint64_t seed,
              std::size_t parallelism, const std::string& out_path) {
  const auto trace = q2c::load_trace(paths.queries, paths.configs, paths.cells);
  const auto vectors =
      q2c::load_feature_vectors(features_path, q2c::FeatureMode::kReal);
  const auto schema = q2c::load_schema(schema_path);

  std::vector<std::string> retained;
  if (!retained_path.empty()) {
    const auto j = read_json(retained_path);
    retained = j.at("retained").get<std::vector<std::string>>();
  } else {
    for (const auto& c : trace.configs()) retained.push_back(c.config_id);
  }

  const auto result =
      q2c::train_bank(trace, vectors, schema.digest(), retained, trials,
                      inner_folds, seed, parallelism);
  for (const auto& cid : result.skipped)
    std::cerr << "warning: retained config \"" << cid
              << "\" has no observed cells; excluded from bank\n";
  q2c::save_bank(out_path, result.bank);
  std::cout << "trained " << result.bank.predictors.size()
            << " predictors -> " << out_path << "\n";

  Manifest manifest("train", seed);
  manifest.param("trials", trials);
  manifest.param("inner_folds", inner_folds);
  manifest.param("parallelism", parallelism);
  manifest.input(paths.queries);
  manifest.input(paths.configs);
  manifest.input(paths.cells);
  manifest.input(features_path);
  manifest.input(schema_path);
  if (!retained_path.empty()) manifest.input(retained_path);
  manifest.output(out_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int run_sweep(const TracePaths& paths, const std::string& bank_path,
              const std::string& features_path, const std::string& grid_csv,
              std::size_t grid_size, double characterization_cost,
              const std::string& out_path, std::uint64_t seed) {
  const auto trace = q2c::load_trace(paths.queries, paths.configs, paths.cells);
  const auto bank = q2c::load_bank(bank_path);
  const auto vectors =
      q2c::load_feature_vectors(features_path, q2c::FeatureMode::kReal);

  std::vector<double> grid;
  if (!grid_csv.empty()) {
    grid = parse_grid_flag(grid_csv);
  } else {
    std::vector<q2c::ConfigStats> stats;
    for (const auto& [cid, cost] : bank.mean_costs) {
      q2c::ConfigStats s;
      s.config_id = cid;
      s.mean_cost = cost;
      s.n_observed = 1;
      stats.push_back(s);
    }
    grid = q2c::default_lambda_grid(stats, grid_size);
  }

  const auto table = q2c::sweep_lambda(bank, vectors, truth_from_trace(trace),
                                       grid, characterization_cost);
  q2c::save_calibration(out_path, table);
  const std::string csv_path = out_path + ".csv";
  write_text(csv_path, q2c::calibration_to_csv(table));
  std::cout << "swept " << table.points.size() << " lambda points ("
            << table.pareto_indices.size() << " on the frontier) -> "
            << out_path << "\n";

  Manifest manifest("sweep", seed);
  manifest.param("grid_size", grid_size);
  manifest.param("characterization_cost_usd", characterization_cost);
  manifest.input(paths.queries);
  manifest.input(paths.configs);
  manifest.input(paths.cells);
  manifest.input(bank_path);
  manifest.input(features_path);
  manifest.output(out_path);
  manifest.output(csv_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int run_calibrate(const std::string& bank_path,
                  const std::string& calibration_path,
                  const std::string& configs_path, double accuracy_floor,
                  double cost_budget, double lambda_flag,
                  double characterization_cost, const std::string& out_path,
                  std::uint64_t seed) {
  const auto bank = q2c::load_bank(bank_path);
  const auto table = q2c::load_calibration(calibration_path);

  const int n_set =
      (accuracy_floor >= 0) + (cost_budget >= 0) + (lambda_flag >= 0);
  if (n_set != 1)
    throw q2c::Error("domain",
                     "set exactly one of --accuracy-floor, --cost-budget, "
                     "--lambda");
  q2c::Target target;
  if (accuracy_floor >= 0)
    target = q2c::Target::accuracy_floor(accuracy_floor);
  else if (cost_budget >= 0)
    target = q2c::Target::cost_budget(cost_budget);
  else
    target = q2c::Target::lambda(lambda_flag);

  const auto choice = q2c::calibrate(table, target);

  q2c::PolicyArtifact artifact;
  artifact.policy.bank = std::make_shared<const q2c::PredictorBank>(bank);
  artifact.policy.lambda = choice.lambda;
  artifact.policy.characterization_cost_usd = characterization_cost;
  artifact.calibration = table;
  artifact.has_calibration = true;
  if (!configs_path.empty()) {
    std::ifstream in(configs_path);
    if (!in) throw q2c::ParseError("cannot open " + configs_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto rec = nlohmann::ordered_json::parse(line);
      const auto cid = rec.at("config_id").get<std::string>();
      std::vector<std::pair<std::string, std::string>> kv;
      if (rec.contains("knobs"))
        for (const auto& [k, v] : rec["knobs"].items())
          kv.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
      artifact.knobs.emplace(cid, std::move(kv));
    }
  }
  q2c::save_policy(out_path, artifact);
  std::cout << "operating point: lambda " << choice.lambda << ", accuracy "
            << choice.point.mean_accuracy << ", cost "
            << choice.point.mean_cost << " -> " << out_path << "\n";

  Manifest manifest("calibrate", seed);
  if (accuracy_floor >= 0) manifest.param("accuracy_floor", accuracy_floor);
  if (cost_budget >= 0) manifest.param("cost_budget", cost_budget);
  if (lambda_flag >= 0) manifest.param("lambda", lambda_flag);
  manifest.param("characterization_cost_usd", characterization_cost);
  manifest.input(bank_path);
  manifest.input(calibration_path);
  if (!configs_path.empty()) manifest.input(configs_path);
  manifest.output(out_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int run_route(const std::string& artifact_path,
              const std::string& features_path, const std::string& out_path,
              std::uint64_t seed) {
  const auto artifact = q2c::load_policy(artifact_path);
  const auto vectors =
      q2c::load_feature_vectors(features_path, q2c::FeatureMode::kReal);

  std::ostringstream out;
  for (const auto& fv : vectors) {
    const auto decision = q2c::route(artifact.policy, fv);
    nlohmann::json rec = {{"query_id", fv.query_id},
                          {"config_id", decision.config_id},
                          {"p_hat", decision.p_hat},
                          {"score", decision.score},
                          {"mean_cost", decision.mean_cost},
                          {"lambda_used", artifact.policy.lambda}};
    out << rec.dump() << "\n";
  }
  write_text(out_path, out.str());
  std::cout << "routed " << vectors.size() << " queries -> " << out_path
            << "\n";

  Manifest manifest("route", seed);
  manifest.input(artifact_path);
  manifest.input(features_path);
  manifest.output(out_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int run_evaluate(const TracePaths& paths, const std::string& features_path,
                 const std::string& schema_path, q2c::EvalOptions options,
                 const std::string& goals_csv, double budget_fraction,
                 const std::string& out_dir) {
  const auto trace = q2c::load_trace(paths.queries, paths.configs, paths.cells);
  const auto vectors =
      q2c::load_feature_vectors(features_path, q2c::FeatureMode::kReal);
  const auto schema = q2c::load_schema(schema_path);

  const auto folds = q2c::outer_cv_evaluate(trace, vectors, schema, options);
  const auto fold_ids = q2c::split_folds(
      trace, options.folds, q2c::derive_seed(options.seed, "outer-folds"));
  const auto static_stats = q2c::static_holdout_stats(trace, fold_ids);

  std::vector<q2c::GoalReport> reports;
  for (double r : parse_grid_flag(goals_csv))
    reports.push_back(q2c::matched_accuracy_metric(folds, static_stats, r));
  if (budget_fraction > 0)
    reports.push_back(
        q2c::budget_goal_metric(folds, static_stats, budget_fraction));

  std::filesystem::create_directories(out_dir);
  q2c::emit_report(reports, folds, static_stats, out_dir);
  const std::string folds_path =
      (std::filesystem::path(out_dir) / "folds.json").string();
  write_text(folds_path,
             q2c::fold_results_to_json(folds, static_stats).dump(2) + "\n");

  for (const auto& report : reports) {
    std::cout << (report.kind == q2c::GoalReport::Kind::kMatchedAccuracy
                      ? "accuracy goal "
                      : "budget fraction ")
              << report.goal_value << ": oracle-lambda "
              << q2c::outcome_to_string(report);
    if (report.has_routed)
      std::cout << " (acc " << report.routed_accuracy << ", cost "
                << report.routed_cost << "; baseline " << report.baseline_config
                << " acc " << report.baseline_accuracy << ", cost "
                << report.baseline_cost << ")";
    if (report.has_calibrated)
      std::cout << "; calibrated acc " << report.calibrated_accuracy
                << ", cost " << report.calibrated_cost;
    std::cout << "\n";
  }

  Manifest manifest("evaluate", options.seed);
  manifest.param("folds", options.folds);
  manifest.param("trials", options.trials);
  manifest.param("inner_folds", options.inner_folds);
  manifest.param("tau_acc", options.prune.tau_acc);
  manifest.param("tau_cost", options.prune.tau_cost);
  manifest.param("goals", goals_csv);
  manifest.param("budget_fraction", budget_fraction);
  manifest.input(paths.queries);
  manifest.input(paths.configs);
  manifest.input(paths.cells);
  manifest.input(features_path);
  manifest.input(schema_path);
  manifest.output((std::filesystem::path(out_dir) / "report.json").string());
  manifest.output((std::filesystem::path(out_dir) / "plot_data.csv").string());
  manifest.output(folds_path);
  manifest.write(
      (std::filesystem::path(out_dir) / "evaluate.manifest.json").string());
  return 0;
}

int run_report(const std::string& folds_path, const std::string& goals_csv,
               double budget_fraction, const std::string& out_dir,
               std::uint64_t seed) {
  std::vector<q2c::FoldResult> folds;
  std::vector<q2c::StaticPoint> static_stats;
  q2c::fold_results_from_json(read_json(folds_path), folds, static_stats);

  std::vector<q2c::GoalReport> reports;
  for (double r : parse_grid_flag(goals_csv))
    reports.push_back(q2c::matched_accuracy_metric(folds, static_stats, r));
  if (budget_fraction > 0)
    reports.push_back(
        q2c::budget_goal_metric(folds, static_stats, budget_fraction));

  std::filesystem::create_directories(out_dir);
  q2c::emit_report(reports, folds, static_stats, out_dir);
  for (const auto& report : reports)
    std::cout << (report.kind == q2c::GoalReport::Kind::kMatchedAccuracy
                      ? "accuracy goal "
                      : "budget fraction ")
              << report.goal_value << ": " << q2c::outcome_to_string(report)
              << "\n";

  Manifest manifest("report", seed);
  manifest.param("goals", goals_csv);
  manifest.param("budget_fraction", budget_fraction);
  manifest.input(folds_path);
  manifest.output((std::filesystem::path(out_dir) / "report.json").string());
  manifest.output((std::filesystem::path(out_dir) / "plot_data.csv").string());
  manifest.write(
      (std::filesystem::path(out_dir) / "report.manifest.json").string());
  return 0;
}

int run_serve(const std::string& artifact_path, const std::string& schema_path,
              const std::string& listen, const std::string& model) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos)
    throw q2c::Error("domain", "--listen must be host:port");
  const std::string host = listen.substr(0, colon);
  const int port = std::stoi(listen.substr(colon + 1));

  q2c::RoutingService service;
  service.load_artifact(artifact_path);

  LlmStack stack;
  if (!schema_path.empty()) {
    const auto schema = q2c::load_schema(schema_path);
    stack = make_llm_stack("");
    service.set_characterizer(stack.client.get(), model, schema);
  }

  const int bound = service.start(host, port);
  std::cout << "serving on " << host << ":" << bound << "\n";
  for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"per-query pipeline-configuration router"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "config file mirroring the flags");
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "base seed; all steps derive from it");

  auto* ingest = app.add_subcommand("ingest", "validate a trace, emit stats");
  TracePaths ingest_paths;
  add_trace_flags(ingest, ingest_paths);
  std::size_t ingest_min_cells = 20;
  std::string ingest_out_dir = ".";
  ingest->add_option("--min-cells", ingest_min_cells,
                     "minimum observed cells per config");
  ingest->add_option("--out-dir", ingest_out_dir, "output directory");

  auto* propose = app.add_subcommand("features-propose",
                                     "LLM-propose binary characteristics");
  std::string propose_queries, propose_model = "gpt-5-mini",
                               propose_cache_dir, propose_out = "schema.json";
  std::size_t propose_d = 10;
  propose->add_option("--queries", propose_queries, "queries JSONL")->required();
  propose->add_option("--d", propose_d, "number of characteristics");
  propose->add_option("--model", propose_model, "characterizer model id");
  propose->add_option("--cache-dir", propose_cache_dir, "LLM response cache");
  propose->add_option("--out", propose_out, "schema output path");

  auto* label = app.add_subcommand("features-label",
                                   "label queries against a schema");
  std::string label_queries, label_schema, label_model = "gpt-5-mini",
                             label_cache_dir, label_out = "features.jsonl",
                             label_out_schema;
  std::size_t label_parallelism = 4;
  double label_dedup = 0.99;
  label->add_option("--queries", label_queries, "queries JSONL")->required();
  label->add_option("--schema", label_schema, "schema file")->required();
  label->add_option("--model", label_model, "labeler model id");
  label->add_option("--cache-dir", label_cache_dir, "LLM response cache");
  label->add_option("--parallelism", label_parallelism, "concurrent requests");
  label->add_option("--dedup-threshold", label_dedup,
                    "drop constant and |corr|>threshold columns (0 disables)");
  label->add_option("--out", label_out, "feature vectors output path");
  label->add_option("--out-schema", label_out_schema,
                    "retained schema output (default <out>.schema.json)");

  auto* prune = app.add_subcommand("prune", "fuzzy Pareto pruning");
  TracePaths prune_paths;
  add_trace_flags(prune, prune_paths);
  double tau_acc = 0.02, tau_cost = 0.10;
  std::size_t prune_min_cells = 20;
  std::string prune_out = "retained.json";
  prune->add_option("--tau-acc", tau_acc, "accuracy tolerance");
  prune->add_option("--tau-cost", tau_cost, "cost tolerance");
  prune->add_option("--min-cells", prune_min_cells, "min cells per config");
  prune->add_option("--out", prune_out, "retained-set output path");

  auto* train = app.add_subcommand("train", "train the predictor bank");
  TracePaths train_paths;
  add_trace_flags(train, train_paths);
  std::string train_features, train_schema, train_retained,
      train_out = "bank.json";
  std::size_t train_trials = 30, train_inner = 3, train_parallelism = 0;
  train->add_option("--features", train_features, "feature vectors JSONL")
      ->required();
  train->add_option("--schema", train_schema, "schema file")->required();
  train->add_option("--retained", train_retained,
                    "retained-set file (default: all configs)");
  train->add_option("--trials", train_trials, "hyperparameter trials");
  train->add_option("--inner-folds", train_inner, "inner CV folds");
  train->add_option("--parallelism", train_parallelism,
                    "per-config training workers (0 = auto)");
  train->add_option("--out", train_out, "bank output path");

  auto* sweep = app.add_subcommand("sweep", "trace the lambda frontier");
  TracePaths sweep_paths;
  add_trace_flags(sweep, sweep_paths);
  std::string sweep_bank, sweep_features, sweep_grid,
      sweep_out = "calibration.json";
  std::size_t sweep_grid_size = 201;
  double sweep_char_cost = 0.0012;
  sweep->add_option("--bank", sweep_bank, "bank file")->required();
  sweep->add_option("--features", sweep_features, "feature vectors JSONL")
      ->required();
  sweep->add_option("--grid", sweep_grid, "explicit lambda grid (csv)");
  sweep->add_option("--grid-size", sweep_grid_size, "default grid size");
  sweep->add_option("--characterization-cost", sweep_char_cost,
                    "per-query characterization cost (USD)");
  sweep->add_option("--out", sweep_out, "calibration output path");

  auto* calibrate = app.add_subcommand(
      "calibrate", "resolve a target to lambda, emit the policy artifact");
  std::string cal_bank, cal_table, cal_configs, cal_out = "policy.json";
  double cal_floor = -1, cal_budget = -1, cal_lambda = -1,
         cal_char_cost = 0.0012;
  calibrate->add_option("--bank", cal_bank, "bank file")->required();
  calibrate->add_option("--calibration", cal_table, "calibration file")
      ->required();
  calibrate->add_option("--configs", cal_configs,
                        "configs JSONL (embeds knobs in the artifact)");
  calibrate->add_option("--accuracy-floor", cal_floor, "accuracy target A");
  calibrate->add_option("--cost-budget", cal_budget, "cost budget B (USD)");
  calibrate->add_option("--lambda", cal_lambda, "explicit lambda");
  calibrate->add_option("--characterization-cost", cal_char_cost,
                        "per-query characterization cost (USD)");
  calibrate->add_option("--out", cal_out, "policy artifact output path");

  auto* route = app.add_subcommand("route", "route offline feature vectors");
  std::string route_artifact, route_features, route_out = "decisions.jsonl";
  route->add_option("--artifact", route_artifact, "policy artifact")->required();
  route->add_option("--features-file", route_features, "feature vectors JSONL")
      ->required();
  route->add_option("--out", route_out, "decisions output path");

  auto* evaluate = app.add_subcommand("evaluate", "outer-CV goal evaluation");
  TracePaths eval_paths;
  add_trace_flags(evaluate, eval_paths);
  std::string eval_features, eval_schema, eval_goals = "1.0,0.95,0.90",
              eval_grid, eval_out_dir = "eval";
  q2c::EvalOptions eval_options;
  double eval_budget_fraction = 0.5;
  evaluate->add_option("--features", eval_features, "feature vectors JSONL")
      ->required();
  evaluate->add_option("--schema", eval_schema, "schema file")->required();
  evaluate->add_option("--folds", eval_options.folds, "outer folds");
  evaluate->add_option("--trials", eval_options.trials, "hyperparameter trials");
  evaluate->add_option("--inner-folds", eval_options.inner_folds,
                       "inner CV folds");
  evaluate->add_option("--tau-acc", eval_options.prune.tau_acc,
                       "prune accuracy tolerance");
  evaluate->add_option("--tau-cost", eval_options.prune.tau_cost,
                       "prune cost tolerance");
  evaluate->add_option("--goals", eval_goals, "accuracy ratios (csv)");
  evaluate->add_option("--budget-fraction", eval_budget_fraction,
                       "budget goal fraction (0 disables)");
  evaluate->add_option("--grid", eval_grid, "explicit lambda grid (csv)");
  evaluate->add_option("--grid-size", eval_options.grid_size,
                       "default grid size");
  evaluate->add_option("--characterization-cost",
                       eval_options.characterization_cost_usd,
                       "per-query characterization cost (USD)");
  evaluate->add_option("--min-cells", eval_options.min_cells,
                       "min cells per config on the train split");
  evaluate->add_option("--parallelism", eval_options.parallelism,
                       "per-config training workers (0 = auto)");
  evaluate->add_option("--out-dir", eval_out_dir, "output directory");

  auto* report = app.add_subcommand("report",
                                    "re-derive goal reports from folds.json");
  std::string report_folds, report_goals = "1.0,0.95,0.90",
              report_out_dir = "eval";
  double report_budget_fraction = 0.5;
  report->add_option("--folds-file", report_folds, "folds.json from evaluate")
      ->required();
  report->add_option("--goals", report_goals, "accuracy ratios (csv)");
  report->add_option("--budget-fraction", report_budget_fraction,
                     "budget goal fraction (0 disables)");
  report->add_option("--out-dir", report_out_dir, "output directory");

  auto* serve = app.add_subcommand("serve", "HTTP routing service");
  std::string serve_artifact, serve_schema, serve_listen = "127.0.0.1:8080",
              serve_model = "gpt-5-mini";
  serve->add_option("--artifact", serve_artifact, "policy artifact")->required();
  serve->add_option("--schema", serve_schema,
                    "schema file (enables query_text characterization)");
  serve->add_option("--listen", serve_listen, "host:port");
  serve->add_option("--model", serve_model, "characterizer model id");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest)
      return run_ingest(ingest_paths, ingest_min_cells, ingest_out_dir, seed);
    if (*propose)
      return run_features_propose(propose_queries, propose_d, propose_model,
                                  propose_cache_dir, propose_out, seed);
    if (*label)
      return run_features_label(label_queries, label_schema, label_model,
                                label_cache_dir, label_parallelism,
                                label_dedup, label_out, label_out_schema,
                                seed);
    if (*prune)
      return run_prune(prune_paths, tau_acc, tau_cost, prune_min_cells,
                       prune_out, seed);
    if (*train)
      return run_train(train_paths, train_features, train_schema,
                       train_retained, train_trials, train_inner, seed,
                       train_parallelism, train_out);
    if (*sweep)
      return run_sweep(sweep_paths, sweep_bank, sweep_features, sweep_grid,
                       sweep_grid_size, sweep_char_cost, sweep_out, seed);
    if (*calibrate)
      return run_calibrate(cal_bank, cal_table, cal_configs, cal_floor,
                           cal_budget, cal_lambda, cal_char_cost, cal_out,
                           seed);
    if (*route)
      return run_route(route_artifact, route_features, route_out, seed);
    if (*evaluate) {
      eval_options.seed = seed;
      if (!eval_grid.empty()) eval_options.grid = parse_grid_flag(eval_grid);
      return run_evaluate(eval_paths, eval_features, eval_schema, eval_options,
                          eval_goals, eval_budget_fraction, eval_out_dir);
    }
    if (*report)
      return run_report(report_folds, report_goals, report_budget_fraction,
                        report_out_dir, seed);
    if (*serve)
      return run_serve(serve_artifact, serve_schema, serve_listen, serve_model);
  } catch (const q2c::InfeasibleTargetError& e) {
    std::cerr << "error: infeasible: " << e.what() << " (nearest: lambda "
              << e.nearest_lambda << ", accuracy " << e.nearest_accuracy
              << ", cost " << e.nearest_cost << ")\n";
    return 5;
  } catch (const q2c::Error& e) {
    std::cerr << "error: " << e.tag() << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
