#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "q2c/llm.hpp"
#include "q2c/router.hpp"
#include "q2c/trace.hpp"

namespace q2c::test {

// Scriptable transport for featurizer and service tests.
class StubLlm : public LlmClient {
public:
  using Handler = std::function<std::string(const LlmRequest&, bool)>;

  explicit StubLlm(Handler handler) : handler_(std::move(handler)) {}

  std::string complete(const LlmRequest& req, bool bypass_cache) override {
    calls_.fetch_add(1);
    return handler_(req, bypass_cache);
  }
  using LlmClient::complete;

  int calls() const { return calls_.load(); }

private:
  Handler handler_;
  std::atomic<int> calls_{0};
};

inline std::string fresh_tmp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("q2c_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  out << content;
}

// Twelve queries by three synthesis strategies, with per-cell accuracy
// fractions and dollar costs. Used as a replay oracle: p_hat equals each
// query's per-config accuracy, so lambda = 0 routing is exactly the max-
// accuracy / min-mean-cost choice.
struct StrategyFixture {
  ProfilingTrace trace;
  ScoreMatrix oracle;
  TruthTable truth;
};

inline StrategyFixture make_strategy_fixture() {
  struct Row {
    const char* qid;
    double acc[3];   // llm_only, per_chunk_summary, iterative_retrieval
    double cost[3];
  };
  static const Row rows[] = {
      {"q486", {1.0, 0.8, 1.0}, {0.0002, 0.1033, 0.1332}},
      {"q1208", {0.0, 1.0, 0.1}, {0.0001, 0.0497, 0.7941}},
      {"q694", {0.0, 0.0, 1.0}, {0.0001, 0.0514, 0.1595}},
      {"q46", {0.0, 1.0, 1.0}, {0.0001, 0.0496, 0.0455}},
      {"q540", {0.0, 1.0, 1.0}, {0.0001, 0.0494, 1.2930}},
      {"q665", {0.6, 0.2, 1.0}, {0.0001, 0.1659, 0.0251}},
      {"q719", {0.0, 0.0, 0.9}, {0.0001, 0.1144, 1.4808}},
      {"q793", {0.1, 0.5, 0.9}, {0.0001, 0.0251, 1.0782}},
      {"q843", {0.0, 0.0, 0.0}, {0.0001, 0.1441, 1.4018}},
      {"q932", {0.0, 0.0, 1.0}, {0.0001, 0.0667, 1.4388}},
      {"q980", {0.0, 0.0, 0.3}, {0.0001, 0.0789, 0.2986}},
      {"q1238", {0.9, 0.1, 0.9}, {0.0001, 0.1105, 1.3147}},
  };
  static const char* config_ids[3] = {"llm_only", "per_chunk_summary",
                                      "iterative_retrieval"};

  std::vector<QueryRecord> queries;
  std::vector<ConfigDescriptor> configs;
  std::vector<OutcomeCell> cells;
  for (int c = 0; c < 3; ++c)
    configs.push_back({config_ids[c], {{"synthesis", config_ids[c]}}});
  for (const auto& row : rows) {
    queries.push_back({row.qid, std::string("question ") + row.qid});
    for (int c = 0; c < 3; ++c)
      cells.push_back({row.qid, config_ids[c], row.acc[c], row.cost[c]});
  }
  ProfilingTrace trace(queries, configs, cells);

  // ScoreMatrix wants ascending config ids.
  std::vector<std::string> sorted_ids = {"iterative_retrieval", "llm_only",
                                         "per_chunk_summary"};
  double mean_cost[3] = {0.0, 0.0, 0.0};
  for (const auto& row : rows)
    for (int c = 0; c < 3; ++c) mean_cost[c] += row.cost[c] / 12.0;

  ScoreMatrix oracle;
  oracle.config_ids = sorted_ids;
  for (const auto& cid : sorted_ids) {
    int c = cid == "llm_only" ? 0 : (cid == "per_chunk_summary" ? 1 : 2);
    oracle.mean_costs.push_back(mean_cost[c]);
  }
  for (const auto& row : rows) {
    oracle.query_ids.push_back(row.qid);
    for (const auto& cid : sorted_ids) {
      int c = cid == "llm_only" ? 0 : (cid == "per_chunk_summary" ? 1 : 2);
      oracle.p_hat.push_back(row.acc[c]);
    }
  }

  TruthTable truth;
  for (const auto& cell : trace.cells())
    truth[{cell.query_id, cell.config_id}] = {cell.correct, cell.cost_usd};

  return StrategyFixture{std::move(trace), std::move(oracle), std::move(truth)};
}

}  // namespace q2c::test
