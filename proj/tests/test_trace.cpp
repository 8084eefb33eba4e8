#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "q2c/errors.hpp"
#include "q2c/trace.hpp"

using namespace q2c;

namespace {

void write_minimal_trace(const std::string& dir) {
  test::write_file(dir + "/queries.jsonl",
                   R"({"query_id":"q1","text":"first question"})"
                   "\n"
                   R"({"query_id":"q2","text":"second question"})"
                   "\n"
                   R"({"query_id":"q3","text":"third question"})"
                   "\n");
  test::write_file(dir + "/configs.jsonl",
                   R"({"config_id":"a","knobs":{"llm":"small","k":"5"}})"
                   "\n"
                   R"({"config_id":"b"})"
                   "\n");
  test::write_file(dir + "/cells.jsonl",
                   R"({"query_id":"q1","config_id":"a","correct":1,"cost_usd":0.10})"
                   "\n"
                   R"({"query_id":"q1","config_id":"b","correct":0,"cost_usd":0.01})"
                   "\n"
                   R"({"query_id":"q2","config_id":"a","correct":0,"cost_usd":0.30})"
                   "\n"
                   R"({"query_id":"q2","config_id":"b","correct":1,"cost_usd":0.02})"
                   "\n"
                   R"({"query_id":"q3","config_id":"a","correct":1,"cost_usd":0.20})"
                   "\n"
                   R"({"query_id":"q3","config_id":"b","correct":1,"cost_usd":0.03,"extra_field":"ignored"})"
                   "\n");
}

}  // namespace

TEST_CASE("load_trace accepts a minimal well-formed trace") {
  const auto dir = test::fresh_tmp_dir("trace");
  write_minimal_trace(dir);
  const auto trace = load_trace(dir + "/queries.jsonl", dir + "/configs.jsonl",
                                dir + "/cells.jsonl");
  CHECK(trace.n_queries() == 3);
  CHECK(trace.n_configs() == 2);
  CHECK(trace.cells().size() == 6);
  CHECK(trace.find_config("a")->knobs.size() == 2);
  CHECK(trace.find_config("a")->knobs[0].first == "llm");
  CHECK(trace.find_cell("q2", "b")->correct == 1.0);
  CHECK(trace.find_cell("q9", "a") == nullptr);
}

TEST_CASE("load_trace is idempotent") {
  const auto dir = test::fresh_tmp_dir("trace");
  write_minimal_trace(dir);
  const auto a = load_trace(dir + "/queries.jsonl", dir + "/configs.jsonl",
                            dir + "/cells.jsonl");
  const auto b = load_trace(dir + "/queries.jsonl", dir + "/configs.jsonl",
                            dir + "/cells.jsonl");
  REQUIRE(a.cells().size() == b.cells().size());
  for (std::size_t i = 0; i < a.cells().size(); ++i) {
    CHECK(a.cells()[i].query_id == b.cells()[i].query_id);
    CHECK(a.cells()[i].config_id == b.cells()[i].config_id);
    CHECK(a.cells()[i].correct == b.cells()[i].correct);
    CHECK(a.cells()[i].cost_usd == b.cells()[i].cost_usd);
  }
}

TEST_CASE("load_trace rejects dangling config references by name") {
  const auto dir = test::fresh_tmp_dir("trace");
  write_minimal_trace(dir);
  test::write_file(dir + "/cells.jsonl",
                   R"({"query_id":"q1","config_id":"x9","correct":1,"cost_usd":0.1})"
                   "\n");
  CHECK_THROWS_WITH_AS(load_trace(dir + "/queries.jsonl",
                                  dir + "/configs.jsonl", dir + "/cells.jsonl"),
                       doctest::Contains("x9"), IntegrityError);
}

TEST_CASE("load_trace rejects negative cost with the line number") {
  const auto dir = test::fresh_tmp_dir("trace");
  write_minimal_trace(dir);
  test::write_file(dir + "/cells.jsonl",
                   R"({"query_id":"q1","config_id":"a","correct":1,"cost_usd":-0.01})"
                   "\n");
  CHECK_THROWS_WITH_AS(load_trace(dir + "/queries.jsonl",
                                  dir + "/configs.jsonl", dir + "/cells.jsonl"),
                       doctest::Contains(":1"), ParseError);
}

TEST_CASE("load_trace rejects duplicate cells and malformed lines") {
  const auto dir = test::fresh_tmp_dir("trace");
  write_minimal_trace(dir);
  SUBCASE("duplicate cell") {
    test::write_file(
        dir + "/cells.jsonl",
        R"({"query_id":"q1","config_id":"a","correct":1,"cost_usd":0.1})"
        "\n"
        R"({"query_id":"q1","config_id":"a","correct":0,"cost_usd":0.2})"
        "\n");
    CHECK_THROWS_AS(load_trace(dir + "/queries.jsonl", dir + "/configs.jsonl",
                               dir + "/cells.jsonl"),
                    IntegrityError);
  }
  SUBCASE("malformed json reports the line") {
    test::write_file(
        dir + "/cells.jsonl",
        R"({"query_id":"q1","config_id":"a","correct":1,"cost_usd":0.1})"
        "\n"
        "not json\n");
    CHECK_THROWS_WITH_AS(load_trace(dir + "/queries.jsonl",
                                    dir + "/configs.jsonl",
                                    dir + "/cells.jsonl"),
                         doctest::Contains(":2"), ParseError);
  }
  SUBCASE("fractional correct accepted as repeated-run mean") {
    test::write_file(
        dir + "/cells.jsonl",
        R"({"query_id":"q1","config_id":"a","correct":0.3,"cost_usd":0.1})"
        "\n");
    const auto trace = load_trace(dir + "/queries.jsonl",
                                  dir + "/configs.jsonl", dir + "/cells.jsonl");
    CHECK(trace.cells()[0].correct == 0.3);
  }
  SUBCASE("correct above one rejected") {
    test::write_file(
        dir + "/cells.jsonl",
        R"({"query_id":"q1","config_id":"a","correct":1.5,"cost_usd":0.1})"
        "\n");
    CHECK_THROWS_AS(load_trace(dir + "/queries.jsonl", dir + "/configs.jsonl",
                               dir + "/cells.jsonl"),
                    ParseError);
  }
}

TEST_CASE("compute_stats averages observed cells") {
  std::vector<QueryRecord> queries = {{"q1", "one"}, {"q2", "two"}};
  std::vector<ConfigDescriptor> configs = {{"a", {}}};
  std::vector<OutcomeCell> cells = {{"q1", "a", 1.0, 0.10},
                                    {"q2", "a", 0.0, 0.30}};
  const ProfilingTrace trace(queries, configs, cells);
  const auto result = compute_stats(trace, 1);
  REQUIRE(result.stats.size() == 1);
  CHECK(result.stats[0].mean_accuracy == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(result.stats[0].mean_cost == doctest::Approx(0.20).epsilon(1e-12));
  CHECK(result.stats[0].n_observed == 2);
}

TEST_CASE("compute_stats matches the published per-strategy column means") {
  const auto fixture = test::make_strategy_fixture();
  const auto result = compute_stats(fixture.trace, 1);
  REQUIRE(result.stats.size() == 3);
  for (const auto& s : result.stats) {
    if (s.config_id == "iterative_retrieval") {
      CHECK(s.mean_accuracy == doctest::Approx(910.0 / 1200.0).epsilon(1e-12));
      CHECK(s.mean_cost == doctest::Approx(0.7886083333333334).epsilon(1e-12));
      CHECK(s.n_observed == 12);
    }
  }
}

TEST_CASE("compute_stats omits configs below min_cells with a warning list") {
  std::vector<QueryRecord> queries;
  std::vector<OutcomeCell> cells;
  for (int i = 0; i < 25; ++i) {
    const std::string qid = "q" + std::to_string(i);
    queries.push_back({qid, "text"});
    cells.push_back({qid, "big", 1.0, 0.1});
    if (i < 5) cells.push_back({qid, "small", 1.0, 0.1});
  }
  std::vector<ConfigDescriptor> configs = {{"big", {}}, {"small", {}}};
  const ProfilingTrace trace(queries, configs, cells);

  const auto result = compute_stats(trace, 20);
  REQUIRE(result.stats.size() == 1);
  CHECK(result.stats[0].config_id == "big");
  REQUIRE(result.below_min_cells.size() == 1);
  CHECK(result.below_min_cells[0] == "small");

  CHECK_THROWS_AS(compute_stats(trace, 26), IntegrityError);
}

TEST_CASE("compute_stats means equal brute-force means") {
  const auto fixture = test::make_strategy_fixture();
  const auto result = compute_stats(fixture.trace, 1);
  for (const auto& s : result.stats) {
    double acc = 0.0, cost = 0.0;
    std::size_t n = 0;
    for (const auto& cell : fixture.trace.cells()) {
      if (cell.config_id != s.config_id) continue;
      acc += cell.correct;
      cost += cell.cost_usd;
      ++n;
    }
    CHECK(std::abs(s.mean_accuracy - acc / double(n)) <= 1e-12);
    CHECK(std::abs(s.mean_cost - cost / double(n)) <= 1e-12);
    CHECK(s.n_observed == n);
  }
}

namespace {

ProfilingTrace n_query_trace(int n) {
  std::vector<QueryRecord> queries;
  std::vector<OutcomeCell> cells;
  for (int i = 0; i < n; ++i) {
    const std::string qid = "q" + std::to_string(i);
    queries.push_back({qid, "text"});
    cells.push_back({qid, "a", 1.0, 0.1});
  }
  return ProfilingTrace(queries, {{"a", {}}}, cells);
}

}  // namespace

TEST_CASE("split_folds partitions deterministically") {
  const auto trace = n_query_trace(10);
  const auto folds = split_folds(trace, 5, 7);
  REQUIRE(folds.size() == 5);
  std::set<std::string> seen;
  for (const auto& fold : folds) {
    CHECK(fold.size() == 2);
    for (const auto& id : fold) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == 10);

  const auto again = split_folds(trace, 5, 7);
  CHECK(folds == again);
  const auto other_seed = split_folds(trace, 5, 8);
  CHECK(folds != other_seed);
}

TEST_CASE("split_folds distributes the remainder") {
  const auto trace = n_query_trace(11);
  const auto folds = split_folds(trace, 5, 3);
  std::multiset<std::size_t> sizes;
  for (const auto& fold : folds) sizes.insert(fold.size());
  CHECK(sizes == std::multiset<std::size_t>{3, 2, 2, 2, 2});
}

TEST_CASE("split_folds rejects infeasible splits") {
  const auto trace = n_query_trace(3);
  CHECK_THROWS_AS(split_folds(trace, 5, 1), IntegrityError);
  CHECK_THROWS_AS(split_folds(trace, 1, 1), IntegrityError);
}

TEST_CASE("sub-cent costs keep full precision through load and stats") {
  const auto dir = test::fresh_tmp_dir("trace");
  test::write_file(dir + "/queries.jsonl",
                   R"({"query_id":"q1","text":"t"})"
                   "\n"
                   R"({"query_id":"q2","text":"t"})"
                   "\n");
  test::write_file(dir + "/configs.jsonl", R"({"config_id":"a"})"
                                           "\n");
  test::write_file(dir + "/cells.jsonl",
                   R"({"query_id":"q1","config_id":"a","correct":1,"cost_usd":0.000123456789})"
                   "\n"
                   R"({"query_id":"q2","config_id":"a","correct":0,"cost_usd":0.000123456791})"
                   "\n");
  const auto trace = load_trace(dir + "/queries.jsonl", dir + "/configs.jsonl",
                                dir + "/cells.jsonl");
  CHECK(trace.cells()[0].cost_usd == 0.000123456789);
  const auto stats = compute_stats(trace, 1);
  CHECK(stats.stats[0].mean_cost ==
        doctest::Approx((0.000123456789 + 0.000123456791) / 2.0)
            .epsilon(1e-15));
}

TEST_CASE("trace construction enforces invariants") {
  CHECK_THROWS_AS(ProfilingTrace({{"q1", "text"}, {"q1", "text"}}, {{"a", {}}},
                                 {{"q1", "a", 1.0, 0.1}}),
                  IntegrityError);
  CHECK_THROWS_AS(ProfilingTrace({{"q1", ""}}, {{"a", {}}},
                                 {{"q1", "a", 1.0, 0.1}}),
                  IntegrityError);
  CHECK_THROWS_AS(ProfilingTrace({{"q1", "text"}}, {{"a", {}}}, {}),
                  IntegrityError);
}
