#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "q2c/errors.hpp"
#include "q2c/router.hpp"
#include "q2c/rng.hpp"

using namespace q2c;

namespace {

TrainedPredictor constant_predictor(const std::string& cid, double p) {
  TrainedPredictor model;
  model.config_id = cid;
  model.spec.family = ModelFamily::kConstant;
  model.constant_p = p;
  return model;
}

TrainedPredictor logistic_predictor(const std::string& cid,
                                    std::vector<double> w, double b) {
  TrainedPredictor model;
  model.config_id = cid;
  model.spec.family = ModelFamily::kLogistic;
  model.dim = w.size();
  model.weights = std::move(w);
  model.bias = b;
  return model;
}

std::shared_ptr<const PredictorBank> constant_bank(
    const std::vector<std::tuple<std::string, double, double>>& rows) {
  auto bank = std::make_shared<PredictorBank>();
  bank->schema_digest = "test";
  for (const auto& [cid, p, cost] : rows) {
    bank->predictors.emplace(cid, constant_predictor(cid, p));
    bank->mean_costs[cid] = cost;
  }
  return bank;
}

// Independent selection oracle: exhaustive scan, then the stated tie-break.
std::string oracle_select(const std::vector<std::string>& ids,
                          const std::vector<double>& p,
                          const std::vector<double>& costs, double lambda) {
  double best = -1e300;
  for (std::size_t i = 0; i < ids.size(); ++i)
    best = std::max(best, p[i] - lambda * costs[i]);
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (best - (p[i] - lambda * costs[i]) <= 1e-12) tied.push_back(i);
  std::sort(tied.begin(), tied.end(), [&](std::size_t a, std::size_t b) {
    if (costs[a] != costs[b]) return costs[a] < costs[b];
    return ids[a] < ids[b];
  });
  return ids[tied.front()];
}

}  // namespace

TEST_CASE("lambda zero routes to the accuracy argmax") {
  RoutingPolicy policy{constant_bank({{"a", 0.9, 1.0}, {"b", 0.7, 0.1}}), 0.0};
  const auto decision = route(policy, FeatureVector{"q", {}});
  CHECK(decision.config_id == "a");
  CHECK(decision.p_hat == 0.9);
  CHECK(decision.score == 0.9);
  REQUIRE(decision.runner_up.has_value());
  CHECK(decision.runner_up->first == "b");
}

TEST_CASE("large lambda flips the choice to the cheap config") {
  RoutingPolicy policy{constant_bank({{"a", 0.9, 1.0}, {"b", 0.7, 0.1}}), 10.0};
  const auto decision = route(policy, FeatureVector{"q", {}});
  CHECK(decision.config_id == "b");
  CHECK(decision.score == doctest::Approx(0.7 - 1.0).epsilon(1e-12));
}

TEST_CASE("score ties break to the cheaper config") {
  RoutingPolicy policy{constant_bank({{"x", 0.8, 1.0}, {"y", 0.8, 0.1}}), 0.0};
  CHECK(route(policy, FeatureVector{"q", {}}).config_id == "y");
}

TEST_CASE("equal cost ties break lexicographically") {
  RoutingPolicy policy{constant_bank({{"bb", 0.8, 0.5}, {"aa", 0.8, 0.5}}), 0.0};
  CHECK(route(policy, FeatureVector{"q", {}}).config_id == "aa");
}

TEST_CASE("route validates inputs") {
  RoutingPolicy empty;
  CHECK_THROWS_AS(route(empty, FeatureVector{"q", {}}), IntegrityError);

  auto bank = std::make_shared<PredictorBank>();
  bank->schema_digest = "test";
  bank->predictors.emplace("a", logistic_predictor("a", {1.0, 1.0}, 0.0));
  bank->mean_costs["a"] = 0.5;
  RoutingPolicy policy{bank, 0.0};
  CHECK_THROWS_AS(route(policy, FeatureVector{"q", {1.0}}), Error);
}

TEST_CASE("route matches the exhaustive oracle on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_configs = 2 + rng.uniform_index(12);
    const std::size_t d = 1 + rng.uniform_index(6);
    auto bank = std::make_shared<PredictorBank>();
    bank->schema_digest = "oracle";
    for (std::size_t c = 0; c < n_configs; ++c) {
      const std::string cid = "c" + std::to_string(c);
      std::vector<double> w(d);
      for (auto& v : w) v = rng.normal();
      bank->predictors.emplace(cid, logistic_predictor(cid, w, rng.normal()));
      bank->mean_costs[cid] = rng.log_uniform(1e-4, 2.0);
    }
    FeatureVector fv{"q", {}};
    for (std::size_t j = 0; j < d; ++j)
      fv.values.push_back(rng.uniform() < 0.5 ? 0.0 : 1.0);
    const double lambda =
        trial % 10 == 0 ? 0.0 : rng.log_uniform(1e-4, 1e4);

    RoutingPolicy policy{bank, lambda};
    const auto decision = route(policy, fv);

    std::vector<std::string> ids;
    std::vector<double> p, costs;
    for (const auto& [cid, pred] : bank->predictors) {
      ids.push_back(cid);
      p.push_back(pred.predict(fv.values));
      costs.push_back(bank->mean_costs.at(cid));
    }
    CHECK(decision.config_id == oracle_select(ids, p, costs, lambda));
  }
}

TEST_CASE("chosen cost and p_hat are non-increasing in lambda") {
  Rng rng(4096);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n_configs = 2 + rng.uniform_index(10);
    auto bank = std::make_shared<PredictorBank>();
    bank->schema_digest = "mono";
    std::vector<ConfigStats> stats;
    for (std::size_t c = 0; c < n_configs; ++c) {
      const std::string cid = "c" + std::to_string(c);
      bank->predictors.emplace(cid, constant_predictor(cid, rng.uniform()));
      bank->mean_costs[cid] = rng.log_uniform(1e-4, 1.0);
      stats.push_back({cid, 0.5, bank->mean_costs[cid], 1});
    }
    const auto grid = default_lambda_grid(stats, 51);
    const FeatureVector fv{"q", {}};

    double prev_cost = 1e300, prev_p = 1e300;
    for (double lambda : grid) {
      const auto decision = route(RoutingPolicy{bank, lambda}, fv);
      CHECK(decision.mean_cost <= prev_cost + 1e-9);
      CHECK(decision.p_hat <= prev_p + 1e-9);
      prev_cost = decision.mean_cost;
      prev_p = decision.p_hat;
    }
  }
}

TEST_CASE("lambda limits: zero is accuracy argmax, large is min cost") {
  Rng rng(8192);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n_configs = 2 + rng.uniform_index(8);
    auto bank = std::make_shared<PredictorBank>();
    bank->schema_digest = "limits";
    std::vector<std::string> ids;
    std::vector<double> p, costs;
    for (std::size_t c = 0; c < n_configs; ++c) {
      const std::string cid = "c" + std::to_string(c);
      const double pc = rng.uniform();
      bank->predictors.emplace(cid, constant_predictor(cid, pc));
      bank->mean_costs[cid] = rng.log_uniform(1e-3, 1.0);
      ids.push_back(cid);
      p.push_back(pc);
      costs.push_back(bank->mean_costs[cid]);
    }
    const FeatureVector fv{"q", {}};

    CHECK(route(RoutingPolicy{bank, 0.0}, fv).config_id ==
          oracle_select(ids, p, costs, 0.0));

    // Beyond (max p spread) / (min positive cost gap) only cost matters.
    double min_gap = 1e300;
    std::vector<double> sorted_costs = costs;
    std::sort(sorted_costs.begin(), sorted_costs.end());
    for (std::size_t i = 1; i < sorted_costs.size(); ++i) {
      const double gap = sorted_costs[i] - sorted_costs[i - 1];
      if (gap > 0) min_gap = std::min(min_gap, gap);
    }
    const double spread =
        *std::max_element(p.begin(), p.end()) -
        *std::min_element(p.begin(), p.end());
    const double big_lambda =
        min_gap < 1e300 ? 2.0 * (spread + 1.0) / min_gap : 1.0;
    const auto cheap = route(RoutingPolicy{bank, big_lambda}, fv);
    CHECK(cheap.mean_cost == sorted_costs.front());
  }
}

TEST_CASE("scaling costs by s and lambda by 1/s preserves decisions") {
  Rng rng(555);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_configs = 2 + rng.uniform_index(9);
    std::vector<std::tuple<std::string, double, double>> rows;
    for (std::size_t c = 0; c < n_configs; ++c)
      rows.emplace_back("c" + std::to_string(c), rng.uniform(),
                        rng.log_uniform(1e-3, 1.0));
    const double lambda = rng.log_uniform(1e-2, 1e2);
    const double s = rng.log_uniform(1e-2, 1e2);

    auto scaled_rows = rows;
    for (auto& [cid, p, cost] : scaled_rows) cost *= s;

    const FeatureVector fv{"q", {}};
    const auto base =
        route(RoutingPolicy{constant_bank(rows), lambda}, fv);
    const auto scaled =
        route(RoutingPolicy{constant_bank(scaled_rows), lambda / s}, fv);
    CHECK(base.config_id == scaled.config_id);
  }
}

TEST_CASE("oracle replay of the strategy fixture at lambda zero") {
  const auto fixture = test::make_strategy_fixture();
  const auto table =
      sweep_lambda(fixture.oracle, fixture.truth, {0.0}, /*char cost*/ 0.0);
  REQUIRE(table.points.size() == 1);
  CHECK(table.points[0].mean_accuracy ==
        doctest::Approx(1000.0 / 1200.0).epsilon(1e-9));
  CHECK(table.points[0].mean_cost ==
        doctest::Approx(0.3858416666666667).epsilon(1e-9));
  CHECK(table.points[0].fallback_cells == 0);
}

TEST_CASE("characterization cost is added per query") {
  const auto fixture = test::make_strategy_fixture();
  const auto plain =
      sweep_lambda(fixture.oracle, fixture.truth, {0.0}, 0.0);
  const auto charged =
      sweep_lambda(fixture.oracle, fixture.truth, {0.0}, 0.0012);
  CHECK(charged.points[0].mean_cost ==
        doctest::Approx(plain.points[0].mean_cost + 0.0012).epsilon(1e-12));
  CHECK(charged.points[0].mean_accuracy == plain.points[0].mean_accuracy);
}

TEST_CASE("huge lambda sweeps to the min-mean-cost config") {
  const auto fixture = test::make_strategy_fixture();
  // llm_only has the smallest mean cost; its realized means are the limit.
  const auto table =
      sweep_lambda(fixture.oracle, fixture.truth, {1e9}, 0.0);
  CHECK(table.points[0].mean_accuracy ==
        doctest::Approx(2.6 / 12.0).epsilon(1e-12));
  CHECK(table.points[0].mean_cost ==
        doctest::Approx(0.0013 / 12.0).epsilon(1e-12));
}

TEST_CASE("sweep produces one point per grid entry, ascending") {
  const auto fixture = test::make_strategy_fixture();
  std::vector<double> grid;
  for (int i = 0; i < 17; ++i) grid.push_back(i * 0.37);
  const auto table = sweep_lambda(fixture.oracle, fixture.truth, grid, 0.0);
  REQUIRE(table.points.size() == 17);
  for (std::size_t i = 0; i < 17; ++i)
    CHECK(table.points[i].lambda == grid[i]);
}

TEST_CASE("missing truth cells fall back to config means and are flagged") {
  auto fixture = test::make_strategy_fixture();
  fixture.truth.erase({"q486", "llm_only"});
  const auto table = sweep_lambda(fixture.oracle, fixture.truth, {0.0}, 0.0);
  CHECK(table.points[0].fallback_cells == 1);
}

TEST_CASE("default lambda grid spans the documented endpoints") {
  std::vector<ConfigStats> stats = {{"a", 0.5, 0.05, 1},
                                    {"b", 0.6, 0.10, 1},
                                    {"c", 0.7, 0.20, 1}};
  // median mean cost = 0.1
  const auto grid = default_lambda_grid(stats, 4);
  REQUIRE(grid.size() == 4);
  CHECK(grid[0] == 0.0);
  CHECK(grid[1] == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(grid[2] == doctest::Approx(std::sqrt(1e-5 * 1e4)).epsilon(1e-12));
  CHECK(grid[3] == doctest::Approx(1e4).epsilon(1e-12));
}

TEST_CASE("default grid is strictly increasing at the default size") {
  std::vector<ConfigStats> stats = {{"a", 0.5, 0.31, 1}, {"b", 0.4, 0.02, 1}};
  const auto grid = default_lambda_grid(stats, 201);
  REQUIRE(grid.size() == 201);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
}

TEST_CASE("default grid rejects all-zero costs") {
  std::vector<ConfigStats> stats = {{"a", 0.5, 0.0, 1}, {"b", 0.4, 0.0, 1}};
  CHECK_THROWS_AS(default_lambda_grid(stats, 10), IntegrityError);
}

namespace {

CalibrationTable two_point_table() {
  CalibrationTable table;
  table.points.push_back({0.0, 0.83, 0.40, 0});
  table.points.push_back({5.0, 0.75, 0.08, 0});
  table.pareto_indices = {0, 1};
  return table;
}

}  // namespace

TEST_CASE("calibrate maps accuracy floors to the cheapest feasible point") {
  const auto choice = calibrate(two_point_table(), Target::accuracy_floor(0.80));
  CHECK(choice.lambda == 0.0);
  CHECK(choice.point.mean_accuracy >= 0.80);
}

TEST_CASE("calibrate maps budgets to the most accurate feasible point") {
  const auto choice = calibrate(two_point_table(), Target::cost_budget(0.10));
  CHECK(choice.lambda == 5.0);
  CHECK(choice.point.mean_cost <= 0.10);
}

TEST_CASE("infeasible accuracy floor reports the nearest achievable point") {
  try {
    calibrate(two_point_table(), Target::accuracy_floor(0.99));
    FAIL("expected InfeasibleTargetError");
  } catch (const InfeasibleTargetError& e) {
    CHECK(e.nearest_accuracy == doctest::Approx(0.83));
    CHECK(e.nearest_cost == doctest::Approx(0.40));
  }
}

TEST_CASE("infeasible budget reports the cheapest point") {
  try {
    calibrate(two_point_table(), Target::cost_budget(0.01));
    FAIL("expected InfeasibleTargetError");
  } catch (const InfeasibleTargetError& e) {
    CHECK(e.nearest_cost == doctest::Approx(0.08));
  }
}

TEST_CASE("calibrate satisfies its own constraint on random tables") {
  Rng rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    CalibrationTable table;
    const std::size_t n = 2 + rng.uniform_index(30);
    double lambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      table.points.push_back({lambda, rng.uniform(), rng.log_uniform(0.01, 1.0), 0});
      lambda += 0.1 + rng.uniform();
    }
    for (std::size_t i = 0; i < n; ++i) table.pareto_indices.push_back(i);
    // Keep only actually non-dominated indices for the table invariant.
    std::vector<std::size_t> pareto;
    for (std::size_t i = 0; i < n; ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (table.points[j].mean_cost <= table.points[i].mean_cost &&
            table.points[j].mean_accuracy >= table.points[i].mean_accuracy &&
            (table.points[j].mean_cost < table.points[i].mean_cost ||
             table.points[j].mean_accuracy > table.points[i].mean_accuracy))
          dominated = true;
      }
      if (!dominated) pareto.push_back(i);
    }
    table.pareto_indices = pareto;

    const double floor = rng.uniform();
    try {
      const auto choice = calibrate(table, Target::accuracy_floor(floor));
      CHECK(choice.point.mean_accuracy >= floor);
    } catch (const InfeasibleTargetError&) {
    }
    const double budget = rng.log_uniform(0.01, 1.0);
    try {
      const auto choice = calibrate(table, Target::cost_budget(budget));
      CHECK(choice.point.mean_cost <= budget);
    } catch (const InfeasibleTargetError&) {
    }
  }
}

TEST_CASE("retarget changes only lambda") {
  RoutingPolicy policy{constant_bank({{"a", 0.9, 1.0}, {"b", 0.7, 0.1}}), 0.0};
  const auto same = retarget(policy, policy.lambda);
  const auto moved = retarget(policy, 10.0);
  const FeatureVector fv{"q", {}};
  CHECK(route(same, fv).config_id == route(policy, fv).config_id);
  CHECK(moved.bank.get() == policy.bank.get());  // shared, untouched
  const RoutingPolicy fresh{policy.bank, 10.0};
  CHECK(route(moved, fv).config_id == route(fresh, fv).config_id);
  CHECK_THROWS_AS(retarget(policy, -1.0), Error);
}

TEST_CASE("calibration csv export has a pareto flag column") {
  const auto csv = calibration_to_csv(two_point_table());
  CHECK(csv.find("lambda,mean_accuracy,mean_cost,pareto") == 0);
  CHECK(csv.find(",1\n") != std::string::npos);
}
