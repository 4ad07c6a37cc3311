#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hexfleet/errors.hpp"
#include "hexfleet/eval.hpp"
#include "hexfleet/experiments.hpp"
#include "hexfleet/ingest.hpp"
#include "hexfleet/learner.hpp"
#include "helpers.hpp"

using namespace hexfleet;

namespace {

// Two zones trading one passenger per step in each direction.
Scenario shuttle_city(int horizon) {
  auto mx = testing::flat_matrices(horizon, 2, 1, 0.5);
  for (int t = 0; t < horizon; ++t) {
    mx.demand(t, 0, 1) = 1;
    mx.demand(t, 1, 0) = 1;
    mx.reward(t, 0, 1) = 4.0;
    mx.reward(t, 1, 0) = 4.0;
  }
  return testing::make_scenario(testing::pair_grid(), mx);
}

Scenario small_synthetic(std::uint64_t seed) {
  SyntheticCityParams p;
  p.radius = 2;
  p.horizon = 16;
  p.base_rate = 0.08;
  p.seed = seed;
  p.hotspots = {{0, 8.0, 1.0, 2.0, HotspotDirection::Outbound}};
  return generate_synthetic_city(p);
}

}  // namespace

TEST_CASE("box statistics") {
  const auto b = box_stats({4.0, 1.0, 100.0, 2.0, 3.0});
  CHECK(b.count == 5);
  CHECK(b.mean == doctest::Approx(22.0));
  CHECK(b.q1 == 2.0);
  CHECK(b.median == 3.0);
  CHECK(b.q3 == 4.0);
  CHECK(b.iqr() == 2.0);
  CHECK(b.whisker_low == 1.0);
  CHECK(b.whisker_high == 4.0);

  const std::vector<double> sorted{0.0, 10.0};
  CHECK(quantile(sorted, 0.25) == 2.5);
  CHECK(box_stats({}).count == 0);
}

TEST_CASE("unmet wait-time buckets") {
  EpisodeTrace tr;
  tr.horizon = 8;
  tr.zones = 1;
  tr.supply = {0, 0, 3, 0, 0, 0, 0, 0};
  tr.fulfilled = {0, 0, 1, 0, 0, 0, 0, 0};
  tr.unmet = {{0, 0, 2}, {1, 0, 1}, {4, 0, 5}};
  const auto h = unmet_wait_times(tr, 5);
  CHECK(h.within_5 == 1);
  CHECK(h.within_10 == 2);
  CHECK(h.within_15 == 0);
  CHECK(h.beyond_15 == 5);
  const auto f = h.fractions();
  CHECK(f[0] + f[1] + f[2] + f[3] == doctest::Approx(1.0));
  CHECK(WaitTimeHistogram{}.fractions() == std::vector<double>(4, 0.0));
}

TEST_CASE("evaluation of a zero-demand city") {
  const auto s = testing::make_scenario(HexGrid::filled_hexagon(1), testing::flat_matrices(6, 7));
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto r = evaluate(PolicyTables(6, 7), s, 5, seeds, ObjectiveMode::MaxEarnings, EvalOptions{});
  CHECK(r.zero_demand);
  CHECK(r.fulfillment_pct == 100.0);
  CHECK(r.mean_earnings == 0.0);
  CHECK(r.episodes == 2);
}

TEST_CASE("always waiting with enough supply serves everyone") {
  const auto s = shuttle_city(12);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto r = evaluate_policy(AlwaysWaitPolicy{}, s, 20, seeds, ObjectiveMode::MaxEarnings, EvalOptions{});
  CHECK(r.fulfillment_pct == 100.0);
  CHECK(r.fulfillment_pct_after_warmup == 100.0);
  CHECK(r.unmet_requests == 0.0);
  CHECK(r.per_ride_earnings == 4.0);
  CHECK_FALSE(r.zero_demand);
}

TEST_CASE("repeating a seed leaves the report unchanged") {
  const auto s = small_synthetic(3);
  const UniformRandomPolicy policy(s.grid.size());
  const std::vector<std::uint64_t> one{7}, twice{7, 7};
  const auto a = evaluate_policy(policy, s, 25, one, ObjectiveMode::MaxEarnings, EvalOptions{});
  const auto b = evaluate_policy(policy, s, 25, twice, ObjectiveMode::MaxEarnings, EvalOptions{});
  CHECK(a.fulfillment_pct == b.fulfillment_pct);
  CHECK(a.mean_earnings == b.mean_earnings);
  CHECK(a.median_earnings == b.median_earnings);
  CHECK(a.q1_earnings == b.q1_earnings);
  CHECK(a.successful_waits == b.successful_waits);
  CHECK(a.wait_time_fractions == b.wait_time_fractions);
  CHECK(to_json(a).at("fulfillment_pct") == to_json(b).at("fulfillment_pct"));
}

TEST_CASE("evaluation rejects mismatched tables") {
  const auto s = small_synthetic(1);
  const std::vector<std::uint64_t> seeds{1};
  CHECK_THROWS_AS(evaluate(PolicyTables(16, 7), s, 5, seeds, ObjectiveMode::MaxEarnings, EvalOptions{}), ConfigError);
  CHECK_THROWS_AS(evaluate(PolicyTables(15, 19), s, 5, seeds, ObjectiveMode::MaxEarnings, EvalOptions{}), ConfigError);
}

TEST_CASE("success-to-failure wait ratio falls with supply past saturation") {
  const auto s = small_synthetic(4);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  double previous = 1e300;
  for (const int n : {100, 200, 400, 800}) {
    const auto r = evaluate_policy(AlwaysWaitPolicy{}, s, n, seeds, ObjectiveMode::MaxEarnings, EvalOptions{});
    REQUIRE(r.wait_ratio().has_value());
    CHECK(*r.wait_ratio() < previous);
    previous = *r.wait_ratio();
  }
}

TEST_CASE("naive policy") {
  // Zone 1 is adjacent to zone 0 and zone 2 sits two hexes away.
  const HexGrid grid({{0, 0}, {1, 0}, {2, 0}, {-1, 0}});
  auto mx = testing::flat_matrices(2, 4);
  mx.demand(0, 1, 0) = 5;
  mx.demand(1, 2, 0) = 3;
  mx.demand(0, 3, 0) = 1;

  NaivePolicyParams p;
  p.popular_zones = 2;
  const NaivePolicy naive(p, grid, mx);
  CHECK(naive.popular() == std::vector<ZoneId>{1, 2});

  const auto d = naive.target_distribution(0);
  REQUIRE(d.size() == 2);
  CHECK(d[0].first == 1);
  CHECK(d[0].second == doctest::Approx(2.0 / 3.0));
  CHECK(d[1].second == doctest::Approx(1.0 / 3.0));

  // A driver already in a popular zone never targets it.
  const auto from_popular = naive.target_distribution(1);
  REQUIRE(from_popular.size() == 1);
  CHECK(from_popular[0].first == 2);

  Rng rng(12);
  int relocations = 0;
  constexpr int kDecisions = 10000;
  for (int i = 0; i < kDecisions; ++i) relocations += !naive.decide(0, 0, 0, rng).action.is_wait();
  CHECK(static_cast<double>(relocations) / kDecisions == doctest::Approx(0.25).epsilon(0.04));

  p.relocation_probability = 0.0;
  const NaivePolicy stay(p, grid, mx);
  for (int i = 0; i < 500; ++i) CHECK(stay.decide(0, 3, 0, rng).action.is_wait());

  p.relocation_probability = 1.5;
  CHECK_THROWS_AS(NaivePolicy(p, grid, mx), ConfigError);
}

TEST_CASE("mixed populations") {
  const auto s = small_synthetic(5);
  TrainConfig c;
  c.episodes = 10;
  c.independent_episodes = 10;
  c.coordinated_episodes = 4;
  c.alpha = 0.2;
  const auto trained = train(s, 30, c);
  const std::vector<std::uint64_t> seeds{3, 4};
  const EvalOptions options;
  const NaivePolicyParams naive_params;

  CHECK(strategic_count(0.5, 7) == 4);
  CHECK(strategic_count(0.3, 10) == 3);
  CHECK_THROWS_AS(strategic_count(1.2, 10), ConfigError);

  const auto all = mixed_population_eval(1.0, trained.tables, naive_params, s, 30, seeds, c.mode, options);
  const auto pure = evaluate(trained.tables, s, 30, seeds, c.mode, options);
  CHECK(all.strategic_drivers == 30);
  CHECK(all.naive_drivers == 0);
  CHECK(all.strategic.mean == doctest::Approx(pure.mean_earnings));
  CHECK(all.fulfillment_pct == doctest::Approx(pure.fulfillment_pct));

  const auto none = mixed_population_eval(0.0, trained.tables, naive_params, s, 30, seeds, c.mode, options);
  const NaivePolicy naive(naive_params, s.grid, s.matrices);
  const auto baseline = evaluate_policy(naive, s, 30, seeds, c.mode, options);
  CHECK(none.strategic_drivers == 0);
  CHECK(none.naive.mean == doctest::Approx(baseline.mean_earnings));

  const auto half = mixed_population_eval(0.5, trained.tables, naive_params, s, 31, seeds, c.mode, options);
  CHECK(half.strategic_drivers + half.naive_drivers == 31);
  CHECK(half.strategic_earnings.size() == 16 * seeds.size());
  CHECK(half.naive_earnings.size() == 15 * seeds.size());
}

TEST_CASE("generalization error") {
  CHECK(generalization_error_pct(90.0, 85.5) == doctest::Approx(5.0));
  CHECK(generalization_error_pct(80.0, 84.0) == doctest::Approx(-5.0));
  CHECK_THROWS_AS(generalization_error_pct(0.0, 10.0), DataError);

  const auto s = small_synthetic(6);
  TrainConfig c;
  c.episodes = 5;
  c.independent_episodes = 5;
  c.coordinated_episodes = 2;
  const auto trained = train(s, 20, c);
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto g = generalization_error(trained.tables, trained.tables, s, 20, seeds, c.mode, EvalOptions{});
  CHECK(g.error_pct == 0.0);
  CHECK(g.reference_fulfillment == g.baseline_fulfillment);
}

TEST_CASE("sign test") {
  CHECK(sign_test_p(10, 0) == doctest::Approx(1.0 / 1024.0));
  CHECK(sign_test_p(9, 1) == doctest::Approx(11.0 / 1024.0));
  CHECK(sign_test_p(5, 5) == doctest::Approx(638.0 / 1024.0));
  CHECK(sign_test_p(0, 0) == 1.0);
  CHECK(sign_test_p(0, 4) == 1.0);
}

TEST_CASE("bootstrap interval") {
  const std::vector<double> constant(10, 3.0);
  const auto c = bootstrap_mean_ci(constant, 0.9, 500, 1);
  CHECK(c.estimate == 3.0);
  CHECK(c.low == 3.0);
  CHECK(c.high == 3.0);

  const std::vector<double> values{1.0, 2.0, 3.0, 4.0, 10.0};
  const auto a = bootstrap_mean_ci(values, 0.9, 2000, 7);
  const auto b = bootstrap_mean_ci(values, 0.9, 2000, 7);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.estimate == 4.0);
  CHECK(a.low <= a.estimate);
  CHECK(a.estimate <= a.high);
  CHECK(a.low >= 1.0);
  CHECK(a.high <= 10.0);
  CHECK_THROWS_AS(bootstrap_mean_ci({}, 0.9, 10, 1), ConfigError);
}

TEST_CASE("heatmap export") {
  PolicyTables tables(2, 7);
  tables.q_coordinated(1, 3, 3) = 1.0;
  tables.q_coordinated(1, 3, 0) = 3.0;
  const auto grid = HexGrid::filled_hexagon(1);
  const auto cells = coordinated_wait_heatmap(tables, grid, 1);
  REQUIRE(cells.size() == 7);
  CHECK(cells[3].value == doctest::Approx(0.25));
  CHECK(cells[0].value == 0.0);
  CHECK(cells[3].coord == grid.coord(3));
  CHECK_THROWS_AS(coordinated_wait_heatmap(tables, grid, 2), ConfigError);

  const auto path = std::filesystem::temp_directory_path() / "hexfleet_heatmap.csv";
  write_heatmap_csv(cells, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "zone,q,r,value");
  std::filesystem::remove(path);
}

TEST_CASE("experiment config parsing") {
  const nlohmann::json doc{{"scenario", "city.json"},
                           {"drivers", 40},
                           {"train", {{"episodes", 30}, {"objective", "max_fulfillment"}}},
                           {"eval", {{"seeds", {4, 5}}, {"warmup_steps", 2}}},
                           {"sweep", {{"supply", {10, 20}}, {"objectives", true}}}};
  const auto c = experiment_config_from_json(doc, "/data/run");
  CHECK(c.scenario == std::filesystem::path("/data/run/city.json"));
  CHECK(c.drivers == 40);
  CHECK(c.train.episodes == 30);
  CHECK(c.train.mode == ObjectiveMode::MaxFulfillment);
  CHECK(c.eval_seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.eval.warmup_steps == 2);
  CHECK(c.sweep.supply == std::vector<int>{10, 20});
  CHECK(c.sweep.objectives);

  const auto again = experiment_config_from_json(to_json(c));
  CHECK(again.eval_seeds == c.eval_seeds);
  CHECK(again.sweep.supply == c.sweep.supply);

  CHECK_THROWS_AS(experiment_config_from_json({{"drivers", 10}, {"colour", "blue"}}), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json({{"eval", {{"seed", 3}}}}), ConfigError);
  CHECK_THROWS_AS(experiment_config_from_json({{"drivers", "many"}}), ConfigError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("a one-point sweep equals a direct evaluation, failures are recorded") {
  const auto s = small_synthetic(8);
  ExperimentConfig c;
  c.drivers = 20;
  c.train.episodes = 6;
  c.train.independent_episodes = 6;
  c.train.coordinated_episodes = 3;
  c.train.seed = 2;
  c.eval_seeds = {1, 2};
  c.sweep.supply = {20};
  c.sweep.heatmap_times = {3, 99};
  const auto dir = std::filesystem::temp_directory_path() / "hexfleet_sweep_test";
  std::filesystem::remove_all(dir);

  const auto summary = run_experiment_suite(c, s, dir);
  REQUIRE(summary.points.size() == 3);
  CHECK(summary.points[0].name == "supply_n20");
  REQUIRE(summary.points[0].report.has_value());
  auto options = c.eval;
  options.slice_minutes = s.slice_minutes;
  const auto direct = evaluate(train(s, 20, c.train).tables, s, 20, c.eval_seeds, c.train.mode, options);
  CHECK(summary.points[0].report->fulfillment_pct == direct.fulfillment_pct);
  CHECK(summary.points[0].report->mean_earnings == direct.mean_earnings);

  CHECK(summary.points[1].ok);
  CHECK_FALSE(summary.points[2].ok);
  CHECK(summary.failures() == 1);
  CHECK(std::filesystem::exists(dir / "supply_n20.csv"));
  CHECK(std::filesystem::exists(dir / "heatmap_t3.csv"));
  CHECK(std::filesystem::exists(dir / "summary.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("trace exports") {
  const auto s = shuttle_city(4);
  const auto trace = run_episode(s.matrices, 3, AlwaysWaitPolicy{}, ObjectiveMode::MaxEarnings, 1);
  const auto dir = std::filesystem::temp_directory_path() / "hexfleet_trace_test";
  std::filesystem::create_directories(dir);
  write_trace_csv(trace, dir / "trace.csv");
  write_driver_earnings_csv(trace, dir / "drivers.csv");
  std::ifstream in(dir / "trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,zone,supply,fulfilled,demand,unmet");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 4 * 2);
  std::filesystem::remove_all(dir);
}
