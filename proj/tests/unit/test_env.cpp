#include <doctest.h>

#include <numeric>
#include <sstream>

#include "hexfleet/env_server.hpp"
#include "hexfleet/errors.hpp"
#include "hexfleet/ingest.hpp"
#include "hexfleet/rng.hpp"
#include "helpers.hpp"

using namespace hexfleet;
using nlohmann::json;

namespace {

Scenario env_city() {
  SyntheticCityParams p;
  p.radius = 1;
  p.horizon = 6;
  p.base_rate = 0.5;
  p.seed = 4;
  return generate_synthetic_city(p);
}

json reset(std::uint64_t seed) { return {{"format_version", 1}, {"op", "reset"}, {"seed", seed}}; }

json step_zone_actions(std::vector<int> actions) {
  return {{"format_version", 1}, {"op", "step"}, {"zone_actions", std::move(actions)}};
}

json all_wait(int zones) {
  std::vector<int> a(zones);
  std::iota(a.begin(), a.end(), 0);
  return step_zone_actions(a);
}

// Mirrors the server's sampling of zone_distributions requests.
class DistributionPolicy final : public PolicyOracle {
 public:
  explicit DistributionPolicy(std::vector<std::vector<std::vector<double>>> rows) : rows_(std::move(rows)) {}
  Decision decide(TimeStep t, ZoneId h, int, Rng& rng) const override {
    const auto& row = rows_[t][h];
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    return {Action::toward(h, static_cast<ZoneId>(sample_weighted(rng, row, total))), ActionSource::External};
  }

 private:
  std::vector<std::vector<std::vector<double>>> rows_;
};

}  // namespace

TEST_CASE("protocol round trip") {
  const std::vector<json> messages{
      reset(17),
      {{"format_version", 1}, {"op", "close"}},
      step_zone_actions({0, 2, 2}),
      {{"format_version", 1}, {"op", "step"}, {"zone_distributions", {{0.5, 0.5}, {1.0, 0.0}}}},
      {{"format_version", 1},
       {"op", "step"},
       {"driver_actions", {{{"driver", 3}, {"destination", 1}}, {{"driver", 0}, {"destination", 0}}}}}};
  for (const auto& m : messages) {
    const auto parsed = parse_request(m);
    CHECK(serialize_request(parsed) == m);
    CHECK(parse_request(serialize_request(parsed)) == parsed);
  }
}

TEST_CASE("malformed requests are protocol errors") {
  CHECK_THROWS_AS(parse_request({{"op", "reset"}, {"seed", 1}}), ProtocolError);
  CHECK_THROWS_AS(parse_request({{"format_version", 2}, {"op", "reset"}, {"seed", 1}}), ProtocolError);
  CHECK_THROWS_AS(parse_request({{"format_version", 1}, {"op", "reset"}}), ProtocolError);
  CHECK_THROWS_AS(parse_request({{"format_version", 1}, {"op", "jump"}}), ProtocolError);
  CHECK_THROWS_AS(parse_request({{"format_version", 1}, {"op", "step"}}), ProtocolError);
  CHECK_THROWS_AS(parse_request({{"format_version", 1},
                                 {"op", "step"},
                                 {"zone_actions", {0}},
                                 {"zone_distributions", {{1.0}}}}),
                  ProtocolError);
  CHECK_THROWS_AS(parse_request({{"format_version", 1}, {"op", "step"}, {"zone_actions", "all"}}), ProtocolError);
  CHECK_THROWS_AS(parse_request(json::array()), ProtocolError);
}

TEST_CASE("reset is deterministic and reports the first observation") {
  const auto s = env_city();
  EnvServer a(s, 12, ObjectiveMode::MaxEarnings);
  EnvServer b(s, 12, ObjectiveMode::MaxEarnings);
  const auto ra = a.handle(reset(5));
  CHECK(ra.at("ok") == true);
  CHECK(ra.at("done") == false);
  CHECK(ra.at("observation").at("t") == 0);
  CHECK(ra == b.handle(reset(5)));
  CHECK(ra == a.handle(reset(5)));
  const auto supply = ra.at("observation").at("supply").get<std::vector<int>>();
  CHECK(std::accumulate(supply.begin(), supply.end(), 0) == 12);
}

TEST_CASE("zero-demand city") {
  const auto s = testing::make_scenario(HexGrid::filled_hexagon(1), testing::flat_matrices(4, 7));
  EnvServer env(s, 5, ObjectiveMode::MaxEarnings);
  const auto r = env.handle(reset(1));
  CHECK(r.at("observation").at("demand") == std::vector<int>(7, 0));
  const auto st = env.handle(all_wait(7));
  CHECK(st.at("rewards") == std::vector<double>(7, 0.0));
}

TEST_CASE("lifecycle") {
  const auto s = env_city();
  EnvServer env(s, 8, ObjectiveMode::MaxEarnings);
  CHECK(env.handle(all_wait(7)).at("ok") == false);  // no episode yet

  env.handle(reset(2));
  int done_count = 0;
  for (int t = 0; t < 6; ++t) {
    const auto r = env.handle(all_wait(7));
    REQUIRE(r.at("ok") == true);
    const bool done = r.at("done");
    done_count += done;
    CHECK(done == (t == 5));
  }
  CHECK(done_count == 1);
  const auto after = env.handle(all_wait(7));
  CHECK(after.at("ok") == false);
  CHECK(after.contains("error"));

  CHECK(env.handle({{"format_version", 1}, {"op", "close"}}).at("closed") == true);
  CHECK(env.closed());
  CHECK(env.handle(reset(1)).at("ok") == false);
}

TEST_CASE("rejected steps leave the episode unchanged") {
  const auto s = env_city();
  EnvServer env(s, 10, ObjectiveMode::MaxEarnings);
  EnvServer fresh(s, 10, ObjectiveMode::MaxEarnings);
  env.handle(reset(9));
  fresh.handle(reset(9));

  const std::vector<json> bad{
      step_zone_actions({0, 1, 2}),
      step_zone_actions({0, 1, 2, 3, 4, 5, 7}),
      step_zone_actions({0, 1, 2, 3, 4, 5, -1}),
      {{"format_version", 1}, {"op", "step"}, {"zone_distributions", std::vector<std::vector<double>>(7, {1.0})}},
      {{"format_version", 1},
       {"op", "step"},
       {"zone_distributions", std::vector<std::vector<double>>(7, std::vector<double>(7, 0.0))}},
      {{"format_version", 1},
       {"op", "step"},
       {"driver_actions", {{{"driver", 1}, {"destination", 0}}, {{"driver", 1}, {"destination", 2}}}}},
      {{"format_version", 1}, {"op", "step"}, {"driver_actions", {{{"driver", 10}, {"destination", 0}}}}},
      {{"format_version", 1}, {"op", "step"}, {"driver_actions", {{{"driver", 0}, {"destination", 9}}}}},
      {{"format_version", 1}, {"op", "step"}, {"zone_actions", {0}}, {"driver_actions", json::array()}}};
  for (const auto& msg : bad) {
    const auto r = env.handle(msg);
    CHECK(r.at("ok") == false);
    CHECK(r.contains("error"));
  }
  const auto move = step_zone_actions({1, 2, 3, 4, 5, 6, 0});
  CHECK(env.handle(move) == fresh.handle(move));
}

TEST_CASE("busy drivers cannot be given actions") {
  const auto s = testing::make_scenario(testing::pair_grid(), testing::flat_matrices(6, 2, 3, 1.0));
  EnvServer env(s, 1, ObjectiveMode::MaxEarnings);
  const auto supply = env.handle(reset(1)).at("observation").at("supply").get<std::vector<int>>();
  const int other = supply[0] == 1 ? 1 : 0;
  auto command = [](int destination) {
    return json{{"format_version", 1},
                {"op", "step"},
                {"driver_actions", {{{"driver", 0}, {"destination", destination}}}}};
  };
  const auto moved = env.handle(command(other));
  REQUIRE(moved.at("ok") == true);
  CHECK(moved.at("observation").at("supply") == std::vector<int>{0, 0});
  const auto busy = env.handle(command(other));
  CHECK(busy.at("ok") == false);
  // Unlisted drivers simply continue.
  CHECK(env.handle({{"format_version", 1}, {"op", "step"}, {"driver_actions", json::array()}}).at("ok") == true);
}

TEST_CASE("per-step rewards sum to the engine's episode earnings") {
  const auto s = env_city();
  const int m = s.grid.size();
  const int horizon = s.matrices.horizon();
  for (std::uint64_t episode = 0; episode < 10; ++episode) {
    Rng rng(derive_seed(episode, {1}));
    std::vector<std::vector<std::vector<double>>> rows(horizon,
                                                        std::vector<std::vector<double>>(m, std::vector<double>(m)));
    for (auto& per_t : rows) {
      for (auto& row : per_t) {
        for (auto& p : row) p = uniform01(rng);
      }
    }
    EnvServer env(s, 15, ObjectiveMode::MaxEarnings);
    env.handle(reset(100 + episode));
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const auto r = env.handle({{"format_version", 1}, {"op", "step"}, {"zone_distributions", rows[t]}});
      REQUIRE(r.at("ok") == true);
      for (const double x : r.at("rewards").get<std::vector<double>>()) total += x;
    }
    const auto trace = run_episode(s.matrices, 15, DistributionPolicy(rows), ObjectiveMode::MaxEarnings, 100 + episode);
    CHECK(total == doctest::Approx(trace.total_earnings()).epsilon(1e-12));
  }
}

TEST_CASE("serve loop") {
  const auto s = env_city();
  EnvServer env(s, 4, ObjectiveMode::MaxEarnings);
  std::istringstream in(reset(3).dump() + "\nnot json\n" + json{{"format_version", 1}, {"op", "close"}}.dump() +
                        "\n" + reset(3).dump() + "\n");
  std::ostringstream out;
  CHECK(env.serve(in, out) == 0);
  std::istringstream replies(out.str());
  std::vector<json> lines;
  for (std::string line; std::getline(replies, line);) lines.push_back(json::parse(line));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].at("ok") == true);
  CHECK(lines[1].at("ok") == false);
  CHECK(lines[2].at("closed") == true);
}
