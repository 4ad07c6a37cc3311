#include <doctest.h>

#include <numeric>
#include <set>

#include "hexfleet/errors.hpp"
#include "hexfleet/sim.hpp"
#include "helpers.hpp"

using namespace hexfleet;

namespace {

std::vector<RideRequest> requests(int count) { return std::vector<RideRequest>(count, RideRequest{1, 5.0, 1}); }

// A seed whose single driver starts in `zone`.
std::uint64_t seed_starting_in(const CityMatrices& mx, ZoneId zone) {
  for (std::uint64_t seed = 0;; ++seed) {
    Episode e(mx, 1, ObjectiveMode::MaxEarnings, seed);
    if (std::get<Idle>(e.drivers()[0]).zone == zone) return seed;
  }
}

void check_conservation(const EpisodeTrace& trace) {
  for (int t = 0; t < trace.horizon; ++t) {
    int idle = 0;
    for (int h = 0; h < trace.zones; ++h) idle += trace.supply_at(t, h);
    CHECK(idle + trace.busy[t] == trace.drivers);
  }
}

}  // namespace

TEST_CASE("matching examples") {
  Rng rng(1);
  const std::vector<int> none;
  auto r = match_waiting(none, requests(5), rng);
  CHECK(r.assignments.empty());
  CHECK(r.unmet_requests.size() == 5);

  const std::vector<int> three{4, 8, 9};
  r = match_waiting(three, requests(3), rng);
  CHECK(r.assignments.size() == 3);
  CHECK(r.unmatched_drivers.empty());
  CHECK(r.unmet_requests.empty());
  std::set<int> drivers, reqs;
  for (const auto& [d, q] : r.assignments) {
    drivers.insert(d);
    reqs.insert(q);
  }
  CHECK(drivers == std::set<int>{4, 8, 9});
  CHECK(reqs == std::set<int>{0, 1, 2});
}

TEST_CASE("matching is uniform over drivers") {
  Rng rng(42);
  const std::vector<int> two{0, 1};
  int first = 0;
  constexpr int kTrials = 10000;
  for (int i = 0; i < kTrials; ++i) {
    const auto r = match_waiting(two, requests(1), rng);
    REQUIRE(r.assignments.size() == 1);
    REQUIRE(r.unmatched_drivers.size() == 1);
    if (r.assignments[0].first == 0) ++first;
  }
  CHECK(static_cast<double>(first) / kTrials == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("apply_action examples") {
  auto mx = testing::flat_matrices(20, 3, 4, 3.5);
  mx.reward(10, 0, 2) = 12.0;

  const auto fail = apply_action(Idle{1}, Action::wait(1), mx, 5);
  CHECK(fail.next == DriverState{Idle{1}});
  CHECK(fail.earnings == 0.0);

  const auto move = apply_action(Idle{0}, Action::relocate(0, 1), mx, 3);
  CHECK(move.next == DriverState{Busy{7, 1}});
  CHECK(move.earnings == -3.5);

  const auto ride = apply_action(Idle{0}, Action::wait(0), mx, 10, ZoneId{2});
  CHECK(ride.next == DriverState{Busy{14, 2}});
  CHECK(ride.earnings == 12.0);

  CHECK_THROWS_AS(apply_action(Idle{0}, Action::wait(1), mx, 0), ContractViolation);
  CHECK_THROWS_AS(apply_action(Busy{3, 0}, Action::wait(0), mx, 0), ContractViolation);
}

TEST_CASE("always waiting on an empty city") {
  const auto mx = testing::flat_matrices(9, 4);
  const AlwaysWaitPolicy policy;
  const auto trace = run_episode(mx, 1, policy, ObjectiveMode::MaxEarnings, 3);
  CHECK(trace.unsuccessful_waits() == 9);
  CHECK(trace.successful_waits() == 0);
  CHECK(trace.total_earnings() == 0.0);
  CHECK(trace.fulfillment_pct() == 100.0);
}

TEST_CASE("a single ride is served and paid") {
  auto mx = testing::flat_matrices(4, 2);
  mx.demand(1, 0, 1) = 1;
  mx.reward(1, 0, 1) = 10.0;
  const AlwaysWaitPolicy policy;
  const auto trace = run_episode(mx, 1, policy, ObjectiveMode::MaxEarnings, seed_starting_in(mx, 0));
  CHECK(trace.total_earnings() == 10.0);
  CHECK(trace.total_fulfilled() == 1);
  CHECK(trace.fulfilled_at(1, 0) == 1);
  CHECK(trace.driver_earnings[0] == 10.0);
  CHECK(trace.driver_rides[0] == 1);
  CHECK(trace.fulfillment_pct() == 100.0);
}

TEST_CASE("driver conservation and fulfillment dominance under a random policy") {
  auto mx = testing::flat_matrices(24, 7, 2, 1.0);
  Rng rng(3);
  for (int t = 0; t < 24; ++t) {
    for (int h = 0; h < 7; ++h) {
      for (int g = 0; g < 7; ++g) {
        if (h == g) continue;
        mx.demand(t, h, g) = static_cast<int>(rng() % 3);
        mx.reward(t, h, g) = 4.0;
        mx.travel_time(t, h, g) = 1 + static_cast<int>(rng() % 3);
      }
    }
  }
  const UniformRandomPolicy policy(7);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto trace = run_episode(mx, 15, policy, ObjectiveMode::MaxEarnings, seed);
    check_conservation(trace);
    for (int t = 0; t < 24; ++t) {
      for (int h = 0; h < 7; ++h) {
        int waiting = 0;
        for (int g = 0; g < 7; ++g) waiting += trace.waits[trace.pair_cell(t, h, g)];
        CHECK(trace.fulfilled_at(t, h) == std::min(waiting, mx.outgoing_demand(t, h)));
      }
    }
    // Per-driver earnings replay from the action log.
    std::vector<double> replay(15, 0.0);
    for (const auto& a : trace.actions) replay[a.driver] += a.earnings;
    for (int d = 0; d < 15; ++d) CHECK(replay[d] == doctest::Approx(trace.driver_earnings[d]));
    // A successful wait always leaves from the driver's own zone.
    for (const auto& a : trace.actions) {
      if (a.matched) CHECK(a.is_wait());
    }
  }
}

TEST_CASE("episodes are deterministic across worker counts") {
  auto mx = testing::flat_matrices(12, 7, 1, 0.5);
  for (int t = 0; t < 12; ++t) mx.demand(t, 0, 3) = 4;
  const UniformRandomPolicy policy(7);
  const auto a = run_episode(mx, 30, policy, ObjectiveMode::MaxEarnings, 77, 1);
  const auto b = run_episode(mx, 30, policy, ObjectiveMode::MaxEarnings, 77, 1);
  const auto c = run_episode(mx, 30, policy, ObjectiveMode::MaxEarnings, 77, 4);
  CHECK(a == b);
  CHECK(a == c);
  CHECK_FALSE(a == run_episode(mx, 30, policy, ObjectiveMode::MaxEarnings, 78, 1));
}

TEST_CASE("objective rewards") {
  CHECK(wait_reward(7.5, true, ObjectiveMode::MaxEarnings) == 7.5);
  CHECK(wait_reward(0.0, false, ObjectiveMode::MaxEarnings) == 0.0);
  CHECK(wait_reward(7.5, true, ObjectiveMode::MaxFulfillment) == 1.0);
  CHECK(wait_reward(0.0, false, ObjectiveMode::MaxFulfillment) == -1.0);
  CHECK(relocation_reward(2.0, ObjectiveMode::MaxEarnings) == -2.0);
  CHECK(relocation_reward(2.0, ObjectiveMode::MaxFulfillment) == 0.0);
  CHECK(objective_from_string(to_string(ObjectiveMode::MaxFulfillment)) == ObjectiveMode::MaxFulfillment);
  CHECK_THROWS_AS(objective_from_string("max_happiness"), ConfigError);
}

TEST_CASE("invalid policy actions are contract violations") {
  struct Bad final : PolicyOracle {
    Decision decide(TimeStep, ZoneId, int, Rng&) const override { return {Action{ActionKind::Wait, 0, 9}, {}}; }
  };
  const auto mx = testing::flat_matrices(3, 2);
  CHECK_THROWS_AS(run_episode(mx, 2, Bad{}, ObjectiveMode::MaxEarnings, 1), ContractViolation);
}
