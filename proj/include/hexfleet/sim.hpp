#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hexfleet/city.hpp"
#include "hexfleet/rng.hpp"

namespace hexfleet {

enum class ObjectiveMode : std::uint8_t { MaxEarnings, MaxFulfillment };

std::string to_string(ObjectiveMode mode);
ObjectiveMode objective_from_string(const std::string& text);

struct Idle {
  ZoneId zone = 0;
  bool operator==(const Idle&) const = default;
};

// Traveling (with a passenger or empty) until `arrival`, then Idle(destination).
struct Busy {
  TimeStep arrival = 0;
  ZoneId destination = 0;
  bool operator==(const Busy&) const = default;
};

using DriverState = std::variant<Idle, Busy>;

struct Transition {
  DriverState next;
  double earnings = 0.0;
};

// Applies one action taken at timestep t from Idle(h). For a wait,
// `passenger_destination` is set iff the driver was matched. Throws
// ContractViolation when the state is not Idle at the action's origin.
Transition apply_action(const DriverState& state, const Action& action, const CityMatrices& matrices,
                        TimeStep t, std::optional<ZoneId> passenger_destination = std::nullopt);

struct RideRequest {
  ZoneId destination = 0;
  double reward = 0.0;
  int travel_time = 1;
};

struct MatchResult {
  // (driver id, request index) pairs.
  std::vector<std::pair<int, int>> assignments;
  std::vector<int> unmatched_drivers;
  std::vector<int> unmet_requests;
};

// Uniformly random injective assignment of min(#drivers, #requests) pairs.
MatchResult match_waiting(std::span<const int> waiting_drivers, std::span<const RideRequest> requests, Rng& rng);

enum class ActionSource : std::uint8_t { Explore, Independent, Coordinated, External };

struct Decision {
  Action action;
  ActionSource source = ActionSource::External;
};

// Recommends an action to an idle driver. Implementations must be safe to
// call concurrently; all randomness comes from the caller's stream.
class PolicyOracle {
 public:
  virtual ~PolicyOracle() = default;
  virtual Decision decide(TimeStep t, ZoneId h, int driver, Rng& rng) const = 0;
};

class AlwaysWaitPolicy final : public PolicyOracle {
 public:
  Decision decide(TimeStep, ZoneId h, int, Rng&) const override { return {Action::wait(h), ActionSource::External}; }
};

// Uniform over the m destinations (wait included).
class UniformRandomPolicy final : public PolicyOracle {
 public:
  explicit UniformRandomPolicy(int zones) : zones_(zones) {}
  Decision decide(TimeStep t, ZoneId h, int driver, Rng& rng) const override;

 private:
  int zones_;
};

struct ActionRecord {
  TimeStep t = 0;
  int driver = 0;
  ZoneId origin = 0;
  ZoneId target = 0;    // action destination (origin for a wait)
  ZoneId end_zone = 0;  // passenger destination, origin after a failed wait, or target
  ActionSource source = ActionSource::External;
  bool matched = false;
  int travel_time = 1;
  double earnings = 0.0;

  bool is_wait() const { return target == origin; }
  bool operator==(const ActionRecord&) const = default;
};

struct UnmetRecord {
  TimeStep t = 0;
  ZoneId zone = 0;
  int count = 0;
  bool operator==(const UnmetRecord&) const = default;
};

// Everything that happened in one episode. Per-cell arrays are row-major:
// supply/fulfilled are T x m, waits/relocations are T x m x m.
struct EpisodeTrace {
  int horizon = 0;
  int zones = 0;
  int drivers = 0;
  ObjectiveMode mode = ObjectiveMode::MaxEarnings;
  std::uint64_t seed = 0;

  std::vector<int> supply;
  std::vector<int> fulfilled;
  std::vector<int> demand;  // outgoing demand per (t, h)
  // waits[t][h][h'] counts successful waits ending in h'; the diagonal
  // counts unsuccessful waits.
  std::vector<int> waits;
  std::vector<int> relocations;
  std::vector<int> busy;  // busy drivers per timestep
  std::vector<double> driver_earnings;
  std::vector<int> driver_rides;
  std::vector<UnmetRecord> unmet;
  std::vector<ActionRecord> actions;

  std::size_t zone_cell(TimeStep t, ZoneId h) const { return static_cast<std::size_t>(t) * zones + h; }
  std::size_t pair_cell(TimeStep t, ZoneId h, ZoneId g) const { return zone_cell(t, h) * zones + g; }

  int supply_at(TimeStep t, ZoneId h) const { return supply[zone_cell(t, h)]; }
  int fulfilled_at(TimeStep t, ZoneId h) const { return fulfilled[zone_cell(t, h)]; }

  double total_earnings() const;
  double mean_earnings() const;
  long long total_fulfilled() const;
  long long total_demand() const;
  long long successful_waits() const;
  long long unsuccessful_waits() const;
  // Percentage of demand served; 100 when there was no demand.
  double fulfillment_pct() const;

  bool operator==(const EpisodeTrace&) const = default;
};

// Learning signal of one recorded action under the given objective:
// currency earnings for MaxEarnings; +1 pickup, -1 failed wait, 0 relocation
// for MaxFulfillment.
double objective_reward(const ActionRecord& record, ObjectiveMode mode);
double wait_reward(double ride_reward, bool matched, ObjectiveMode mode);
double relocation_reward(double relocation_cost, ObjectiveMode mode);

// Step-wise episode execution. Drivers start uniformly at random over the
// zones. Each step: arrivals become idle, every idle driver is asked for an
// action, waiting drivers are matched per zone, transitions are applied.
// Per-zone work uses streams derived from (seed, t, h), so results do not
// depend on `workers`.
class Episode {
 public:
  Episode(const CityMatrices& matrices, int drivers, ObjectiveMode mode, std::uint64_t seed, int workers = 1);

  TimeStep now() const { return now_; }
  bool done() const { return now_ >= matrices_->horizon(); }
  const std::vector<DriverState>& drivers() const { return drivers_; }

  // Idle drivers per zone that will act at now() (after arrivals).
  std::vector<int> idle_supply() const;

  // Runs timestep now() and advances. Returns the per-zone earnings summed
  // over the actions taken this step.
  std::vector<double> step(const PolicyOracle& policy);

  const EpisodeTrace& trace() const { return trace_; }
  EpisodeTrace release() && { return std::move(trace_); }

 private:
  void apply_arrivals();

  const CityMatrices* matrices_;
  int workers_;
  TimeStep now_ = 0;
  std::vector<DriverState> drivers_;
  EpisodeTrace trace_;
};

EpisodeTrace run_episode(const CityMatrices& matrices, int drivers, const PolicyOracle& policy, ObjectiveMode mode,
                         std::uint64_t seed, int workers = 1);

}  // namespace hexfleet
