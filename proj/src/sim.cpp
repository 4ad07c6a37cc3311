#include "hexfleet/sim.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "hexfleet/errors.hpp"
#include "hexfleet/parallel.hpp"

namespace hexfleet {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kZoneStream = 0x20e5;

struct ZoneStep {
  std::vector<ActionRecord> records;
  std::vector<DriverState> next;  // parallel to records
  std::vector<int> wait_row;
  std::vector<int> relocation_row;
  int fulfilled = 0;
  int unmet = 0;
  double earnings = 0.0;
};

}  // namespace

std::string to_string(ObjectiveMode mode) {
  return mode == ObjectiveMode::MaxEarnings ? "max_earnings" : "max_fulfillment";
}

ObjectiveMode objective_from_string(const std::string& text) {
  if (text == "max_earnings" || text == "earnings") return ObjectiveMode::MaxEarnings;
  if (text == "max_fulfillment" || text == "fulfillment") return ObjectiveMode::MaxFulfillment;
  throw ConfigError("unknown objective '" + text + "' (expected max_earnings or max_fulfillment)");
}

Transition apply_action(const DriverState& state, const Action& action, const CityMatrices& matrices, TimeStep t,
                        std::optional<ZoneId> passenger_destination) {
  const auto* idle = std::get_if<Idle>(&state);
  require(idle != nullptr, "apply_action: driver is busy");
  require(idle->zone == action.origin,
          fmt::format("apply_action: action origin {} does not match driver zone {}", action.origin, idle->zone));
  if (action.is_wait()) {
    if (!passenger_destination) return {Idle{action.origin}, 0.0};
    const ZoneId g = *passenger_destination;
    return {Busy{t + matrices.travel_time(t, action.origin, g), g}, matrices.reward(t, action.origin, g)};
  }
  require(!passenger_destination, "apply_action: a relocating driver cannot carry a passenger");
  const ZoneId g = action.destination;
  return {Busy{t + matrices.travel_time(t, action.origin, g), g}, -matrices.relocation_cost(t, action.origin, g)};
}

MatchResult match_waiting(std::span<const int> waiting_drivers, std::span<const RideRequest> requests, Rng& rng) {
  std::vector<int> drivers(waiting_drivers.begin(), waiting_drivers.end());
  std::vector<int> order(requests.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_in_place(std::span<int>(drivers), rng);
  shuffle_in_place(std::span<int>(order), rng);

  MatchResult out;
  const std::size_t k = std::min(drivers.size(), order.size());
  out.assignments.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.assignments.emplace_back(drivers[i], order[i]);
  out.unmatched_drivers.assign(drivers.begin() + static_cast<std::ptrdiff_t>(k), drivers.end());
  out.unmet_requests.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  return out;
}

Decision UniformRandomPolicy::decide(TimeStep, ZoneId h, int, Rng& rng) const {
  const auto g = static_cast<ZoneId>(uniform_index(rng, static_cast<std::uint64_t>(zones_)));
  return {Action::toward(h, g), ActionSource::External};
}

double wait_reward(double ride_reward, bool matched, ObjectiveMode mode) {
  if (mode == ObjectiveMode::MaxFulfillment) return matched ? 1.0 : -1.0;
  return matched ? ride_reward : 0.0;
}

double relocation_reward(double relocation_cost, ObjectiveMode mode) {
  return mode == ObjectiveMode::MaxFulfillment ? 0.0 : -relocation_cost;
}

double objective_reward(const ActionRecord& record, ObjectiveMode mode) {
  if (mode == ObjectiveMode::MaxEarnings) return record.earnings;
  if (record.is_wait()) return record.matched ? 1.0 : -1.0;
  return 0.0;
}

double EpisodeTrace::total_earnings() const {
  return std::accumulate(driver_earnings.begin(), driver_earnings.end(), 0.0);
}

double EpisodeTrace::mean_earnings() const {
  return drivers > 0 ? total_earnings() / drivers : 0.0;
}

long long EpisodeTrace::total_fulfilled() const {
  return std::accumulate(fulfilled.begin(), fulfilled.end(), 0LL);
}

long long EpisodeTrace::total_demand() const { return std::accumulate(demand.begin(), demand.end(), 0LL); }

long long EpisodeTrace::successful_waits() const { return total_fulfilled(); }

long long EpisodeTrace::unsuccessful_waits() const {
  long long n = 0;
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < zones; ++h) n += waits[pair_cell(t, h, h)];
  }
  return n;
}

double EpisodeTrace::fulfillment_pct() const {
  const auto d = total_demand();
  return d == 0 ? 100.0 : 100.0 * static_cast<double>(total_fulfilled()) / static_cast<double>(d);
}

Episode::Episode(const CityMatrices& matrices, int drivers, ObjectiveMode mode, std::uint64_t seed, int workers)
    : matrices_(&matrices), workers_(workers) {
  require(drivers >= 1, "episode needs at least one driver");
  const int horizon = matrices.horizon();
  const int m = matrices.zones();
  auto& tr = trace_;
  tr.horizon = horizon;
  tr.zones = m;
  tr.drivers = drivers;
  tr.mode = mode;
  tr.seed = seed;
  const auto zone_cells = static_cast<std::size_t>(horizon) * m;
  tr.supply.assign(zone_cells, 0);
  tr.fulfilled.assign(zone_cells, 0);
  tr.demand.assign(zone_cells, 0);
  tr.waits.assign(zone_cells * m, 0);
  tr.relocations.assign(zone_cells * m, 0);
  tr.busy.assign(horizon, 0);
  tr.driver_earnings.assign(drivers, 0.0);
  tr.driver_rides.assign(drivers, 0);
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < m; ++h) tr.demand[tr.zone_cell(t, h)] = matrices.outgoing_demand(t, h);
  }

  auto rng = make_stream(seed, {kInitStream});
  drivers_.reserve(drivers);
  for (int i = 0; i < drivers; ++i) {
    drivers_.emplace_back(Idle{static_cast<ZoneId>(uniform_index(rng, static_cast<std::uint64_t>(m)))});
  }
}

void Episode::apply_arrivals() {
  for (auto& d : drivers_) {
    if (const auto* busy = std::get_if<Busy>(&d); busy && busy->arrival <= now_) d = Idle{busy->destination};
  }
}

std::vector<int> Episode::idle_supply() const {
  std::vector<int> supply(matrices_->zones(), 0);
  for (const auto& d : drivers_) {
    if (const auto* idle = std::get_if<Idle>(&d)) ++supply[idle->zone];
  }
  return supply;
}

std::vector<double> Episode::step(const PolicyOracle& policy) {
  require(!done(), "episode already finished");
  const auto& mx = *matrices_;
  const int m = mx.zones();
  const TimeStep t = now_;

  std::vector<std::vector<int>> idle_by_zone(m);
  for (int i = 0; i < static_cast<int>(drivers_.size()); ++i) {
    if (const auto* idle = std::get_if<Idle>(&drivers_[i])) idle_by_zone[idle->zone].push_back(i);
  }

  std::vector<ZoneStep> zone_steps(m);
  parallel_for(m, workers_, [&](int h) {
    auto& zs = zone_steps[h];
    const auto& here = idle_by_zone[h];
    zs.wait_row.assign(m, 0);
    zs.relocation_row.assign(m, 0);
    auto rng = make_stream(trace_.seed, {kZoneStream, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(h)});

    std::vector<Decision> decisions;
    decisions.reserve(here.size());
    std::vector<int> waiting;
    for (const int driver : here) {
      auto d = policy.decide(t, h, driver, rng);
      const auto& a = d.action;
      const bool valid = a.origin == h && mx.zones() > a.destination && a.destination >= 0 &&
                         (a.kind == ActionKind::Wait) == (a.destination == h);
      if (!valid) {
        throw ContractViolation(fmt::format("policy returned an invalid action ({} -> {}) at (t={}, h={})", a.origin,
                                            a.destination, t, h));
      }
      if (a.is_wait()) waiting.push_back(driver);
      decisions.push_back(d);
    }

    std::vector<RideRequest> requests;
    for (int g = 0; g < m; ++g) {
      const int count = mx.demand(t, h, g);
      for (int k = 0; k < count; ++k) requests.push_back({g, mx.reward(t, h, g), mx.travel_time(t, h, g)});
    }
    const auto match = match_waiting(waiting, requests, rng);
    zs.fulfilled = static_cast<int>(match.assignments.size());
    zs.unmet = static_cast<int>(match.unmet_requests.size());

    std::vector<std::optional<ZoneId>> passenger(here.size());
    for (const auto& [driver, req] : match.assignments) {
      const auto pos = std::lower_bound(here.begin(), here.end(), driver) - here.begin();
      passenger[pos] = requests[req].destination;
    }

    zs.records.reserve(here.size());
    zs.next.reserve(here.size());
    for (std::size_t k = 0; k < here.size(); ++k) {
      const auto& a = decisions[k].action;
      auto tr = apply_action(drivers_[here[k]], a, mx, t, passenger[k]);
      ActionRecord rec;
      rec.t = t;
      rec.driver = here[k];
      rec.origin = h;
      rec.target = a.destination;
      rec.source = decisions[k].source;
      rec.matched = passenger[k].has_value();
      rec.earnings = tr.earnings;
      if (a.is_wait()) {
        rec.end_zone = passenger[k].value_or(h);
        rec.travel_time = rec.matched ? mx.travel_time(t, h, rec.end_zone) : 1;
        ++zs.wait_row[rec.end_zone];
      } else {
        rec.end_zone = a.destination;
        rec.travel_time = mx.travel_time(t, h, a.destination);
        ++zs.relocation_row[a.destination];
      }
      zs.earnings += tr.earnings;
      zs.records.push_back(rec);
      zs.next.push_back(tr.next);
    }
  });

  auto& tr = trace_;
  std::vector<double> zone_earnings(m, 0.0);
  int idle_total = 0;
  for (int h = 0; h < m; ++h) {
    auto& zs = zone_steps[h];
    const auto cell = tr.zone_cell(t, h);
    tr.supply[cell] = static_cast<int>(idle_by_zone[h].size());
    tr.fulfilled[cell] = zs.fulfilled;
    idle_total += tr.supply[cell];
    if (zs.unmet > 0) tr.unmet.push_back({t, h, zs.unmet});
    std::copy(zs.wait_row.begin(), zs.wait_row.end(), tr.waits.begin() + static_cast<std::ptrdiff_t>(cell * m));
    std::copy(zs.relocation_row.begin(), zs.relocation_row.end(),
              tr.relocations.begin() + static_cast<std::ptrdiff_t>(cell * m));
    for (std::size_t k = 0; k < zs.records.size(); ++k) {
      const auto& rec = zs.records[k];
      drivers_[rec.driver] = zs.next[k];
      tr.driver_earnings[rec.driver] += rec.earnings;
      if (rec.matched) ++tr.driver_rides[rec.driver];
      tr.actions.push_back(rec);
    }
    zone_earnings[h] = zs.earnings;
  }
  tr.busy[t] = static_cast<int>(drivers_.size()) - idle_total;

  ++now_;
  apply_arrivals();
  return zone_earnings;
}

EpisodeTrace run_episode(const CityMatrices& matrices, int drivers, const PolicyOracle& policy, ObjectiveMode mode,
                         std::uint64_t seed, int workers) {
  Episode episode(matrices, drivers, mode, seed, workers);
  while (!episode.done()) episode.step(policy);
  return std::move(episode).release();
}

}  // namespace hexfleet
