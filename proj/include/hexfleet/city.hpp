#pragma once

#include <cstdint>
#include <vector>

#include "hexfleet/hex_grid.hpp"

namespace hexfleet {

// Timesteps are 0-based internally: t in [0, T).
using TimeStep = int;

enum class ActionKind : std::uint8_t { Wait, Relocate };

struct Action {
  ActionKind kind = ActionKind::Wait;
  ZoneId origin = 0;
  ZoneId destination = 0;

  static Action wait(ZoneId h) { return {ActionKind::Wait, h, h}; }
  static Action relocate(ZoneId from, ZoneId to);
  // Wait when from == to, Relocate otherwise.
  static Action toward(ZoneId from, ZoneId to) {
    return from == to ? wait(from) : relocate(from, to);
  }

  bool is_wait() const { return kind == ActionKind::Wait; }
  bool operator==(const Action&) const = default;
};

// Time-indexed city matrices, stored dense as T x m x m.
//   demand          ride requests per (t, origin, destination), zero diagonal
//   travel_time     whole timesteps, >= 1 off the diagonal
//   reward          net reward of carrying a passenger
//   relocation_cost cost of an empty relocation, zero diagonal
class CityMatrices {
 public:
  CityMatrices() = default;
  CityMatrices(int horizon, int zones);

  int horizon() const { return horizon_; }
  int zones() const { return zones_; }

  std::size_t cell(TimeStep t, ZoneId from, ZoneId to) const {
    return (static_cast<std::size_t>(t) * zones_ + from) * zones_ + to;
  }

  int demand(TimeStep t, ZoneId from, ZoneId to) const { return demand_[cell(t, from, to)]; }
  int travel_time(TimeStep t, ZoneId from, ZoneId to) const { return travel_time_[cell(t, from, to)]; }
  double reward(TimeStep t, ZoneId from, ZoneId to) const { return reward_[cell(t, from, to)]; }
  double relocation_cost(TimeStep t, ZoneId from, ZoneId to) const { return cost_[cell(t, from, to)]; }

  int& demand(TimeStep t, ZoneId from, ZoneId to) { return demand_[cell(t, from, to)]; }
  int& travel_time(TimeStep t, ZoneId from, ZoneId to) { return travel_time_[cell(t, from, to)]; }
  double& reward(TimeStep t, ZoneId from, ZoneId to) { return reward_[cell(t, from, to)]; }
  double& relocation_cost(TimeStep t, ZoneId from, ZoneId to) { return cost_[cell(t, from, to)]; }

  // Sum over destinations of demand(t, h, .).
  int outgoing_demand(TimeStep t, ZoneId h) const;
  long long total_demand() const;

  const std::vector<std::int32_t>& demand_data() const { return demand_; }
  const std::vector<std::int32_t>& travel_time_data() const { return travel_time_; }
  const std::vector<double>& reward_data() const { return reward_; }
  const std::vector<double>& cost_data() const { return cost_; }

  // Throws DataError naming the first offending cell.
  void validate() const;

  bool operator==(const CityMatrices&) const = default;

 private:
  int horizon_ = 0;
  int zones_ = 0;
  std::vector<std::int32_t> demand_;
  std::vector<std::int32_t> travel_time_;
  std::vector<double> reward_;
  std::vector<double> cost_;
};

// A city ready for simulation: grid geometry plus matrices of matching size.
struct Scenario {
  HexGrid grid = HexGrid::filled_hexagon(0);
  CityMatrices matrices;
  int slice_minutes = 5;

  void validate() const;
};

}  // namespace hexfleet
