#pragma once

#include <vector>

#include "hexfleet/city.hpp"

namespace hexfleet {

// Learned state of the fleet policy.
//   independent   Q_I action values over (t, origin, destination); the
//                 diagonal holds wait-action values
//   coordinated   Q_C relocation weights over (t, origin, destination),
//                 stored un-normalized
//   coordination  xi, probability in [0, 1] that an exploiting driver at
//                 (t, h) follows the coordinated table
class PolicyTables {
 public:
  PolicyTables() = default;
  PolicyTables(int horizon, int zones);

  int horizon() const { return horizon_; }
  int zones() const { return zones_; }

  std::size_t pair_cell(TimeStep t, ZoneId h, ZoneId g) const {
    return (static_cast<std::size_t>(t) * zones_ + h) * zones_ + g;
  }
  std::size_t zone_cell(TimeStep t, ZoneId h) const { return static_cast<std::size_t>(t) * zones_ + h; }

  double& q_independent(TimeStep t, ZoneId h, ZoneId g) { return q_independent_[pair_cell(t, h, g)]; }
  double q_independent(TimeStep t, ZoneId h, ZoneId g) const { return q_independent_[pair_cell(t, h, g)]; }
  double& q_coordinated(TimeStep t, ZoneId h, ZoneId g) { return q_coordinated_[pair_cell(t, h, g)]; }
  double q_coordinated(TimeStep t, ZoneId h, ZoneId g) const { return q_coordinated_[pair_cell(t, h, g)]; }
  double& coordination(TimeStep t, ZoneId h) { return coordination_[zone_cell(t, h)]; }
  double coordination(TimeStep t, ZoneId h) const { return coordination_[zone_cell(t, h)]; }

  const std::vector<double>& q_independent_data() const { return q_independent_; }
  const std::vector<double>& q_coordinated_data() const { return q_coordinated_; }
  const std::vector<double>& coordination_data() const { return coordination_; }
  std::vector<double>& q_independent_data() { return q_independent_; }
  std::vector<double>& q_coordinated_data() { return q_coordinated_; }
  std::vector<double>& coordination_data() { return coordination_; }

  // Destination with the largest Q_I(t, h, .); ties prefer the wait action,
  // then the lowest zone index.
  ZoneId best_destination(TimeStep t, ZoneId h) const;
  // max_a Q_I(t, h, a); zero for t outside [0, T) (terminal).
  double best_value(TimeStep t, ZoneId h) const;

  // Number of (t, h) cells with xi > 0.
  int active_coordination_cells() const;

  bool operator==(const PolicyTables&) const = default;

 private:
  int horizon_ = 0;
  int zones_ = 0;
  std::vector<double> q_independent_;
  std::vector<double> q_coordinated_;
  std::vector<double> coordination_;
};

}  // namespace hexfleet
