#include "hexfleet/policy_tables.hpp"

#include <algorithm>

#include "hexfleet/errors.hpp"

namespace hexfleet {

PolicyTables::PolicyTables(int horizon, int zones) : horizon_(horizon), zones_(zones) {
  require(horizon >= 1 && zones >= 1, "policy tables need a positive horizon and zone count");
  const auto pairs = static_cast<std::size_t>(horizon) * zones * zones;
  q_independent_.assign(pairs, 0.0);
  q_coordinated_.assign(pairs, 0.0);
  coordination_.assign(static_cast<std::size_t>(horizon) * zones, 0.0);
}

ZoneId PolicyTables::best_destination(TimeStep t, ZoneId h) const {
  ZoneId best = h;
  double best_value = q_independent(t, h, h);
  for (ZoneId g = 0; g < zones_; ++g) {
    const double v = q_independent(t, h, g);
    if (v > best_value) {
      best = g;
      best_value = v;
    }
  }
  return best;
}

double PolicyTables::best_value(TimeStep t, ZoneId h) const {
  if (t < 0 || t >= horizon_) return 0.0;
  const auto* row = q_independent_.data() + pair_cell(t, h, 0);
  return *std::max_element(row, row + zones_);
}

int PolicyTables::active_coordination_cells() const {
  return static_cast<int>(std::count_if(coordination_.begin(), coordination_.end(), [](double x) { return x > 0.0; }));
}

}  // namespace hexfleet
