#pragma once

#include <vector>

#include "hexfleet/city.hpp"
#include "hexfleet/hex_grid.hpp"

namespace hexfleet::testing {

// Matrices with zero demand, unit travel time off the diagonal and a flat
// relocation cost.
inline CityMatrices flat_matrices(int horizon, int zones, int travel = 1, double cost = 0.0) {
  CityMatrices mx(horizon, zones);
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < zones; ++h) {
      for (int g = 0; g < zones; ++g) {
        mx.travel_time(t, h, g) = h == g ? 1 : travel;
        mx.relocation_cost(t, h, g) = h == g ? 0.0 : cost;
      }
    }
  }
  return mx;
}

// Two adjacent zones.
inline HexGrid pair_grid() { return HexGrid({{0, 0}, {1, 0}}); }

inline Scenario make_scenario(HexGrid grid, CityMatrices mx) {
  Scenario s{std::move(grid), std::move(mx), 5};
  s.validate();
  return s;
}

}  // namespace hexfleet::testing
