#include "hexfleet/city.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "hexfleet/errors.hpp"

namespace hexfleet {

Action Action::relocate(ZoneId from, ZoneId to) {
  require(from != to, "relocate action needs distinct origin and destination");
  return {ActionKind::Relocate, from, to};
}

CityMatrices::CityMatrices(int horizon, int zones) : horizon_(horizon), zones_(zones) {
  if (horizon < 1) throw DataError("horizon must be at least 1");
  if (zones < 1) throw DataError("zone count must be at least 1");
  const auto n = static_cast<std::size_t>(horizon) * zones * zones;
  demand_.assign(n, 0);
  travel_time_.assign(n, 1);
  reward_.assign(n, 0.0);
  cost_.assign(n, 0.0);
}

int CityMatrices::outgoing_demand(TimeStep t, ZoneId h) const {
  const auto begin = demand_.begin() + static_cast<std::ptrdiff_t>(cell(t, h, 0));
  return std::accumulate(begin, begin + zones_, 0);
}

long long CityMatrices::total_demand() const {
  return std::accumulate(demand_.begin(), demand_.end(), 0LL);
}

void CityMatrices::validate() const {
  const auto n = static_cast<std::size_t>(horizon_) * zones_ * zones_;
  if (horizon_ < 1 || zones_ < 1 || demand_.size() != n || travel_time_.size() != n ||
      reward_.size() != n || cost_.size() != n) {
    throw DataError("city matrices have inconsistent dimensions");
  }
  for (int t = 0; t < horizon_; ++t) {
    for (int h = 0; h < zones_; ++h) {
      for (int g = 0; g < zones_; ++g) {
        const auto i = cell(t, h, g);
        const auto where = [&] { return fmt::format("at (t={}, {}, {})", t, h, g); };
        if (demand_[i] < 0) throw DataError("negative demand " + where());
        if (h == g && demand_[i] != 0) throw DataError("nonzero diagonal demand " + where());
        if (h != g && travel_time_[i] < 1) throw DataError("travel time below 1 " + where());
        if (!std::isfinite(reward_[i])) throw DataError("non-finite reward " + where());
        if (!std::isfinite(cost_[i]) || cost_[i] < 0.0) throw DataError("invalid relocation cost " + where());
        if (h == g && cost_[i] != 0.0) throw DataError("nonzero diagonal relocation cost " + where());
      }
    }
  }
}

void Scenario::validate() const {
  if (grid.size() != matrices.zones()) {
    throw DataError(fmt::format("grid has {} zones but matrices have {}", grid.size(), matrices.zones()));
  }
  if (slice_minutes < 1) throw DataError("slice_minutes must be positive");
  matrices.validate();
}

}  // namespace hexfleet
