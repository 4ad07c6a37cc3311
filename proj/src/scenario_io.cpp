#include "hexfleet/scenario_io.hpp"

#include <fstream>

#include <fmt/format.h>

#include "hexfleet/errors.hpp"

namespace hexfleet {
namespace {

using nlohmann::json;

template <typename Get>
json nested(const CityMatrices& mx, Get get) {
  json out = json::array();
  for (int t = 0; t < mx.horizon(); ++t) {
    json slab = json::array();
    for (int h = 0; h < mx.zones(); ++h) {
      json row = json::array();
      for (int g = 0; g < mx.zones(); ++g) row.push_back(get(t, h, g));
      slab.push_back(std::move(row));
    }
    out.push_back(std::move(slab));
  }
  return out;
}

template <typename Set>
void read_nested(const json& doc, const char* key, const CityMatrices& mx, Set set) {
  const auto& arr = doc.at(key);
  if (!arr.is_array() || static_cast<int>(arr.size()) != mx.horizon()) {
    throw DataError(fmt::format("'{}' must have {} timesteps", key, mx.horizon()));
  }
  for (int t = 0; t < mx.horizon(); ++t) {
    const auto& slab = arr[t];
    if (!slab.is_array() || static_cast<int>(slab.size()) != mx.zones()) {
      throw DataError(fmt::format("'{}'[{}] must have {} rows", key, t, mx.zones()));
    }
    for (int h = 0; h < mx.zones(); ++h) {
      const auto& row = slab[h];
      if (!row.is_array() || static_cast<int>(row.size()) != mx.zones()) {
        throw DataError(fmt::format("'{}'[{}][{}] must have {} entries", key, t, h, mx.zones()));
      }
      for (int g = 0; g < mx.zones(); ++g) set(t, h, g, row[g]);
    }
  }
}

}  // namespace

json scenario_to_json(const Scenario& scenario) {
  const auto& mx = scenario.matrices;
  json coords = json::array();
  for (const auto& c : scenario.grid.coords()) coords.push_back({c.q, c.r});
  return json{
      {"format_version", kScenarioFormatVersion},
      {"zones", mx.zones()},
      {"horizon", mx.horizon()},
      {"slice_minutes", scenario.slice_minutes},
      {"coords", std::move(coords)},
      {"demand", nested(mx, [&](int t, int h, int g) { return mx.demand(t, h, g); })},
      {"travel_time", nested(mx, [&](int t, int h, int g) { return mx.travel_time(t, h, g); })},
      {"reward", nested(mx, [&](int t, int h, int g) { return mx.reward(t, h, g); })},
      {"relocation_cost", nested(mx, [&](int t, int h, int g) { return mx.relocation_cost(t, h, g); })},
  };
}

Scenario scenario_from_json(const json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kScenarioFormatVersion) {
      throw DataError(fmt::format("unsupported scenario format_version {}", version));
    }
    const int zones = doc.at("zones").get<int>();
    const int horizon = doc.at("horizon").get<int>();
    std::vector<AxialCoord> coords;
    for (const auto& c : doc.at("coords")) coords.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    if (static_cast<int>(coords.size()) != zones) {
      throw DataError(fmt::format("scenario declares {} zones but lists {} coords", zones, coords.size()));
    }
    Scenario s{HexGrid(std::move(coords)), CityMatrices(horizon, zones),
               doc.value("slice_minutes", 5)};
    auto& mx = s.matrices;
    read_nested(doc, "demand", mx, [&](int t, int h, int g, const json& v) { mx.demand(t, h, g) = v.get<int>(); });
    read_nested(doc, "travel_time", mx, [&](int t, int h, int g, const json& v) { mx.travel_time(t, h, g) = v.get<int>(); });
    read_nested(doc, "reward", mx, [&](int t, int h, int g, const json& v) { mx.reward(t, h, g) = v.get<double>(); });
    read_nested(doc, "relocation_cost", mx, [&](int t, int h, int g, const json& v) { mx.relocation_cost(t, h, g) = v.get<double>(); });
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed scenario document: ") + e.what());
  }
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scenario file " + path.string());
  out << scenario_to_json(scenario).dump() << '\n';
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("scenario file " + path.string() + " is not valid JSON: " + e.what());
  }
  return scenario_from_json(doc);
}

}  // namespace hexfleet
