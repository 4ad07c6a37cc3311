#include "hexfleet/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include <fmt/format.h>

#include "hexfleet/errors.hpp"
#include "hexfleet/rng.hpp"

namespace hexfleet {

namespace {

constexpr double kMilesPerLatDegree = 69.055;
constexpr double kMilesPerLonDegreeAtEquator = 69.172;

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

AxialCoord cube_round(double q, double r) {
  const double s = -q - r;
  double rq = std::round(q);
  double rr = std::round(r);
  const double rs = std::round(s);
  const double dq = std::abs(rq - q);
  const double dr = std::abs(rr - r);
  const double ds = std::abs(rs - s);
  if (dq > dr && dq > ds) {
    rq = -rr - rs;
  } else if (dr > ds) {
    rr = -rq - rs;
  }
  return {static_cast<int>(rq), static_cast<int>(rr)};
}

}  // namespace

HexProjection::HexProjection(const BoundingBox& box, double hex_size_miles)
    : center_lon_((box.min_lon + box.max_lon) / 2.0),
      center_lat_((box.min_lat + box.max_lat) / 2.0),
      miles_per_lon_deg_(kMilesPerLonDegreeAtEquator * std::cos(center_lat_ * std::numbers::pi / 180.0)),
      miles_per_lat_deg_(kMilesPerLatDegree),
      size_(hex_size_miles) {
  if (!(hex_size_miles > 0.0)) throw ConfigError("hex size must be positive");
}

AxialCoord HexProjection::locate(double lon, double lat) const {
  const double x = (lon - center_lon_) * miles_per_lon_deg_;
  const double y = (lat - center_lat_) * miles_per_lat_deg_;
  const double q = (std::numbers::sqrt3 / 3.0 * x - y / 3.0) / size_;
  const double r = (2.0 / 3.0 * y) / size_;
  return cube_round(q, r);
}

double HexProjection::hop_miles() const { return std::numbers::sqrt3 * size_; }

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if (text.size() < 19) return std::nullopt;
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (!parse_number(text.substr(0, 4), y) || text[4] != '-' || !parse_number(text.substr(5, 2), mo) ||
      text[7] != '-' || !parse_number(text.substr(8, 2), d) || (text[10] != ' ' && text[10] != 'T') ||
      !parse_number(text.substr(11, 2), hh) || text[13] != ':' || !parse_number(text.substr(14, 2), mm) ||
      text[16] != ':' || !parse_number(text.substr(17, 2), ss)) {
    return std::nullopt;
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + hh * 3600 +
         mm * 60 + ss;
}

std::vector<TripRecord> read_trip_csv(const std::filesystem::path& path, const ColumnMapping& columns,
                                      const std::optional<std::string>& date, CsvReadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trip file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("trip file " + path.string() + " has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::unordered_map<std::string, std::size_t> header;
  {
    const auto fields = split_csv_line(line);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      std::string name(fields[i]);
      std::erase(name, ' ');
      header.emplace(std::move(name), i);
    }
  }
  const auto column = [&](const std::string& name) {
    auto it = header.find(name);
    if (it == header.end()) throw DataError("trip file is missing column '" + name + "'");
    return it->second;
  };
  const std::size_t c_pt = column(columns.pickup_time), c_dt = column(columns.dropoff_time);
  const std::size_t c_plon = column(columns.pickup_lon), c_plat = column(columns.pickup_lat);
  const std::size_t c_dlon = column(columns.dropoff_lon), c_dlat = column(columns.dropoff_lat);
  const std::size_t c_fare = column(columns.fare), c_dist = column(columns.distance);
  const std::size_t needed = std::max({c_pt, c_dt, c_plon, c_plat, c_dlon, c_dlat, c_fare, c_dist});

  std::optional<std::int64_t> day;
  if (date) {
    auto ts = parse_timestamp(*date + " 00:00:00");
    if (!ts) throw ConfigError("date filter must be YYYY-MM-DD, got '" + *date + "'");
    day = *ts / 86400;
  }

  CsvReadStats local;
  std::vector<TripRecord> records;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++local.rows;
    const auto f = split_csv_line(line);
    TripRecord rec;
    std::optional<Timestamp> pt, dt;
    const bool ok = f.size() > needed && (pt = parse_timestamp(f[c_pt])) && (dt = parse_timestamp(f[c_dt])) &&
                    parse_number(f[c_plon], rec.pickup_lon) && parse_number(f[c_plat], rec.pickup_lat) &&
                    parse_number(f[c_dlon], rec.dropoff_lon) && parse_number(f[c_dlat], rec.dropoff_lat) &&
                    parse_number(f[c_fare], rec.fare) && parse_number(f[c_dist], rec.distance_miles);
    if (!ok) {
      ++local.malformed;
      continue;
    }
    rec.pickup_time = *pt;
    rec.dropoff_time = *dt;
    if (day && rec.pickup_time / 86400 != *day) continue;
    records.push_back(rec);
  }
  if (stats) *stats = local;
  return records;
}

BinnedCity bin_trips(std::span<const TripRecord> records, const HexGrid& grid, const BinningOptions& options) {
  if (options.slice_minutes < 1 || 1440 % options.slice_minutes != 0) {
    throw ConfigError(fmt::format("slice length {} min does not divide a day", options.slice_minutes));
  }
  const int horizon = 1440 / options.slice_minutes;
  const int m = grid.size();
  const HexProjection projection(options.box, options.hex_size_miles);

  BinnedCity out{CityMatrices(horizon, m), {}, {}};
  auto& mx = out.matrices;
  const auto cells = static_cast<std::size_t>(horizon) * m * m;
  std::vector<double> reward_sum(cells, 0.0);
  std::vector<double> minutes_sum(cells, 0.0);

  for (const auto& rec : records) {
    if (rec.dropoff_time <= rec.pickup_time) {
      ++out.stats.invalid_time;
      continue;
    }
    if (!options.box.contains(rec.pickup_lon, rec.pickup_lat) ||
        !options.box.contains(rec.dropoff_lon, rec.dropoff_lat)) {
      ++out.stats.outside_box;
      continue;
    }
    const auto from = grid.find(projection.locate(rec.pickup_lon, rec.pickup_lat));
    const auto to = grid.find(projection.locate(rec.dropoff_lon, rec.dropoff_lat));
    if (!from || !to) {
      ++out.stats.outside_grid;
      continue;
    }
    if (*from == *to) {
      ++out.stats.same_zone;
      continue;
    }
    const auto second_of_day = ((rec.pickup_time % 86400) + 86400) % 86400;
    const int t = static_cast<int>(second_of_day / 60) / options.slice_minutes;
    const auto i = mx.cell(t, *from, *to);
    ++mx.demand(t, *from, *to);
    reward_sum[i] += rec.fare - options.cost_per_mile * rec.distance_miles;
    minutes_sum[i] += static_cast<double>(rec.dropoff_time - rec.pickup_time) / 60.0;
    ++out.stats.retained;
  }

  out.observed.assign(cells, 0);
  const double hop_cost = options.cost_per_mile * projection.hop_miles();
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < m; ++h) {
      for (int g = 0; g < m; ++g) {
        const auto i = mx.cell(t, h, g);
        mx.relocation_cost(t, h, g) = hop_cost * grid.distance(h, g);
        const int count = mx.demand(t, h, g);
        if (count == 0) continue;
        out.observed[i] = 1;
        mx.reward(t, h, g) = reward_sum[i] / count;
        const double slices = minutes_sum[i] / count / options.slice_minutes;
        mx.travel_time(t, h, g) = std::max(1, static_cast<int>(std::ceil(slices - 1e-9)));
      }
    }
  }
  return out;
}

AdditiveEffects fit_additive_effects(std::span<const PanelObservation> observations, int origins,
                                     int destinations, int times, double tolerance, int max_iterations) {
  AdditiveEffects fx;
  fx.origin.assign(origins, 0.0);
  fx.destination.assign(destinations, 0.0);
  fx.time.assign(times, 0.0);
  if (observations.empty()) return fx;

  double total = 0.0;
  for (const auto& o : observations) total += o.value;
  fx.mean = total / static_cast<double>(observations.size());

  std::vector<double> sums;
  std::vector<int> counts;
  // Refit one factor against the partial residuals of the other two.
  const auto refit = [&](std::vector<double>& effect, auto level, auto others) {
    sums.assign(effect.size(), 0.0);
    counts.assign(effect.size(), 0);
    for (const auto& o : observations) {
      sums[level(o)] += o.value - fx.mean - others(o);
      ++counts[level(o)];
    }
    double change = 0.0;
    for (std::size_t k = 0; k < effect.size(); ++k) {
      if (counts[k] == 0) continue;
      const double updated = sums[k] / counts[k];
      change = std::max(change, std::abs(updated - effect[k]));
      effect[k] = updated;
    }
    return change;
  };

  for (fx.iterations = 1; fx.iterations <= max_iterations; ++fx.iterations) {
    double change = refit(
        fx.origin, [](const PanelObservation& o) { return o.origin; },
        [&](const PanelObservation& o) { return fx.destination[o.destination] + fx.time[o.time]; });
    change = std::max(change, refit(
                                  fx.destination, [](const PanelObservation& o) { return o.destination; },
                                  [&](const PanelObservation& o) { return fx.origin[o.origin] + fx.time[o.time]; }));
    change = std::max(change, refit(
                                  fx.time, [](const PanelObservation& o) { return o.time; },
                                  [&](const PanelObservation& o) { return fx.origin[o.origin] + fx.destination[o.destination]; }));
    if (change <= tolerance) break;
  }
  return fx;
}

CityMatrices impute_fixed_effects(const BinnedCity& sparse) {
  const auto& in = sparse.matrices;
  const int horizon = in.horizon();
  const int m = in.zones();
  if (sparse.observed.size() != in.demand_data().size()) {
    throw DataError("observation mask does not match matrix dimensions");
  }

  std::vector<PanelObservation> travel, reward;
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < m; ++h) {
      for (int g = 0; g < m; ++g) {
        if (h == g || !sparse.observed[in.cell(t, h, g)]) continue;
        travel.push_back({h, g, t, static_cast<double>(in.travel_time(t, h, g))});
        reward.push_back({h, g, t, in.reward(t, h, g)});
      }
    }
  }
  if (travel.empty()) throw DataError("cannot impute: no observed cells");

  const auto travel_fx = fit_additive_effects(travel, m, m, horizon);
  const auto reward_fx = fit_additive_effects(reward, m, m, horizon);

  CityMatrices out = in;
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < m; ++h) {
      for (int g = 0; g < m; ++g) {
        if (h == g) {
          out.travel_time(t, h, g) = 1;
          out.reward(t, h, g) = 0.0;
          continue;
        }
        if (sparse.observed[in.cell(t, h, g)]) continue;
        const double tt = travel_fx.predict(h, g, t);
        out.travel_time(t, h, g) = std::max(1, static_cast<int>(std::lround(tt)));
        out.reward(t, h, g) = reward_fx.predict(h, g, t);
      }
    }
  }
  return out;
}

Scenario generate_synthetic_city(const SyntheticCityParams& params) {
  if (params.base_rate < 0.0) throw ConfigError("base rate must be non-negative");
  if (params.horizon < 1) throw ConfigError("horizon must be at least 1");
  auto grid = HexGrid::filled_hexagon(params.radius);
  const int m = grid.size();
  Scenario s{std::move(grid), CityMatrices(params.horizon, m), params.slice_minutes};
  for (const auto& spot : params.hotspots) {
    if (!s.grid.valid(spot.zone)) throw ConfigError(fmt::format("hotspot zone {} outside grid", spot.zone));
    if (spot.amplitude < 0.0) throw ConfigError("hotspot amplitude must be non-negative");
    if (!(spot.width > 0.0)) throw ConfigError("hotspot width must be positive");
  }

  auto rng = make_stream(params.seed, {0x5e7d});
  auto& mx = s.matrices;
  for (int t = 0; t < params.horizon; ++t) {
    for (int h = 0; h < m; ++h) {
      for (int g = 0; g < m; ++g) {
        const int hops = s.grid.distance(h, g);
        mx.travel_time(t, h, g) = std::max(1, hops);
        mx.reward(t, h, g) = (params.fare_per_hop - params.cost_per_hop) * hops;
        mx.relocation_cost(t, h, g) = params.cost_per_hop * hops;
        if (h == g) continue;
        double rate = params.base_rate;
        for (const auto& spot : params.hotspots) {
          const bool hit = spot.direction == HotspotDirection::Outbound ? spot.zone == h : spot.zone == g;
          if (!hit) continue;
          const double dt = (t - spot.peak_time) / spot.width;
          rate += spot.amplitude * std::exp(-0.5 * dt * dt);
        }
        if (rate > 0.0) mx.demand(t, h, g) = std::poisson_distribution<int>(rate)(rng);
      }
    }
  }
  return s;
}

}  // namespace hexfleet
