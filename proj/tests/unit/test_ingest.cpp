#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <utility>

#include "hexfleet/errors.hpp"
#include "hexfleet/ingest.hpp"

using namespace hexfleet;

namespace {

// Some lon/lat that projects into the given zone.
std::pair<double, double> point_in_zone(const HexProjection& proj, const HexGrid& grid, const BoundingBox& box,
                                        ZoneId zone) {
  for (int i = 0; i <= 400; ++i) {
    for (int j = 0; j <= 400; ++j) {
      const double lon = box.min_lon + (box.max_lon - box.min_lon) * i / 400.0;
      const double lat = box.min_lat + (box.max_lat - box.min_lat) * j / 400.0;
      if (grid.find(proj.locate(lon, lat)) == zone) return {lon, lat};
    }
  }
  FAIL("zone not reachable inside the bounding box");
  return {0.0, 0.0};
}

TripRecord trip(std::pair<double, double> from, std::pair<double, double> to, const char* pickup, int minutes,
                double fare, double miles) {
  TripRecord r;
  r.pickup_time = *parse_timestamp(pickup);
  r.dropoff_time = r.pickup_time + minutes * 60;
  std::tie(r.pickup_lon, r.pickup_lat) = from;
  std::tie(r.dropoff_lon, r.dropoff_lat) = to;
  r.fare = fare;
  r.distance_miles = miles;
  return r;
}

}  // namespace

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("1970-01-01 00:00:00") == 0);
  CHECK(parse_timestamp("2015-09-07 00:50:00") == parse_timestamp("2015-09-07T00:50:00"));
  CHECK(*parse_timestamp("2015-09-07 00:50:00") % 86400 == 50 * 60);
  CHECK_FALSE(parse_timestamp("yesterday").has_value());
  CHECK_FALSE(parse_timestamp("2015-13-07 00:50:00").has_value());
}

TEST_CASE("projection maps the box center to the origin hex") {
  const BoundingBox box;
  const HexProjection proj(box, 1.0);
  CHECK(proj.locate((box.min_lon + box.max_lon) / 2, (box.min_lat + box.max_lat) / 2) == AxialCoord{0, 0});
  CHECK(proj.hop_miles() == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("binning two identical trips") {
  const auto grid = HexGrid::filled_hexagon(3);
  BinningOptions options;
  const HexProjection proj(options.box, options.hex_size_miles);
  const auto a = point_in_zone(proj, grid, options.box, 3);
  const auto b = point_in_zone(proj, grid, options.box, 7);
  const std::vector<TripRecord> records{trip(a, b, "2015-09-07 00:50:00", 9, 10.0, 2.0),
                                        trip(a, b, "2015-09-07 00:52:30", 11, 12.0, 2.0)};
  const auto binned = bin_trips(records, grid, options);
  const auto& mx = binned.matrices;
  CHECK(mx.horizon() == 288);
  CHECK(mx.demand(10, 3, 7) == 2);
  CHECK(mx.total_demand() == 2);
  CHECK(mx.reward(10, 3, 7) == doctest::Approx(11.0 - 0.5 * 2.0));
  CHECK(mx.travel_time(10, 3, 7) == 2);
  CHECK(binned.observed[mx.cell(10, 3, 7)] == 1);
  CHECK(binned.observed[mx.cell(10, 7, 3)] == 0);
  CHECK(binned.stats.retained == 2);
}

TEST_CASE("binning drops same-zone, out-of-box and reversed trips") {
  const auto grid = HexGrid::filled_hexagon(3);
  BinningOptions options;
  const HexProjection proj(options.box, options.hex_size_miles);
  const auto a = point_in_zone(proj, grid, options.box, 3);
  const auto b = point_in_zone(proj, grid, options.box, 7);
  std::vector<TripRecord> records{trip(a, a, "2015-09-07 08:00:00", 6, 7.0, 0.4),
                                  trip({-80.0, 40.7}, b, "2015-09-07 08:00:00", 6, 7.0, 1.0),
                                  trip(a, b, "2015-09-07 08:00:00", 6, 7.0, 1.0)};
  records.back().dropoff_time = records.back().pickup_time;
  const auto binned = bin_trips(records, grid, options);
  CHECK(binned.matrices.total_demand() == 0);
  CHECK(binned.stats.same_zone == 1);
  CHECK(binned.stats.outside_box == 1);
  CHECK(binned.stats.invalid_time == 1);
}

TEST_CASE("binning conserves retained trips") {
  const auto grid = HexGrid::filled_hexagon(9);
  BinningOptions options;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lon(-74.05, -73.75), lat(40.60, 40.90);
  std::vector<TripRecord> records;
  for (int i = 0; i < 3000; ++i) {
    TripRecord r;
    r.pickup_time = 1441584000 + static_cast<Timestamp>(i) * 28;
    r.dropoff_time = r.pickup_time + 600;
    r.pickup_lon = lon(rng);
    r.pickup_lat = lat(rng);
    r.dropoff_lon = lon(rng);
    r.dropoff_lat = lat(rng);
    r.fare = 15.0;
    records.push_back(r);
  }
  const auto binned = bin_trips(records, grid, options);
  const auto& s = binned.stats;
  CHECK(binned.matrices.total_demand() == s.retained);
  CHECK(s.retained + s.outside_box + s.outside_grid + s.same_zone + s.invalid_time == 3000);
  CHECK(s.retained > 2000);
}

TEST_CASE("binning empty input") {
  const auto grid = HexGrid::filled_hexagon(2);
  const auto binned = bin_trips({}, grid, BinningOptions{});
  CHECK(binned.matrices.total_demand() == 0);
  CHECK(std::all_of(binned.observed.begin(), binned.observed.end(), [](auto o) { return o == 0; }));
  CHECK_THROWS_AS(impute_fixed_effects(binned), DataError);
}

TEST_CASE("slice length must divide a day") {
  BinningOptions options;
  options.slice_minutes = 7;
  CHECK_THROWS_AS(bin_trips({}, HexGrid::filled_hexagon(1), options), ConfigError);
}

TEST_CASE("trip CSV reading") {
  const auto path = std::filesystem::temp_directory_path() / "hexfleet_trips.csv";
  {
    std::ofstream out(path);
    out << "VendorID,tpep_pickup_datetime,tpep_dropoff_datetime,trip_distance,pickup_longitude,pickup_latitude,"
           "dropoff_longitude,dropoff_latitude,fare_amount\n";
    out << "1,2015-09-07 08:00:00,2015-09-07 08:12:00,2.5,-73.98,40.75,-73.95,40.78,11.5\n";
    out << "2,2015-09-08 08:00:00,2015-09-08 08:12:00,2.5,-73.98,40.75,-73.95,40.78,11.5\n";
    out << "2,not a time,2015-09-07 08:12:00,2.5,-73.98,40.75,-73.95,40.78,11.5\n";
    out << "2,2015-09-07 09:00:00,2015-09-07 09:12:00,1.0,-73.98,40.75\n";
  }
  CsvReadStats stats;
  const auto all = read_trip_csv(path, ColumnMapping{}, std::nullopt, &stats);
  CHECK(all.size() == 2);
  CHECK(stats.rows == 4);
  CHECK(stats.malformed == 2);
  CHECK(all[0].fare == 11.5);
  CHECK(all[0].distance_miles == 2.5);
  CHECK(all[0].dropoff_time - all[0].pickup_time == 720);

  const auto one_day = read_trip_csv(path, ColumnMapping{}, std::string("2015-09-07"));
  CHECK(one_day.size() == 1);

  ColumnMapping renamed;
  renamed.fare = "total";
  CHECK_THROWS_AS(read_trip_csv(path, renamed), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("additive fit recovers a deleted cell") {
  const double row[3] = {0, 2, 4};
  const double col[3] = {0, 1, 2};
  std::vector<PanelObservation> obs;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == 2 && j == 1) continue;
      obs.push_back({i, j, 0, 5.0 + row[i] + col[j]});
    }
  }
  const auto fit = fit_additive_effects(obs, 3, 3, 1);
  CHECK(fit.predict(2, 1, 0) == doctest::Approx(5.0 + 4 + 1).epsilon(1e-9));
  for (const auto& o : obs) CHECK(fit.predict(o.origin, o.destination, o.time) == doctest::Approx(o.value));
}

TEST_CASE("imputation") {
  const auto grid = HexGrid::filled_hexagon(1);

  SUBCASE("single observed cell spreads everywhere") {
    BinnedCity b{CityMatrices(2, 7), std::vector<std::uint8_t>(2 * 49, 0), {}};
    b.matrices.demand(1, 2, 5) = 1;
    b.matrices.reward(1, 2, 5) = 8.5;
    b.matrices.travel_time(1, 2, 5) = 3;
    b.observed[b.matrices.cell(1, 2, 5)] = 1;
    const auto out = impute_fixed_effects(b);
    for (int t = 0; t < 2; ++t) {
      for (int h = 0; h < 7; ++h) {
        for (int g = 0; g < 7; ++g) {
          if (h == g) continue;
          CHECK(out.reward(t, h, g) == doctest::Approx(8.5));
          CHECK(out.travel_time(t, h, g) == 3);
        }
      }
    }
    CHECK_NOTHROW(out.validate());
  }

  SUBCASE("observed cells are untouched and travel times stay positive") {
    BinnedCity b{CityMatrices(3, 7), std::vector<std::uint8_t>(3 * 49, 0), {}};
    std::mt19937_64 rng(2);
    for (int t = 0; t < 3; ++t) {
      for (int h = 0; h < 7; ++h) {
        for (int g = 0; g < 7; ++g) {
          if (h == g || rng() % 3 == 0) continue;
          b.matrices.demand(t, h, g) = 1;
          b.matrices.reward(t, h, g) = static_cast<double>(rng() % 100) / 7.0 - 3.0;
          b.matrices.travel_time(t, h, g) = 1 + static_cast<int>(rng() % 5);
          b.observed[b.matrices.cell(t, h, g)] = 1;
        }
      }
    }
    const auto out = impute_fixed_effects(b);
    for (std::size_t i = 0; i < b.observed.size(); ++i) {
      CHECK(out.travel_time_data()[i] >= 1);
      CHECK(std::isfinite(out.reward_data()[i]));
      if (b.observed[i]) {
        CHECK(out.reward_data()[i] == b.matrices.reward_data()[i]);
        CHECK(out.travel_time_data()[i] == b.matrices.travel_time_data()[i]);
      }
    }
  }
}

TEST_CASE("synthetic city") {
  SyntheticCityParams p;
  p.radius = 2;
  p.horizon = 12;
  p.seed = 9;
  p.hotspots = {{0, 6.0, 1.5, 2.0, HotspotDirection::Outbound}};

  SUBCASE("deterministic per seed") {
    const auto a = generate_synthetic_city(p);
    const auto b = generate_synthetic_city(p);
    CHECK(a.matrices == b.matrices);
    p.seed = 10;
    CHECK_FALSE(generate_synthetic_city(p).matrices == a.matrices);
  }
  SUBCASE("zero process") {
    p.base_rate = 0.0;
    p.hotspots = {{0, 6.0, 0.0, 2.0, HotspotDirection::Inbound}};
    CHECK(generate_synthetic_city(p).matrices.total_demand() == 0);
  }
  SUBCASE("travel time, reward and cost follow hop distance") {
    const auto s = generate_synthetic_city(p);
    CHECK_NOTHROW(s.validate());
    const int d = s.grid.distance(1, 12);
    CHECK(s.matrices.travel_time(4, 1, 12) == d);
    CHECK(s.matrices.reward(4, 1, 12) == doctest::Approx((p.fare_per_hop - p.cost_per_hop) * d));
    CHECK(s.matrices.relocation_cost(4, 1, 12) == doctest::Approx(p.cost_per_hop * d));
  }
  SUBCASE("total demand matches the Poisson mean") {
    p.radius = 1;
    p.horizon = 10;
    p.base_rate = 2.0;
    p.hotspots.clear();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      p.seed = seed;
      const auto total = static_cast<double>(generate_synthetic_city(p).matrices.total_demand());
      CHECK(std::abs(total - 840.0) <= 4.0 * std::sqrt(840.0));
    }
  }
  SUBCASE("negative rates are rejected") {
    p.base_rate = -1.0;
    CHECK_THROWS_AS(generate_synthetic_city(p), ConfigError);
  }
}
