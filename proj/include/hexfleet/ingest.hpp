#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hexfleet/city.hpp"

namespace hexfleet {

// Seconds since 1970-01-01 in the (naive) local time of the records.
using Timestamp = std::int64_t;

struct TripRecord {
  Timestamp pickup_time = 0;
  Timestamp dropoff_time = 0;
  double pickup_lon = 0.0;
  double pickup_lat = 0.0;
  double dropoff_lon = 0.0;
  double dropoff_lat = 0.0;
  double fare = 0.0;
  double distance_miles = 0.0;
};

struct BoundingBox {
  double min_lon = -74.05;
  double max_lon = -73.75;
  double min_lat = 40.60;
  double max_lat = 40.90;

  bool contains(double lon, double lat) const {
    return lon >= min_lon && lon <= max_lon && lat >= min_lat && lat <= max_lat;
  }
};

// Equirectangular projection around the box center, then pointy-top axial
// rounding at the given hex size (center-to-vertex distance).
class HexProjection {
 public:
  HexProjection(const BoundingBox& box, double hex_size_miles);

  AxialCoord locate(double lon, double lat) const;
  double hex_size_miles() const { return size_; }
  // Center-to-center distance of adjacent hexes.
  double hop_miles() const;

 private:
  double center_lon_;
  double center_lat_;
  double miles_per_lon_deg_;
  double miles_per_lat_deg_;
  double size_;
};

// Header names for the trip CSV; defaults follow the 2015 yellow-taxi files.
struct ColumnMapping {
  std::string pickup_time = "tpep_pickup_datetime";
  std::string dropoff_time = "tpep_dropoff_datetime";
  std::string pickup_lon = "pickup_longitude";
  std::string pickup_lat = "pickup_latitude";
  std::string dropoff_lon = "dropoff_longitude";
  std::string dropoff_lat = "dropoff_latitude";
  std::string fare = "fare_amount";
  std::string distance = "trip_distance";
};

// Parses "YYYY-MM-DD HH:MM:SS" (also accepts a 'T' separator).
std::optional<Timestamp> parse_timestamp(std::string_view text);

struct CsvReadStats {
  long long rows = 0;
  long long malformed = 0;
};

// Reads trip records; malformed rows are counted and skipped. An optional
// date ("YYYY-MM-DD") keeps only trips picked up on that day.
std::vector<TripRecord> read_trip_csv(const std::filesystem::path& path, const ColumnMapping& columns,
                                      const std::optional<std::string>& date = std::nullopt,
                                      CsvReadStats* stats = nullptr);

struct BinningOptions {
  BoundingBox box;
  double hex_size_miles = 1.0;
  int slice_minutes = 5;
  double cost_per_mile = 0.5;
};

struct BinningStats {
  long long retained = 0;
  long long outside_box = 0;
  long long outside_grid = 0;
  long long same_zone = 0;
  long long invalid_time = 0;
};

// Sparse city matrices: reward and travel time hold per-cell means only where
// observed[cell] is set; other cells carry placeholders (reward 0, travel 1).
struct BinnedCity {
  CityMatrices matrices;
  std::vector<std::uint8_t> observed;
  BinningStats stats;
};

BinnedCity bin_trips(std::span<const TripRecord> records, const HexGrid& grid, const BinningOptions& options);

struct PanelObservation {
  int origin = 0;
  int destination = 0;
  int time = 0;
  double value = 0.0;
};

// value ~ mean + origin[i] + destination[j] + time[t], least squares by
// backfitting. Levels without observations keep a zero effect.
struct AdditiveEffects {
  double mean = 0.0;
  std::vector<double> origin;
  std::vector<double> destination;
  std::vector<double> time;
  int iterations = 0;

  double predict(int i, int j, int t) const { return mean + origin[i] + destination[j] + time[t]; }
};

AdditiveEffects fit_additive_effects(std::span<const PanelObservation> observations, int origins,
                                     int destinations, int times, double tolerance = 1e-12,
                                     int max_iterations = 100000);

// Fills every unobserved off-diagonal travel-time and reward cell from an
// additive fixed-effects fit on the observed cells. Observed cells are left
// untouched. Throws DataError when nothing was observed.
CityMatrices impute_fixed_effects(const BinnedCity& sparse);

enum class HotspotDirection { Outbound, Inbound };

struct Hotspot {
  ZoneId zone = 0;
  double peak_time = 0.0;
  double amplitude = 0.0;
  double width = 2.0;
  HotspotDirection direction = HotspotDirection::Outbound;
};

struct SyntheticCityParams {
  int radius = 3;
  int horizon = 48;
  std::vector<Hotspot> hotspots;
  // Poisson rate per (t, origin, destination) off-diagonal cell.
  double base_rate = 0.02;
  double fare_per_hop = 3.0;
  double cost_per_hop = 1.0;
  std::uint64_t seed = 0;
  int slice_minutes = 5;
};

// Poisson demand around base_rate plus Gaussian-in-time hotspot bumps; an
// Outbound hotspot adds to cells leaving its zone, Inbound to cells entering.
// Travel time is the hex distance, reward (fare - cost) per hop, relocation
// cost cost per hop.
Scenario generate_synthetic_city(const SyntheticCityParams& params);

}  // namespace hexfleet
