#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace hexfleet {

using ZoneId = int;

// Axial hex coordinate (pointy-top convention when projected to the plane).
struct AxialCoord {
  int q = 0;
  int r = 0;
  auto operator<=>(const AxialCoord&) const = default;
};

int axial_distance(AxialCoord a, AxialCoord b);

// The six axial neighbor offsets, counter-clockwise from east.
extern const AxialCoord kHexDirections[6];

// A finite set of hexagonal zones indexed 0..m-1. Ring lists around every
// zone are precomputed, so ring queries are O(1) after construction.
class HexGrid {
 public:
  explicit HexGrid(std::vector<AxialCoord> coords);

  // Filled hexagon of the given radius, m = 3r^2 + 3r + 1, zones ordered by
  // ring then counter-clockwise; zone 0 is the center.
  static HexGrid filled_hexagon(int radius);

  int size() const { return static_cast<int>(coords_.size()); }
  bool valid(ZoneId z) const { return z >= 0 && z < size(); }
  const AxialCoord& coord(ZoneId z) const;
  const std::vector<AxialCoord>& coords() const { return coords_; }
  std::optional<ZoneId> find(AxialCoord c) const;

  int distance(ZoneId a, ZoneId b) const;

  // Zones exactly k hexes from h, ascending by zone index. Empty when no zone
  // of the grid lies on that ring.
  std::span<const ZoneId> ring(ZoneId h, int k) const;

  // Largest distance from h to any zone of the grid.
  int eccentricity(ZoneId h) const;

 private:
  std::vector<AxialCoord> coords_;
  std::map<AxialCoord, ZoneId> index_;
  std::vector<std::vector<std::vector<ZoneId>>> rings_;
};

// Axial hex distance between two zones. Throws std::domain_error for an
// invalid zone index.
int hex_distance(const HexGrid& grid, ZoneId a, ZoneId b);

// {h' : hex_distance(h, h') == k}; {h} for k = 0.
std::vector<ZoneId> zones_at_distance(const HexGrid& grid, ZoneId h, int k);

}  // namespace hexfleet
