#include "hexfleet/hex_grid.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "hexfleet/errors.hpp"

namespace hexfleet {

const AxialCoord kHexDirections[6] = {{1, 0}, {1, -1}, {0, -1},
                                      {-1, 0}, {-1, 1}, {0, 1}};

int axial_distance(AxialCoord a, AxialCoord b) {
  const int dq = a.q - b.q;
  const int dr = a.r - b.r;
  return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

HexGrid::HexGrid(std::vector<AxialCoord> coords) : coords_(std::move(coords)) {
  if (coords_.empty()) throw DataError("hex grid must contain at least one zone");
  for (int z = 0; z < size(); ++z) {
    if (!index_.emplace(coords_[z], z).second) {
      throw DataError("duplicate hex coordinate (" + std::to_string(coords_[z].q) +
                      "," + std::to_string(coords_[z].r) + ")");
    }
  }
  rings_.resize(coords_.size());
  for (int h = 0; h < size(); ++h) {
    auto& rings = rings_[h];
    for (int z = 0; z < size(); ++z) {
      const int d = axial_distance(coords_[h], coords_[z]);
      if (static_cast<int>(rings.size()) <= d) rings.resize(d + 1);
      rings[d].push_back(z);
    }
  }
}

HexGrid HexGrid::filled_hexagon(int radius) {
  if (radius < 0) throw ConfigError("grid radius must be non-negative");
  std::vector<AxialCoord> coords{{0, 0}};
  for (int k = 1; k <= radius; ++k) {
    // Walk the ring starting k steps in direction 4, then around.
    AxialCoord c{kHexDirections[4].q * k, kHexDirections[4].r * k};
    for (const auto& dir : kHexDirections) {
      for (int step = 0; step < k; ++step) {
        coords.push_back(c);
        c.q += dir.q;
        c.r += dir.r;
      }
    }
  }
  return HexGrid(std::move(coords));
}

const AxialCoord& HexGrid::coord(ZoneId z) const {
  if (!valid(z)) throw std::domain_error("invalid zone index " + std::to_string(z));
  return coords_[z];
}

std::optional<ZoneId> HexGrid::find(AxialCoord c) const {
  auto it = index_.find(c);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int HexGrid::distance(ZoneId a, ZoneId b) const {
  return axial_distance(coord(a), coord(b));
}

std::span<const ZoneId> HexGrid::ring(ZoneId h, int k) const {
  if (!valid(h)) throw std::domain_error("invalid zone index " + std::to_string(h));
  const auto& rings = rings_[h];
  if (k < 0 || k >= static_cast<int>(rings.size())) return {};
  return rings[k];
}

int HexGrid::eccentricity(ZoneId h) const {
  if (!valid(h)) throw std::domain_error("invalid zone index " + std::to_string(h));
  return static_cast<int>(rings_[h].size()) - 1;
}

int hex_distance(const HexGrid& grid, ZoneId a, ZoneId b) { return grid.distance(a, b); }

std::vector<ZoneId> zones_at_distance(const HexGrid& grid, ZoneId h, int k) {
  auto ring = grid.ring(h, k);
  return {ring.begin(), ring.end()};
}

}  // namespace hexfleet
