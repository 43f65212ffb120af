#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <cstddef>

#include "kernelsurf/geometry.hpp"

namespace kernelsurf {

/// Integer lattice coordinate.
struct GridCoord {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  friend auto operator<=>(const GridCoord&, const GridCoord&) = default;

  GridCoord operator+(const GridCoord& o) const { return {x + o.x, y + o.y, z + o.z}; }
  std::int32_t operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

struct GridCoordHash {
  std::size_t operator()(const GridCoord& c) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(c.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint32_t>(c.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint32_t>(c.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

inline GridCoord cell_containing(const Vec3& p, double width) {
  return {static_cast<std::int32_t>(std::floor(p.x() / width)),
          static_cast<std::int32_t>(std::floor(p.y() / width)),
          static_cast<std::int32_t>(std::floor(p.z() / width))};
}

inline Vec3 cell_center(const GridCoord& c, double width) {
  return {(c.x + 0.5) * width, (c.y + 0.5) * width, (c.z + 0.5) * width};
}

inline GridCoord parent_of(const GridCoord& c) {
  // Floor division by two.
  return {c.x >> 1, c.y >> 1, c.z >> 1};
}

}  // namespace kernelsurf
