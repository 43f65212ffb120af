#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "kernelsurf/geometry.hpp"
#include "kernelsurf/grid.hpp"

namespace kernelsurf {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Uniform grid hash over a fixed point set for exact nearest neighbor,
/// k-nearest and radius queries. The point set is copied; the index is
/// immutable after construction.
class PointGrid {
 public:
  /// cell_size <= 0 picks a size from the point density.
  explicit PointGrid(std::span<const Vec3> points, double cell_size = 0.0);

  std::size_t size() const { return points_.size(); }
  double cell_size() const { return cell_size_; }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// Exact nearest point. Ties resolve to the smallest index.
  Neighbor nearest(const Vec3& x) const;

  /// The k nearest points sorted by (distance, index).
  std::vector<Neighbor> knearest(const Vec3& x, std::size_t k) const;

  /// All points with distance <= radius, sorted by index.
  std::vector<std::size_t> within(const Vec3& x, double radius) const;

  bool any_within(const Vec3& x, double radius) const;

 private:
  GridCoord cell_of(const Vec3& x) const;
  template <typename Visit>
  void visit_cell(const GridCoord& c, Visit&& visit) const;
  double lower_bound(const Vec3& x, const GridCoord& c) const;

  std::vector<Vec3> points_;
  double cell_size_ = 1.0;
  std::vector<std::uint32_t> order_;  // point indices grouped by cell
  absl::flat_hash_map<GridCoord, std::pair<std::uint32_t, std::uint32_t>, GridCoordHash> cells_;
  std::vector<GridCoord> occupied_;
};

}  // namespace kernelsurf
