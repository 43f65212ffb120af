#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <absl/container/flat_hash_map.h>

#include "kernelsurf/basis.hpp"
#include "kernelsurf/geometry.hpp"
#include "kernelsurf/grid.hpp"

namespace kernelsurf {

/// Level 1 is the finest level with width W; level l has width W * 2^(l-1).
/// Coordinates are global lattice indices, so center = (ijk + 0.5) * width
/// and voxel centers of hierarchies built on different inputs coincide
/// bitwise at equal keys.
struct VoxelKey {
  int level = 1;
  GridCoord ijk;

  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct HierarchyConfig {
  double voxel_size = 0.02;  // W
  int levels = 4;            // L
  int adaptive_depth = 2;    // L'
  double subdivision_threshold = 0.1;

  /// Throws Error(InvalidConfig).
  void validate() const;
};

class VoxelLevel {
 public:
  VoxelLevel() = default;
  VoxelLevel(double width, std::vector<GridCoord> coords);

  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }
  double width() const { return width_; }

  /// Lexicographically sorted.
  std::span<const GridCoord> coords() const { return coords_; }
  const GridCoord& coord(std::size_t i) const { return coords_[i]; }
  const Vec3& center(std::size_t i) const { return centers_[i]; }
  const Vec3& normal(std::size_t i) const { return normals_[i]; }
  bool is_leaf(std::size_t i) const { return leaf_[i] != 0; }
  std::span<const Vec3> centers() const { return centers_; }
  std::span<const Vec3> normals() const { return normals_; }

  /// Index of the voxel at `c`, or -1.
  std::int64_t find(const GridCoord& c) const {
    auto it = lookup_.find(c);
    return it == lookup_.end() ? -1 : static_cast<std::int64_t>(it->second);
  }

  /// Calls visit(index, s) for every voxel whose kernel support contains x,
  /// where s = (x - center) / width has all components in (-1.5, 1.5).
  template <typename Visit>
  void for_each_support(const Vec3& x, Visit&& visit) const {
    if (coords_.empty()) return;
    const GridCoord base = cell_containing(x, width_);
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const auto it = lookup_.find(GridCoord{base.x + dx, base.y + dy, base.z + dz});
          if (it == lookup_.end()) continue;
          const Vec3 s = (x - centers_[it->second]) / width_;
          if (std::abs(s.x()) >= 1.5 || std::abs(s.y()) >= 1.5 || std::abs(s.z()) >= 1.5) continue;
          visit(static_cast<std::size_t>(it->second), s);
        }
      }
    }
  }

 private:
  friend class VoxelHierarchy;

  double width_ = 1.0;
  std::vector<GridCoord> coords_;
  std::vector<Vec3> centers_;
  std::vector<Vec3> normals_;
  std::vector<std::uint8_t> leaf_;
  absl::flat_hash_map<GridCoord, std::uint32_t, GridCoordHash> lookup_;
};

class VoxelHierarchy {
 public:
  VoxelHierarchy() = default;

  /// Hierarchy over an explicit voxel set. Missing ancestors are added so
  /// that containment holds; leaf flags are derived from child presence.
  /// Normals start at zero.
  static VoxelHierarchy from_keys(const HierarchyConfig& config, const std::vector<VoxelKey>& keys);

  double voxel_size() const { return config_.voxel_size; }
  int levels() const { return config_.levels; }
  int adaptive_depth() const { return config_.adaptive_depth; }
  const HierarchyConfig& config() const { return config_; }
  double width(int level) const { return std::ldexp(config_.voxel_size, level - 1); }

  /// Axis-aligned floor of the input bounds snapped to the coarsest width.
  const Vec3& origin() const { return origin_; }

  /// 1-based level access.
  const VoxelLevel& level(int l) const { return levels_.at(static_cast<std::size_t>(l - 1)); }

  /// Global unknown index of voxel i at level l is offset(l) + i.
  std::size_t offset(int l) const { return offsets_.at(static_cast<std::size_t>(l - 1)); }
  std::size_t voxel_count() const { return offsets_.empty() ? 0 : offsets_.back(); }

  /// Voxels carrying gradient constraints: levels 1..L'.
  std::size_t constraint_count() const { return offset(config_.adaptive_depth + 1); }

  VoxelKey key_of(std::size_t global_index) const;

  void set_normals(int l, std::vector<Vec3> normals);

  /// Normal of each voxel = normalized K_b weighted sum of the cloud normals,
  /// each scaled by its point weight when present; voxels with zero mass get
  /// the zero vector.
  void splat_normals(const OrientedPointCloud& cloud);

  /// Text dump: header lines, then one "level i j k cx cy cz leaf nx ny nz"
  /// line per voxel in global index order.
  void dump(std::ostream& os) const;
  void dump(const std::filesystem::path& path) const;
  static VoxelHierarchy load(std::istream& is);
  static VoxelHierarchy load(const std::filesystem::path& path);

 private:
  friend class HierarchyBuilder;
  void finalize(std::vector<std::vector<GridCoord>> coords_per_level);

  HierarchyConfig config_;
  Vec3 origin_ = Vec3::Zero();
  std::vector<VoxelLevel> levels_;
  std::vector<std::size_t> offsets_;  // size L + 1
};

/// Reference construction from a dense oriented cloud: start at the occupied
/// coarsest voxels, subdivide where the summed per-axis standard deviation
/// of contained normals exceeds the threshold, force subdivision of every
/// point-bearing voxel above level L'. Children only where points exist.
/// Voxel normal = normalized mean of contained normals.
VoxelHierarchy build_from_dense(const OrientedPointCloud& dense, const HierarchyConfig& config);

/// As build_from_dense, with each level's occupied set dilated by its
/// face-adjacent neighbors (inside subdivided parents) before subdivision.
/// Voxel normals are K_b splatted from the input.
VoxelHierarchy build_from_input(const OrientedPointCloud& cloud, const HierarchyConfig& config);

/// Criterion value for a set of unit normals: std(nx) + std(ny) + std(nz).
double normal_variation(std::span<const Vec3> normals);

std::vector<std::pair<VoxelKey, Vec3>> voxels_at(const VoxelHierarchy& hier, int level);

std::vector<std::pair<VoxelKey, double>> bezier_weights(const VoxelHierarchy& hier, int level,
                                                        const Vec3& x);

/// Sum of K_b weight * feature row over the supporting voxels. `features`
/// has one row per voxel of the level, in voxels_at order.
Eigen::VectorXd interpolate_feature(const VoxelHierarchy& hier, int level, const Vec3& x,
                                    const Eigen::MatrixXd& features);

}  // namespace kernelsurf
