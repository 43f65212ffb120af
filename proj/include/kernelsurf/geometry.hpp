#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace kernelsurf {

using Vec3 = Eigen::Vector3d;

/// Input points with optional per-point attributes. Every attribute vector
/// is either empty (absent) or has exactly one entry per position.
struct OrientedPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<Vec3> sensor_origins;
  std::vector<double> weights;
  std::vector<Vec3> colors;  // RGB in [0,1]

  std::size_t size() const { return positions.size(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_sensors() const { return !sensor_origins.empty(); }
  bool has_weights() const { return !weights.empty(); }
  bool has_colors() const { return !colors.empty(); }

  /// Throws Error(EmptyInput) for zero points, Error(SizeMismatch) for ragged
  /// attributes and Error(InvalidConfig) for non-finite positions, non-unit
  /// normals or weights outside [0,1].
  void validate() const;

  /// Copy holding only the points at `indices`, attributes included.
  OrientedPointCloud subset(const std::vector<std::size_t>& indices) const;

  /// Positions of the points with positive weight (all points without weights).
  std::vector<Vec3> weighted_positions() const;
};

using Triangle = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vec3> vertex_colors;  // empty or one RGB per vertex

  bool empty() const { return triangles.empty(); }

  /// Throws Error(InvalidConfig) on out-of-range or repeated indices.
  void validate() const;
};

struct AABB {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

AABB bounding_box(const std::vector<Vec3>& points);

Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c);
double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double mesh_area(const TriangleMesh& mesh);

}  // namespace kernelsurf
