#include "kernelsurf/geometry.hpp"

#include <cmath>
#include <string>

#include "kernelsurf/error.hpp"

namespace kernelsurf {

void OrientedPointCloud::validate() const {
  const std::size_t n = positions.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "point cloud has no points");
  auto check_size = [n](std::size_t m, const char* what) {
    if (m != 0 && m != n) {
      throw Error(ErrorCode::SizeMismatch, std::string(what) + " count " + std::to_string(m) +
                                               " does not match " + std::to_string(n) + " positions");
    }
  };
  check_size(normals.size(), "normal");
  check_size(sensor_origins.size(), "sensor origin");
  check_size(weights.size(), "weight");
  check_size(colors.size(), "color");
  for (std::size_t i = 0; i < n; ++i) {
    if (!positions[i].allFinite()) {
      throw Error(ErrorCode::InvalidConfig, "non-finite position at index " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (std::abs(normals[i].norm() - 1.0) > 1e-6) {
      throw Error(ErrorCode::InvalidConfig, "normal at index " + std::to_string(i) + " is not unit length");
    }
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0 && weights[i] <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "weight at index " + std::to_string(i) + " outside [0,1]");
    }
  }
}

std::vector<Vec3> OrientedPointCloud::weighted_positions() const {
  if (weights.empty()) return positions;
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (weights[i] > 0.0) out.push_back(positions[i]);
  }
  return out;
}

OrientedPointCloud OrientedPointCloud::subset(const std::vector<std::size_t>& indices) const {
  OrientedPointCloud out;
  out.positions.reserve(indices.size());
  for (std::size_t i : indices) out.positions.push_back(positions[i]);
  auto copy = [&](const auto& src, auto& dst) {
    if (src.empty()) return;
    dst.reserve(indices.size());
    for (std::size_t i : indices) dst.push_back(src[i]);
  };
  copy(normals, out.normals);
  copy(sensor_origins, out.sensor_origins);
  copy(weights, out.weights);
  copy(colors, out.colors);
  return out;
}

void TriangleMesh::validate() const {
  const auto n = vertices.size();
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    if (tri[0] >= n || tri[1] >= n || tri[2] >= n) {
      throw Error(ErrorCode::InvalidConfig, "triangle " + std::to_string(t) + " has an out-of-range index");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw Error(ErrorCode::InvalidConfig, "triangle " + std::to_string(t) + " repeats a vertex");
    }
  }
  if (!vertex_colors.empty() && vertex_colors.size() != n) {
    throw Error(ErrorCode::InvalidConfig, "vertex color count does not match vertex count");
  }
}

AABB bounding_box(const std::vector<Vec3>& points) {
  AABB box;
  for (const auto& p : points) box.extend(p);
  return box;
}

Vec3 triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

double mesh_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    area += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
  }
  return area;
}

}  // namespace kernelsurf
