#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <algorithm>
#include <array>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "kernelsurf/geometry.hpp"

namespace kernelsurf::testing {

inline std::vector<Vec3> random_sphere(std::size_t n, std::uint64_t seed, double radius = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(g(rng), g(rng), g(rng)).normalized() * radius;
  return out;
}

inline std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius = 1.0) {
  std::vector<Vec3> out(n);
  const double golden = std::numbers::pi * (1.0 + std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double phi = std::acos(1.0 - 2.0 * t);
    const double theta = golden * (static_cast<double>(i) + 0.5);
    out[i] = radius * Vec3(std::cos(theta) * std::sin(phi), std::sin(theta) * std::sin(phi), std::cos(phi));
  }
  return out;
}

inline OrientedPointCloud sphere_cloud(std::size_t n, std::uint64_t seed, double radius = 1.0) {
  OrientedPointCloud c;
  c.positions = random_sphere(n, seed, radius);
  for (const auto& p : c.positions) c.normals.push_back(p.normalized());
  return c;
}

inline double brute_nearest(const std::vector<Vec3>& pts, const Vec3& x, std::size_t* index = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = (x - pts[i]).norm();
    if (d < best) {
      best = d;
      if (index) *index = i;
    }
  }
  return best;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kernelsurf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Plane z = 0 over [0, extent]^2 with an axis-aligned box standing on it.
/// Box faces and the plane are sampled uniformly by area; normals point up
/// or out of the box.
inline OrientedPointCloud plane_box_scene(std::size_t n, std::uint64_t seed, double extent = 2.0) {
  const Vec3 lo(0.35 * extent, 0.35 * extent, 0.0), hi(0.65 * extent, 0.65 * extent, 0.2 * extent);
  const Vec3 size = hi - lo;
  const double plane_area = extent * extent - size.x() * size.y();
  const double top = size.x() * size.y();
  const double side_x = size.y() * size.z(), side_y = size.x() * size.z();
  const std::array<double, 6> area = {plane_area, top, side_x, side_x, side_y, side_y};
  std::discrete_distribution<int> pick(area.begin(), area.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::mt19937_64 rng(seed);
  OrientedPointCloud c;
  while (c.size() < n) {
    const int face = pick(rng);
    const double a = u(rng), b = u(rng);
    Vec3 p, nrm;
    switch (face) {
      case 0:
        p = Vec3(a * extent, b * extent, 0.0);
        if (p.x() > lo.x() && p.x() < hi.x() && p.y() > lo.y() && p.y() < hi.y()) continue;
        nrm = Vec3(0, 0, 1);
        break;
      case 1: p = Vec3(lo.x() + a * size.x(), lo.y() + b * size.y(), hi.z()); nrm = Vec3(0, 0, 1); break;
      case 2: p = Vec3(lo.x(), lo.y() + a * size.y(), b * size.z()); nrm = Vec3(-1, 0, 0); break;
      case 3: p = Vec3(hi.x(), lo.y() + a * size.y(), b * size.z()); nrm = Vec3(1, 0, 0); break;
      case 4: p = Vec3(lo.x() + a * size.x(), lo.y(), b * size.z()); nrm = Vec3(0, -1, 0); break;
      default: p = Vec3(lo.x() + a * size.x(), hi.y(), b * size.z()); nrm = Vec3(0, 1, 0); break;
    }
    c.positions.push_back(p);
    c.normals.push_back(nrm);
  }
  return c;
}

/// Height field around z = 1 with boxes standing on it, sampled by area.
inline OrientedPointCloud terrain_scene(std::size_t n, std::uint64_t seed, double extent) {
  auto height = [](double x, double y) {
    return 1.0 + 0.3 * std::sin(0.7 * x) * std::cos(0.5 * y) + 0.1 * std::sin(1.9 * x + 0.3);
  };
  auto grad = [](double x, double y) {
    return Vec3(0.21 * std::cos(0.7 * x) * std::cos(0.5 * y) + 0.19 * std::cos(1.9 * x + 0.3),
                -0.15 * std::sin(0.7 * x) * std::sin(0.5 * y), 0.0);
  };
  struct Box { Vec3 lo, hi; };
  std::vector<Box> boxes;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int box_count = std::max(1, static_cast<int>(extent * extent / 40.0));
  for (int i = 0; i < box_count; ++i) {
    const double x = 1.0 + u(rng) * (extent - 3.0), y = 1.0 + u(rng) * (extent - 3.0);
    const double s = 0.5 + u(rng);
    const double base = height(x + 0.5 * s, y + 0.5 * s);
    boxes.push_back({Vec3(x, y, base - 0.3), Vec3(x + s, y + s, base + 0.4 + 0.6 * u(rng))});
  }
  auto inside_box = [&](double x, double y) {
    for (const auto& b : boxes) if (x > b.lo.x() && x < b.hi.x() && y > b.lo.y() && y < b.hi.y()) return true;
    return false;
  };
  // Face list: terrain, then five faces per box (no bottom).
  std::vector<double> area = {extent * extent};
  for (const auto& b : boxes) {
    const Vec3 s = b.hi - b.lo;
    area.insert(area.end(), {s.x() * s.y(), s.y() * s.z(), s.y() * s.z(), s.x() * s.z(), s.x() * s.z()});
  }
  std::discrete_distribution<std::size_t> face(area.begin(), area.end());
  OrientedPointCloud c;
  c.positions.reserve(n);
  c.normals.reserve(n);
  while (c.size() < n) {
    const std::size_t f = face(rng);
    const double a = u(rng), b = u(rng);
    if (f == 0) {
      const double x = a * extent, y = b * extent;
      if (inside_box(x, y)) continue;
      const double z = height(x, y);
      const Vec3 gr = grad(x, y);
      c.positions.emplace_back(x, y, z);
      c.normals.push_back(Vec3(-gr.x(), -gr.y(), 1.0).normalized());
      continue;
    }
    const Box& bx = boxes[(f - 1) / 5];
    const Vec3 s = bx.hi - bx.lo;
    Vec3 p, nrm;
    switch ((f - 1) % 5) {
      case 0: p = Vec3(bx.lo.x() + a * s.x(), bx.lo.y() + b * s.y(), bx.hi.z()); nrm = Vec3(0, 0, 1); break;
      case 1: p = Vec3(bx.lo.x(), bx.lo.y() + a * s.y(), bx.lo.z() + b * s.z()); nrm = Vec3(-1, 0, 0); break;
      case 2: p = Vec3(bx.hi.x(), bx.lo.y() + a * s.y(), bx.lo.z() + b * s.z()); nrm = Vec3(1, 0, 0); break;
      case 3: p = Vec3(bx.lo.x() + a * s.x(), bx.lo.y(), bx.lo.z() + b * s.z()); nrm = Vec3(0, -1, 0); break;
      default: p = Vec3(bx.lo.x() + a * s.x(), bx.hi.y(), bx.lo.z() + b * s.z()); nrm = Vec3(0, 1, 0); break;
    }
    // Skip the part of a wall buried under the terrain.
    if (p.z() < height(p.x(), p.y())) continue;
    c.positions.push_back(p);
    c.normals.push_back(nrm);
  }
  return c;
}

struct MeshTopology {
  std::size_t edges = 0;
  std::size_t boundary_edges = 0;     // one incident triangle
  std::size_t nonmanifold_edges = 0;  // three or more
  std::size_t components = 0;
  double signed_volume = 0.0;
};

inline MeshTopology mesh_topology(const TriangleMesh& mesh) {
  MeshTopology t;
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
  std::vector<std::uint32_t> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t a = tri[k], b = tri[(k + 1) % 3];
      ++count[{std::min(a, b), std::max(a, b)}];
      parent[find(a)] = find(b);
    }
    t.signed_volume += mesh.vertices[tri[0]].dot(mesh.vertices[tri[1]].cross(mesh.vertices[tri[2]])) / 6.0;
  }
  t.edges = count.size();
  for (const auto& [e, c] : count) {
    t.boundary_edges += c == 1 ? 1 : 0;
    t.nonmanifold_edges += c > 2 ? 1 : 0;
  }
  std::vector<char> root(mesh.vertices.size(), 0);
  for (const auto& tri : mesh.triangles) root[find(tri[0])] = 1;
  t.components = static_cast<std::size_t>(std::count(root.begin(), root.end(), 1));
  return t;
}

}  // namespace kernelsurf::testing
