#include "kernelsurf/extraction.hpp"

#include <algorithm>
#include <cmath>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>

#include "kernelsurf/detail/mc_tables.hpp"
#include "kernelsurf/diagnostics.hpp"
#include "kernelsurf/error.hpp"
#include "kernelsurf/log.hpp"

namespace kernelsurf {

void ExtractionConfig::validate() const {
  if (mask_mode == MaskMode::distance && !(mask_tau > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "distance mask needs a positive tau");
  }
  if (!std::isfinite(iso_value)) throw Error(ErrorCode::InvalidConfig, "iso value must be finite");
}

std::vector<GridCoord> extraction_lattice(const VoxelHierarchy& hier) {
  absl::flat_hash_set<GridCoord, GridCoordHash> core;
  for (int l = 1; l <= hier.adaptive_depth(); ++l) {
    const auto& lvl = hier.level(l);
    const int n = 1 << (l - 1);
    for (std::size_t i = 0; i < lvl.size(); ++i) {
      if (!lvl.is_leaf(i)) continue;
      const GridCoord base{lvl.coord(i).x * n, lvl.coord(i).y * n, lvl.coord(i).z * n};
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) core.insert(GridCoord{base.x + a, base.y + b, base.z + c});
    }
  }
  const int L = hier.levels();
  const auto& top = hier.level(L);
  absl::flat_hash_set<GridCoord, GridCoordHash> all = core;
  for (const auto& c : core) {
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const GridCoord nb{c.x + dx, c.y + dy, c.z + dz};
          const GridCoord up{nb.x >> (L - 1), nb.y >> (L - 1), nb.z >> (L - 1)};
          if (top.find(up) >= 0) all.insert(nb);
        }
  }
  std::vector<GridCoord> out(all.begin(), all.end());
  std::sort(out.begin(), out.end());
  return out;
}

TriangleMesh extract_on_lattice(std::span<const GridCoord> lattice, double width, const ScalarField& field,
                                double iso_value, const MaskField& mask, ExtractionStats* stats) {
  using namespace detail;
  ExtractionStats local;
  local.lattice_points = lattice.size();
  const std::size_t n = lattice.size();
  absl::flat_hash_map<GridCoord, std::uint32_t, GridCoordHash> index;
  index.reserve(n);
  for (std::size_t i = 0; i < n; ++i) index.emplace(lattice[i], static_cast<std::uint32_t>(i));

  std::vector<double> values(n);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    values[static_cast<std::size_t>(i)] = field(cell_center(lattice[static_cast<std::size_t>(i)], width));
  }

  TriangleMesh mesh;
  absl::flat_hash_map<std::uint64_t, std::uint32_t> edge_vertex;
  bool any_crossing = false;
  std::array<std::uint32_t, 8> corner{};
  for (std::size_t i = 0; i < n; ++i) {
    const GridCoord& c0 = lattice[i];
    bool complete = true;
    for (int k = 0; k < 8 && complete; ++k) {
      const auto it = index.find(GridCoord{c0.x + kCornerOffsets[k][0], c0.y + kCornerOffsets[k][1],
                                           c0.z + kCornerOffsets[k][2]});
      if (it == index.end()) {
        complete = false;
      } else {
        corner[static_cast<std::size_t>(k)] = it->second;
      }
    }
    if (!complete) continue;
    ++local.cells;
    int cube = 0;
    for (int k = 0; k < 8; ++k) {
      if (values[corner[static_cast<std::size_t>(k)]] < iso_value) cube |= 1 << k;
    }
    if (cube == 0 || cube == 255) continue;
    any_crossing = true;
    auto vertex_on = [&](int e) {
      std::uint32_t a = corner[static_cast<std::size_t>(kEdgeCorners[e][0])];
      std::uint32_t b = corner[static_cast<std::size_t>(kEdgeCorners[e][1])];
      if (lattice[b] < lattice[a]) std::swap(a, b);
      const GridCoord& ca = lattice[a];
      const GridCoord& cb = lattice[b];
      const std::uint64_t axis = cb.x != ca.x ? 0 : (cb.y != ca.y ? 1 : 2);
      const std::uint64_t key = static_cast<std::uint64_t>(a) * 3 + axis;
      const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
      if (inserted) {
        const double fa = values[a], fb = values[b];
        const double t = (iso_value - fa) / (fb - fa);
        const Vec3 pa = cell_center(ca, width), pb = cell_center(cb, width);
        mesh.vertices.push_back(pa + t * (pb - pa));
      }
      return it->second;
    };
    for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
      // The table winds triangles facing the f < iso side; reverse them.
      const auto v0 = vertex_on(kTriTable[cube][t]);
      const auto v1 = vertex_on(kTriTable[cube][t + 1]);
      const auto v2 = vertex_on(kTriTable[cube][t + 2]);
      mesh.triangles.push_back({v0, v2, v1});
    }
  }
  local.empty_field = !any_crossing;
  if (local.empty_field) logger().warn("extraction found no sign change; mesh is empty");

  if (mask && !mesh.vertices.empty()) {
    std::vector<std::uint8_t> keep(mesh.vertices.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(mesh.vertices.size()); ++v) {
      keep[static_cast<std::size_t>(v)] = mask(mesh.vertices[static_cast<std::size_t>(v)]) > 0.5 ? 1 : 0;
    }
    std::vector<std::uint32_t> remap(mesh.vertices.size(), 0);
    std::vector<Vec3> vertices;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      if (keep[v]) {
        remap[v] = static_cast<std::uint32_t>(vertices.size());
        vertices.push_back(mesh.vertices[v]);
      } else {
        ++local.trimmed_vertices;
      }
    }
    std::vector<Triangle> triangles;
    for (const auto& t : mesh.triangles) {
      if (keep[t[0]] && keep[t[1]] && keep[t[2]]) triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
    }
    mesh.vertices = std::move(vertices);
    mesh.triangles = std::move(triangles);
  }
  if (stats) *stats = local;
  return mesh;
}

TriangleMesh extract(const KernelModel& model, const FitResult& fit, const VoxelHierarchy& hier,
                     const ExtractionConfig& config, const PointGrid* mask_points, const MaskField& mask,
                     ExtractionStats* stats) {
  config.validate();
  if (static_cast<std::size_t>(fit.alpha.size()) != hier.voxel_count() ||
      hier.voxel_count() != model.hierarchy().voxel_count() || !fit.alpha.allFinite()) {
    throw Error(ErrorCode::InvalidFit, "fit does not match the hierarchy");
  }
  MaskField active;
  if (config.mask_mode == MaskMode::distance) {
    if (!mask_points) throw Error(ErrorCode::InvalidConfig, "distance mask needs the input points");
    const double tau = config.mask_tau;
    active = [mask_points, tau](const Vec3& v) { return mask_distance(v, *mask_points, tau) ? 1.0 : 0.0; };
  } else if (config.mask_mode == MaskMode::loaded) {
    if (!mask) throw Error(ErrorCode::InvalidConfig, "loaded mask mode needs a mask field");
    active = mask;
  }
  const auto lattice = extraction_lattice(hier);
  return extract_on_lattice(
      lattice, hier.voxel_size(), [&](const Vec3& x) { return eval_expansion(model, fit.alpha, x); },
      config.iso_value, active, stats);
}

TriangleMesh sample_colors(const TriangleMesh& mesh, const KernelModel& model,
                           const std::array<Eigen::VectorXd, 3>& gamma) {
  const auto count = static_cast<Eigen::Index>(model.hierarchy().voxel_count());
  for (const auto& g : gamma) {
    if (g.size() != count) throw Error(ErrorCode::SizeMismatch, "color coefficients do not match the hierarchy");
  }
  TriangleMesh out = mesh;
  out.vertex_colors.resize(mesh.vertices.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(mesh.vertices.size()); ++v) {
    Vec3 rgb;
    for (int c = 0; c < 3; ++c) {
      rgb[c] = std::clamp(eval_expansion(model, gamma[static_cast<std::size_t>(c)], mesh.vertices[static_cast<std::size_t>(v)]),
                          0.0, 1.0);
    }
    out.vertex_colors[static_cast<std::size_t>(v)] = rgb;
  }
  return out;
}

}  // namespace kernelsurf
