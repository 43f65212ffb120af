#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "kernelsurf/geometry.hpp"
#include "kernelsurf/grid.hpp"
#include "kernelsurf/hierarchy.hpp"
#include "kernelsurf/kernel_field.hpp"
#include "kernelsurf/spatial_index.hpp"

namespace kernelsurf {

enum class MaskMode { none, distance, loaded };

struct ExtractionConfig {
  MaskMode mask_mode = MaskMode::none;
  double mask_tau = 0.0;  // distance mode, > 0
  bool color = false;
  double iso_value = 0.0;

  void validate() const;
};

using ScalarField = std::function<double(const Vec3&)>;
/// Vertices with mask value <= 0.5 are trimmed.
using MaskField = std::function<double(const Vec3&)>;

struct ExtractionStats {
  std::size_t lattice_points = 0;
  std::size_t cells = 0;
  std::size_t trimmed_vertices = 0;
  bool empty_field = false;  // no sign change anywhere
};

/// Finest-resolution dual lattice: the level-1 cells covering every leaf at
/// levels 1..L' (coarser leaves refined to width W), plus the ring of 26
/// neighbors of those cells that still lies inside the hierarchy. Sorted,
/// unique.
std::vector<GridCoord> extraction_lattice(const VoxelHierarchy& hier);

/// Marching cubes over the dual grid whose vertices are the lattice cell
/// centers. Cells are emitted only where all eight corners are present;
/// vertices on a shared edge are shared. Triangles wind counter-clockwise
/// seen from the side where f > iso.
TriangleMesh extract_on_lattice(std::span<const GridCoord> lattice, double width, const ScalarField& field,
                                double iso_value, const MaskField& mask = {},
                                ExtractionStats* stats = nullptr);

/// Zero level set of the fitted field. Distance mode trims vertices farther
/// than mask_tau from `mask_points`; loaded mode uses `mask`.
/// Throws Error(InvalidFit) when the fit does not match the hierarchy.
TriangleMesh extract(const KernelModel& model, const FitResult& fit, const VoxelHierarchy& hier,
                     const ExtractionConfig& config, const PointGrid* mask_points = nullptr,
                     const MaskField& mask = {}, ExtractionStats* stats = nullptr);

/// Per-vertex RGB = clamp(g(v), 0, 1) for the three color expansions.
TriangleMesh sample_colors(const TriangleMesh& mesh, const KernelModel& model,
                           const std::array<Eigen::VectorXd, 3>& gamma);

}  // namespace kernelsurf
