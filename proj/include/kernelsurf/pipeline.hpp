#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "kernelsurf/extraction.hpp"
#include "kernelsurf/geometry.hpp"
#include "kernelsurf/hierarchy.hpp"
#include "kernelsurf/kernel_field.hpp"
#include "kernelsurf/solver.hpp"

namespace kernelsurf {

struct PipelineConfig {
  HierarchyConfig hierarchy{0.02, 4, 2, 0.1};
  SolveConfig solve;
  ExtractionConfig extraction;
  int feature_dim = 4;
  std::optional<std::filesystem::path> model_path;
  std::size_t normal_neighbors = 16;
  // Use cloud.weights when present: they scale the value term and the splatted
  // normals, and zero-weight points are left out of the hierarchy and the mask.
  bool use_point_weights = true;
};

/// Dataset presets: shapenet, abc, room, carla. Returns false for an unknown name.
bool apply_preset(std::string_view name, PipelineConfig& config);

struct FittedField {
  std::shared_ptr<const VoxelHierarchy> hierarchy;
  std::shared_ptr<const KernelModel> model;
  FitResult fit;
  std::optional<ColorFit> color;
};

/// Normals (estimated when missing), hierarchy, kernel model (loaded or
/// constant), solve, and the optional color solve.
FittedField fit_field(const OrientedPointCloud& cloud, const PipelineConfig& config);

struct Reconstruction {
  FittedField field;
  TriangleMesh mesh;
  ExtractionStats extraction;
};

Reconstruction reconstruct(const OrientedPointCloud& cloud, const PipelineConfig& config);

}  // namespace kernelsurf
