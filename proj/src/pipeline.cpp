#include "kernelsurf/pipeline.hpp"

#include <algorithm>

#include "kernelsurf/error.hpp"
#include "kernelsurf/log.hpp"
#include "kernelsurf/model_io.hpp"
#include "kernelsurf/normals.hpp"
#include "kernelsurf/spatial_index.hpp"

namespace kernelsurf {

bool apply_preset(std::string_view name, PipelineConfig& config) {
  struct Preset {
    std::string_view name;
    double voxel_size;
    int adaptive_depth;
    int feature_dim;
  };
  static constexpr Preset kPresets[] = {
      {"shapenet", 0.02, 1, 16}, {"abc", 0.02, 2, 4}, {"room", 0.01, 2, 4}, {"carla", 0.1, 2, 4}};
  for (const auto& p : kPresets) {
    if (p.name != name) continue;
    config.hierarchy.voxel_size = p.voxel_size;
    config.hierarchy.levels = 4;
    config.hierarchy.adaptive_depth = p.adaptive_depth;
    config.feature_dim = p.feature_dim;
    return true;
  }
  return false;
}

FittedField fit_field(const OrientedPointCloud& input, const PipelineConfig& config) {
  config.hierarchy.validate();
  config.solve.validate();
  if (config.feature_dim < 1) throw Error(ErrorCode::InvalidConfig, "feature dimension must be positive");
  if (input.size() == 0) throw Error(ErrorCode::EmptyInput, "input cloud is empty");

  const OrientedPointCloud* cloud = &input;
  OrientedPointCloud unweighted;
  if (!config.use_point_weights && input.has_weights()) {
    unweighted = input;
    unweighted.weights.clear();
    cloud = &unweighted;
  }
  NormalEstimate estimated;
  if (!cloud->has_normals()) {
    estimated = estimate_normals(*cloud, config.normal_neighbors);
    cloud = &estimated.cloud;
  }
  cloud->validate();

  FittedField out;
  // Zero-weight points take no part in the structure or the normals.
  std::shared_ptr<VoxelHierarchy> hier;
  if (cloud->has_weights() && std::find(cloud->weights.begin(), cloud->weights.end(), 0.0) != cloud->weights.end()) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < cloud->size(); ++i) {
      if (cloud->weights[i] > 0.0) kept.push_back(i);
    }
    if (kept.empty()) throw Error(ErrorCode::EmptyInput, "every point has zero weight");
    hier = std::make_shared<VoxelHierarchy>(build_from_input(cloud->subset(kept), config.hierarchy));
  } else {
    hier = std::make_shared<VoxelHierarchy>(build_from_input(*cloud, config.hierarchy));
  }
  out.hierarchy = hier;
  logger().info("hierarchy: {} voxels, {} constraints", hier->voxel_count(), hier->constraint_count());
  if (config.model_path) {
    out.model = std::make_shared<KernelModel>(load_model(*config.model_path, hier));
  } else {
    out.model = std::make_shared<KernelModel>(KernelModel::constant(hier, config.feature_dim));
  }
  std::span<const double> weights;
  if (cloud->has_weights()) weights = cloud->weights;
  out.fit = solve(*out.model, *cloud, config.solve, weights);
  if (config.extraction.color && cloud->has_colors()) {
    SolveConfig color_cfg = config.solve;
    color_cfg.ridge = 0.0;
    out.color = solve_color(*out.model, cloud->positions, cloud->colors, color_cfg);
  }
  return out;
}

Reconstruction reconstruct(const OrientedPointCloud& cloud, const PipelineConfig& config) {
  Reconstruction out;
  out.field = fit_field(cloud, config);
  ExtractionConfig extraction = config.extraction;
  if (extraction.mask_mode == MaskMode::distance && !(extraction.mask_tau > 0.0)) {
    extraction.mask_tau = 2.0 * config.hierarchy.voxel_size;
  }
  std::unique_ptr<PointGrid> mask_points;
  if (extraction.mask_mode == MaskMode::distance) {
    mask_points = std::make_unique<PointGrid>(config.use_point_weights ? cloud.weighted_positions() : cloud.positions);
  }
  out.mesh = extract(*out.field.model, out.field.fit, *out.field.hierarchy, extraction, mask_points.get(), {},
                     &out.extraction);
  if (out.field.color) out.mesh = sample_colors(out.mesh, *out.field.model, out.field.color->gamma);
  return out;
}

}  // namespace kernelsurf
