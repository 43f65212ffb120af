#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "kernelsurf/geometry.hpp"

namespace kernelsurf {

/// Area-weighted uniform samples with face normals.
/// Throws Error(EmptyMesh) for a mesh without triangles.
OrientedPointCloud sample_mesh(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed = 0);

struct ChamferResult {
  double chamfer = 0.0;       // (completeness + accuracy) / 2
  double completeness = 0.0;  // mean over gt of distance to pred
  double accuracy = 0.0;      // mean over pred of distance to gt
};

struct FScoreResult {
  double fscore = 0.0;  // percent
  double precision = 0.0;
  double recall = 0.0;
  double xi = 0.0;
};

/// Throws Error(EmptyInput) when either set is empty.
ChamferResult chamfer(std::span<const Vec3> gt, std::span<const Vec3> pred);

/// Strict "< xi" matches. Precision iterates pred, recall iterates gt.
FScoreResult fscore(std::span<const Vec3> gt, std::span<const Vec3> pred, double xi);

/// Mean absolute cosine between each normal and its nearest neighbor's in
/// the other set, averaged over both directions.
double normal_consistency(const OrientedPointCloud& gt, const OrientedPointCloud& pred);

struct MetricReport {
  ChamferResult chamfer;
  FScoreResult fscore;
  double normal_consistency = 0.0;
  std::size_t gt_count = 0;
  std::size_t pred_count = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

/// All metrics from one pair of nearest-neighbor passes.
MetricReport evaluate_clouds(const OrientedPointCloud& gt, const OrientedPointCloud& pred, double xi,
                             std::uint64_t seed = 0);

}  // namespace kernelsurf
