#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "kernelsurf/geometry.hpp"
#include "kernelsurf/grid.hpp"
#include "kernelsurf/kernel_field.hpp"
#include "kernelsurf/pipeline.hpp"
#include "kernelsurf/solver.hpp"
#include "kernelsurf/spatial_index.hpp"

namespace kernelsurf {

/// One axis-aligned block. `core` boxes tile space; a chunk fits the points
/// inside `data` (core grown by the overlap) and answers field queries
/// inside `cover` (core grown by half the overlap).
struct Chunk {
  GridCoord index;
  AABB core;
  AABB cover;
  AABB data;
  Vec3 translation = Vec3::Zero();  // chunk frame = world frame - translation
  std::vector<std::size_t> points;
};

struct ChunkLayout {
  double chunk_size = 0.0;
  double overlap = 0.0;
  std::vector<Chunk> chunks;  // non-empty chunks, sorted by index
};

/// Chunk grid aligned to multiples of `snap` (the coarsest voxel width).
/// Throws Error(InvalidConfig) unless chunk_size > 2 * overlap > 0.
ChunkLayout plan_chunks(const OrientedPointCloud& cloud, double chunk_size, double overlap, double snap);

struct ChunkField {
  std::shared_ptr<const KernelModel> model;
  FitResult fit;
  std::shared_ptr<const PointGrid> mask_points;  // null: mask is 1 inside cover
  double mask_tau = 0.0;
  Vec3 translation = Vec3::Zero();
  AABB cover;

  /// Soft mask in [0,1] at a world point; 0 outside the cover box.
  double mask(const Vec3& x) const;
  double field(const Vec3& x) const;
};

struct MergedSample {
  double f = 0.0;
  double mask = 0.0;
  bool defined = false;  // false when no covering chunk has positive mask
};

/// Mask-weighted average of the chunk fields and the max mask. Contributions
/// are summed in a fixed order so the result ignores chunk ordering.
MergedSample merge_eval(std::span<const ChunkField> chunks, const Vec3& x);

/// merge_eval's value where defined; elsewhere the plain average of the
/// covering chunk fields (0 outside every cover). This is the field the
/// chunked extraction contours.
double merged_field(std::span<const ChunkField> chunks, const Vec3& x);

struct LargeReconstruction {
  TriangleMesh mesh;
  std::vector<ChunkField> fields;
  std::vector<std::size_t> failed_chunks;
  std::size_t max_chunk_unknowns = 0;
  SystemFootprint footprint;  // peak over the run
};

/// Per-chunk fits run one at a time, then one extraction over the union of
/// the chunk lattices with merge_eval as the field. With `chunk_dir`, each
/// fitted chunk is persisted (hierarchy dump + coefficients) and reused on
/// the next run. Throws Error(AllChunksFailed) when no chunk converges.
LargeReconstruction reconstruct_large(const OrientedPointCloud& cloud, const PipelineConfig& config,
                                      const ChunkLayout& layout,
                                      const std::optional<std::filesystem::path>& chunk_dir = std::nullopt);

}  // namespace kernelsurf
