#pragma once

#include <filesystem>
#include <memory>

#include "kernelsurf/kernel_field.hpp"

namespace kernelsurf {

// Model file layout:
//   4 bytes   magic "KSRM"
//   uint32    header length in bytes (little endian)
//   header    UTF-8 JSON:
//             {"version": 1, "levels": L, "d": d,
//              "fields": [{"kind": "constant", "value": [...]} |
//                         {"kind": "learned", "voxel_count": n, "feature_dim": k,
//                          "concat_position": false,
//                          "layers": [{"in": i, "out": o, "activation": "relu"|"none"}, ...]}]}
//   payload   little-endian float32, per learned level in level order:
//             features (voxel_count x feature_dim, voxels in dump order),
//             then every layer's weight (row-major), then every layer's bias.

/// Throws Error(FormatError) for malformed or truncated files and
/// Error(DimensionMismatch) when the file disagrees with the hierarchy.
KernelModel load_model(const std::filesystem::path& path, std::shared_ptr<const VoxelHierarchy> hierarchy);

void save_model(const KernelModel& model, const std::filesystem::path& path);

}  // namespace kernelsurf
