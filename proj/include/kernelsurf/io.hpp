#pragma once

#include <filesystem>

#include "kernelsurf/geometry.hpp"

namespace kernelsurf {

enum class PointFormat { xyz, ply };
enum class MeshFormat { obj, ply };

/// Reads `.xyz` (3 or 6 whitespace separated columns per line) or `.ply`
/// (ascii or binary_little_endian; x y z, optional nx ny nz and red green
/// blue). Normals are renormalized to unit length.
OrientedPointCloud load_point_cloud(const std::filesystem::path& path, PointFormat format);

/// Picks the format from the file extension.
OrientedPointCloud load_point_cloud(const std::filesystem::path& path);

/// Writes ascii obj or binary little-endian ply. Vertex colors are written
/// to ply as uchar red/green/blue properties.
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format);
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Reads obj (v/f records, polygons fan-triangulated) or ply with a face
/// element.
TriangleMesh load_mesh(const std::filesystem::path& path);

/// Binary little-endian ply point cloud with whatever attributes are present.
void save_point_cloud(const OrientedPointCloud& cloud, const std::filesystem::path& path);

}  // namespace kernelsurf
