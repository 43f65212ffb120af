#pragma once

#include <cstddef>

#include "kernelsurf/geometry.hpp"

namespace kernelsurf {

struct NormalEstimate {
  OrientedPointCloud cloud;
  std::size_t degenerate_count = 0;  // neighborhoods with coincident points
};

/// PCA normals from the k nearest neighbors (the query point included).
/// With sensor origins every normal is flipped to face its sensor; otherwise
/// orientation is propagated along a minimum spanning tree of the k-NN graph
/// with edge weight 1 - |<n_i, n_j>|, one arbitrary seed per component.
/// Throws Error(InvalidConfig) for k < 3 and Error(TooFewPoints) when the
/// cloud has at most k points.
NormalEstimate estimate_normals(const OrientedPointCloud& cloud, std::size_t k);

}  // namespace kernelsurf
