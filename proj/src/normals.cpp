#include "kernelsurf/normals.hpp"

#include <queue>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "kernelsurf/error.hpp"
#include "kernelsurf/log.hpp"
#include "kernelsurf/spatial_index.hpp"

namespace kernelsurf {

NormalEstimate estimate_normals(const OrientedPointCloud& cloud, std::size_t k) {
  if (k < 3) throw Error(ErrorCode::InvalidConfig, "normal estimation needs k >= 3");
  const std::size_t n = cloud.size();
  if (n <= k) {
    throw Error(ErrorCode::TooFewPoints,
                "normal estimation needs more than " + std::to_string(k) + " points, got " +
                    std::to_string(n));
  }
  NormalEstimate out;
  out.cloud = cloud;
  out.cloud.normals.assign(n, Vec3::UnitZ());

  const PointGrid grid(cloud.positions);
  std::vector<std::vector<Neighbor>> neighbors(n);
  std::vector<std::uint8_t> degenerate(n, 0);

#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    neighbors[i] = grid.knearest(cloud.positions[i], k);
    Vec3 mean = Vec3::Zero();
    for (const auto& nb : neighbors[i]) mean += cloud.positions[nb.index];
    mean /= static_cast<double>(neighbors[i].size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double spread = 0.0;
    for (const auto& nb : neighbors[i]) {
      const Vec3 d = cloud.positions[nb.index] - mean;
      cov += d * d.transpose();
      spread = std::max(spread, d.norm());
    }
    if (!(spread > 0.0)) {
      degenerate[i] = 1;
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    out.cloud.normals[i] = eig.eigenvectors().col(0).normalized();
  }
  for (auto d : degenerate) out.degenerate_count += d;
  if (out.degenerate_count > 0) {
    logger().warn("{} neighborhoods with coincident points got an arbitrary normal",
                  out.degenerate_count);
  }

  auto& normals = out.cloud.normals;
  if (cloud.has_sensors()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (normals[i].dot(cloud.sensor_origins[i] - cloud.positions[i]) < 0.0) normals[i] = -normals[i];
    }
    return out;
  }

  // Prim's algorithm over the symmetric k-NN graph; each vertex is oriented
  // to agree with the tree vertex that reached it.
  std::vector<std::vector<std::uint32_t>> adjacency(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : neighbors[i]) {
      if (nb.index == i) continue;
      adjacency[i].push_back(static_cast<std::uint32_t>(nb.index));
      adjacency[nb.index].push_back(static_cast<std::uint32_t>(i));
    }
  }
  using Item = std::tuple<double, std::uint32_t, std::uint32_t>;  // weight, target, source
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  std::vector<std::uint8_t> visited(n, 0);
  auto push_edges = [&](std::uint32_t v) {
    for (auto u : adjacency[v]) {
      if (!visited[u]) queue.emplace(1.0 - std::abs(normals[v].dot(normals[u])), u, v);
    }
  };
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (visited[seed]) continue;
    visited[seed] = 1;
    push_edges(static_cast<std::uint32_t>(seed));
    while (!queue.empty()) {
      const auto [w, u, v] = queue.top();
      queue.pop();
      if (visited[u]) continue;
      visited[u] = 1;
      if (normals[u].dot(normals[v]) < 0.0) normals[u] = -normals[u];
      push_edges(u);
    }
  }
  return out;
}

}  // namespace kernelsurf
