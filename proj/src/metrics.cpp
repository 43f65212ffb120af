#include "kernelsurf/metrics.hpp"

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

#include "kernelsurf/error.hpp"
#include "kernelsurf/spatial_index.hpp"

namespace kernelsurf {

OrientedPointCloud sample_mesh(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw Error(ErrorCode::EmptyMesh, "cannot sample a mesh without triangles");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyMesh, "mesh has zero surface area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  OrientedPointCloud out;
  out.positions.reserve(count);
  out.normals.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    if (it == cumulative.end()) --it;
    const auto& tri = mesh.triangles[static_cast<std::size_t>(it - cumulative.begin())];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const double s = std::sqrt(unit(rng));
    const double u = unit(rng);
    out.positions.push_back((1.0 - s) * a + s * (1.0 - u) * b + s * u * c);
    out.normals.push_back(triangle_normal(a, b, c));
  }
  return out;
}

namespace {

void require_nonempty(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyInput, "metric inputs must be non-empty");
}

std::vector<Neighbor> nearest_all(std::span<const Vec3> queries, const PointGrid& index) {
  std::vector<Neighbor> out(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(queries.size()); ++i) {
    out[static_cast<std::size_t>(i)] = index.nearest(queries[static_cast<std::size_t>(i)]);
  }
  return out;
}

double mean_distance(const std::vector<Neighbor>& nn) {
  double s = 0.0;
  for (const auto& n : nn) s += n.distance;
  return s / static_cast<double>(nn.size());
}

double percent_below(const std::vector<Neighbor>& nn, double xi) {
  std::size_t hits = 0;
  for (const auto& n : nn) hits += n.distance < xi ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(nn.size());
}

FScoreResult make_fscore(double precision, double recall, double xi) {
  FScoreResult r;
  r.precision = precision;
  r.recall = recall;
  r.xi = xi;
  r.fscore = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return r;
}

double mean_abs_cos(const std::vector<Vec3>& normals, const std::vector<Vec3>& other, const std::vector<Neighbor>& nn) {
  double s = 0.0;
  for (std::size_t i = 0; i < nn.size(); ++i) s += std::abs(normals[i].dot(other[nn[i].index]));
  return s / static_cast<double>(nn.size());
}

}  // namespace

ChamferResult chamfer(std::span<const Vec3> gt, std::span<const Vec3> pred) {
  require_nonempty(gt, pred);
  ChamferResult r;
  r.completeness = mean_distance(nearest_all(gt, PointGrid(pred)));
  r.accuracy = mean_distance(nearest_all(pred, PointGrid(gt)));
  r.chamfer = 0.5 * (r.completeness + r.accuracy);
  return r;
}

FScoreResult fscore(std::span<const Vec3> gt, std::span<const Vec3> pred, double xi) {
  if (!(xi > 0.0)) throw Error(ErrorCode::InvalidConfig, "F-score threshold must be positive");
  require_nonempty(gt, pred);
  const double recall = percent_below(nearest_all(gt, PointGrid(pred)), xi);
  const double precision = percent_below(nearest_all(pred, PointGrid(gt)), xi);
  return make_fscore(precision, recall, xi);
}

double normal_consistency(const OrientedPointCloud& gt, const OrientedPointCloud& pred) {
  require_nonempty(gt.positions, pred.positions);
  if (!gt.has_normals() || !pred.has_normals()) {
    throw Error(ErrorCode::InvalidConfig, "normal consistency needs normals on both sets");
  }
  const auto to_pred = nearest_all(gt.positions, PointGrid(pred.positions));
  const auto to_gt = nearest_all(pred.positions, PointGrid(gt.positions));
  return 0.5 * (mean_abs_cos(gt.normals, pred.normals, to_pred) + mean_abs_cos(pred.normals, gt.normals, to_gt));
}

MetricReport evaluate_clouds(const OrientedPointCloud& gt, const OrientedPointCloud& pred, double xi,
                             std::uint64_t seed) {
  if (!(xi > 0.0)) throw Error(ErrorCode::InvalidConfig, "F-score threshold must be positive");
  require_nonempty(gt.positions, pred.positions);
  const auto to_pred = nearest_all(gt.positions, PointGrid(pred.positions));
  const auto to_gt = nearest_all(pred.positions, PointGrid(gt.positions));
  MetricReport r;
  r.chamfer.completeness = mean_distance(to_pred);
  r.chamfer.accuracy = mean_distance(to_gt);
  r.chamfer.chamfer = 0.5 * (r.chamfer.completeness + r.chamfer.accuracy);
  r.fscore = make_fscore(percent_below(to_gt, xi), percent_below(to_pred, xi), xi);
  if (gt.has_normals() && pred.has_normals()) {
    r.normal_consistency =
        0.5 * (mean_abs_cos(gt.normals, pred.normals, to_pred) + mean_abs_cos(pred.normals, gt.normals, to_gt));
  }
  r.gt_count = gt.size();
  r.pred_count = pred.size();
  r.seed = seed;
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["chamfer"] = {{"dc", chamfer.chamfer}, {"comp", chamfer.completeness}, {"acc", chamfer.accuracy}};
  j["fscore"] = {{"f", fscore.fscore}, {"p", fscore.precision}, {"r", fscore.recall}, {"xi", fscore.xi}};
  j["normal_consistency"] = normal_consistency;
  j["counts"] = {{"gt", gt_count}, {"pred", pred_count}};
  j["seed"] = seed;
  return j.dump();
}

}  // namespace kernelsurf
