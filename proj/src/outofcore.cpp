#include "kernelsurf/outofcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "kernelsurf/diagnostics.hpp"
#include "kernelsurf/error.hpp"
#include "kernelsurf/log.hpp"
#include "kernelsurf/normals.hpp"

namespace kernelsurf {

ChunkLayout plan_chunks(const OrientedPointCloud& cloud, double chunk_size, double overlap, double snap) {
  if (!(overlap > 0.0) || !(chunk_size > 2.0 * overlap) || !std::isfinite(chunk_size)) {
    throw Error(ErrorCode::InvalidConfig, "chunk layout needs chunk_size > 2 * overlap > 0");
  }
  if (!(snap > 0.0)) throw Error(ErrorCode::InvalidConfig, "chunk snap width must be positive");
  if (cloud.size() == 0) throw Error(ErrorCode::EmptyInput, "cannot chunk an empty cloud");
  ChunkLayout layout;
  layout.chunk_size = std::ceil(chunk_size / snap) * snap;
  layout.overlap = overlap;
  const double S = layout.chunk_size;

  std::map<GridCoord, std::vector<std::size_t>> members;
  std::map<GridCoord, bool> has_core;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const GridCoord lo = cell_containing(p - Vec3::Constant(overlap), S);
    const GridCoord hi = cell_containing(p + Vec3::Constant(overlap), S);
    for (int x = lo.x; x <= hi.x; ++x)
      for (int y = lo.y; y <= hi.y; ++y)
        for (int z = lo.z; z <= hi.z; ++z) members[GridCoord{x, y, z}].push_back(i);
    has_core[cell_containing(p, S)] = true;
  }
  for (auto& [key, points] : members) {
    if (!has_core.count(key)) continue;
    Chunk chunk;
    chunk.index = key;
    chunk.core.min = Vec3(key.x * S, key.y * S, key.z * S);
    chunk.core.max = chunk.core.min + Vec3::Constant(S);
    chunk.cover.min = chunk.core.min - Vec3::Constant(overlap / 2);
    chunk.cover.max = chunk.core.max + Vec3::Constant(overlap / 2);
    chunk.data.min = chunk.core.min - Vec3::Constant(overlap);
    chunk.data.max = chunk.core.max + Vec3::Constant(overlap);
    for (auto i : points) {
      if (chunk.data.contains(cloud.positions[i])) chunk.points.push_back(i);
    }
    layout.chunks.push_back(std::move(chunk));
  }
  return layout;
}

double ChunkField::mask(const Vec3& x) const {
  if (!cover.contains(x)) return 0.0;
  if (!mask_points) return 1.0;
  return soft_mask(x - translation, *mask_points, mask_tau);
}

double ChunkField::field(const Vec3& x) const { return eval_expansion(*model, fit.alpha, x - translation); }

namespace {

bool cover_less(const ChunkField* a, const ChunkField* b) {
  const auto& p = a->cover.min;
  const auto& q = b->cover.min;
  if (p.x() != q.x()) return p.x() < q.x();
  if (p.y() != q.y()) return p.y() < q.y();
  return p.z() < q.z();
}

}  // namespace

MergedSample merge_eval(std::span<const ChunkField> chunks, const Vec3& x) {
  std::vector<const ChunkField*> covering;
  for (const auto& c : chunks) {
    if (c.cover.contains(x)) covering.push_back(&c);
  }
  std::sort(covering.begin(), covering.end(), cover_less);
  MergedSample out;
  double weighted = 0.0, total = 0.0;
  std::size_t contributors = 0;
  double single = 0.0;
  for (const auto* c : covering) {
    const double m = c->mask(x);
    out.mask = std::max(out.mask, m);
    if (m <= 0.0) continue;
    const double f = c->field(x);
    weighted += m * f;
    total += m;
    single = f;
    ++contributors;
  }
  if (contributors == 0) return out;
  out.defined = true;
  out.f = contributors == 1 ? single : weighted / total;
  return out;
}

double merged_field(std::span<const ChunkField> chunks, const Vec3& x) {
  const auto s = merge_eval(chunks, x);
  if (s.defined) return s.f;
  // Every covering mask vanishes: plain average keeps the lattice complete.
  std::vector<const ChunkField*> covering;
  for (const auto& c : chunks) {
    if (c.cover.contains(x)) covering.push_back(&c);
  }
  std::sort(covering.begin(), covering.end(), cover_less);
  double sum = 0.0;
  for (const auto* c : covering) sum += c->field(x);
  return covering.empty() ? 0.0 : sum / static_cast<double>(covering.size());
}

namespace {

void save_alpha(const Eigen::VectorXd& alpha, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  const std::uint64_t n = static_cast<std::uint64_t>(alpha.size());
  os.write("KSRA", 4);
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(alpha.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!os) throw Error(ErrorCode::IoError, "failed to write " + path.string());
}

std::optional<Eigen::VectorXd> load_alpha(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[4];
  std::uint64_t n = 0;
  if (!is.read(magic, 4) || std::memcmp(magic, "KSRA", 4) != 0 || !is.read(reinterpret_cast<char*>(&n), sizeof n) ||
      n != expected) {
    return std::nullopt;
  }
  Eigen::VectorXd alpha(static_cast<Eigen::Index>(n));
  if (!is.read(reinterpret_cast<char*>(alpha.data()), static_cast<std::streamsize>(n * sizeof(double)))) return std::nullopt;
  return alpha;
}

}  // namespace

LargeReconstruction reconstruct_large(const OrientedPointCloud& input, const PipelineConfig& config,
                                      const ChunkLayout& layout,
                                      const std::optional<std::filesystem::path>& chunk_dir) {
  if (config.model_path) throw Error(ErrorCode::InvalidConfig, "chunked reconstruction supports the constant field only");
  config.hierarchy.validate();
  if (input.size() == 0) throw Error(ErrorCode::EmptyInput, "input cloud is empty");
  const double W = config.hierarchy.voxel_size;
  if (layout.overlap < 3.0 * W) {
    logger().warn("chunk overlap {} is below three finest voxel widths ({})", layout.overlap, 3.0 * W);
  }
  const OrientedPointCloud* cloud = &input;
  NormalEstimate estimated;
  if (!input.has_normals()) {
    estimated = estimate_normals(input, config.normal_neighbors);
    cloud = &estimated.cloud;
  }
  cloud->validate();
  if (chunk_dir) std::filesystem::create_directories(*chunk_dir);

  PipelineConfig chunk_cfg = config;
  chunk_cfg.extraction.color = false;
  const double tau = config.extraction.mask_tau > 0.0 ? config.extraction.mask_tau : 2.0 * W;

  LargeReconstruction out;
  SystemFootprint::reset_peak();
  std::vector<std::vector<GridCoord>> lattices;
  for (std::size_t k = 0; k < layout.chunks.size(); ++k) {
    const auto& chunk = layout.chunks[k];
    if (chunk.points.empty()) continue;
    const OrientedPointCloud sub = cloud->subset(chunk.points);
    ChunkField cf;
    cf.translation = chunk.translation;
    cf.cover = chunk.cover;
    cf.mask_tau = tau;
    std::vector<Vec3> local(sub.positions.size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = sub.positions[i] - chunk.translation;
    std::vector<Vec3> mask_local = config.use_point_weights ? sub.weighted_positions() : sub.positions;
    for (auto& p : mask_local) p -= chunk.translation;
    cf.mask_points = std::make_shared<PointGrid>(mask_local);

    const auto stem = chunk_dir ? *chunk_dir / ("chunk_" + std::to_string(k)) : std::filesystem::path();
    bool resumed = false;
    if (chunk_dir && std::filesystem::exists(stem.string() + ".hier")) {
      try {
        auto hier = std::make_shared<VoxelHierarchy>(VoxelHierarchy::load(std::filesystem::path(stem.string() + ".hier")));
        if (auto alpha = load_alpha(stem.string() + ".alpha", hier->voxel_count())) {
          cf.model = std::make_shared<KernelModel>(KernelModel::constant(hier, config.feature_dim));
          cf.fit.alpha = std::move(*alpha);
          resumed = true;
          logger().info("chunk {}: resumed from {}", k, stem.string());
        }
      } catch (const Error& e) {
        logger().warn("chunk {}: ignoring unreadable saved state ({})", k, e.what());
      }
    }
    if (!resumed) {
      OrientedPointCloud local_cloud = sub;
      local_cloud.positions = local;
      for (auto& o : local_cloud.sensor_origins) o -= chunk.translation;
      try {
        FittedField fitted = fit_field(local_cloud, chunk_cfg);
        if (!fitted.fit.stats.converged) {
          logger().warn("chunk {} did not converge (residual {:.3e}); excluded", k, fitted.fit.stats.final_residual);
          out.failed_chunks.push_back(k);
          continue;
        }
        cf.model = fitted.model;
        cf.fit = std::move(fitted.fit);
      } catch (const Error& e) {
        logger().warn("chunk {} failed: {}", k, e.what());
        out.failed_chunks.push_back(k);
        continue;
      }
      if (chunk_dir) {
        cf.model->hierarchy().dump(std::filesystem::path(stem.string() + ".hier"));
        save_alpha(cf.fit.alpha, stem.string() + ".alpha");
      }
    }
    out.max_chunk_unknowns = std::max(out.max_chunk_unknowns, cf.model->hierarchy().voxel_count());
    std::vector<GridCoord> lattice;
    for (const auto& c : extraction_lattice(cf.model->hierarchy())) {
      // Translations are lattice-aligned in practice; cells are kept in world coordinates.
      if (cf.cover.contains(cell_center(c, W) + cf.translation)) lattice.push_back(c);
    }
    lattices.push_back(std::move(lattice));
    out.fields.push_back(std::move(cf));
  }
  out.footprint = SystemFootprint::current();
  if (out.fields.empty()) throw Error(ErrorCode::AllChunksFailed, "no chunk produced a converged fit");

  std::vector<GridCoord> lattice;
  for (auto& l : lattices) lattice.insert(lattice.end(), l.begin(), l.end());
  std::vector<std::vector<GridCoord>>().swap(lattices);
  std::sort(lattice.begin(), lattice.end());
  lattice.erase(std::unique(lattice.begin(), lattice.end()), lattice.end());

  const std::span<const ChunkField> fields(out.fields);
  const ScalarField merged = [fields](const Vec3& x) { return merged_field(fields, x); };
  MaskField mask;
  std::shared_ptr<PointGrid> all_points;
  if (config.extraction.mask_mode == MaskMode::distance) {
    all_points = std::make_shared<PointGrid>(config.use_point_weights ? cloud->weighted_positions()
                                                                      : cloud->positions);
    mask = [all_points, tau](const Vec3& v) { return mask_distance(v, *all_points, tau) ? 1.0 : 0.0; };
  } else if (config.extraction.mask_mode == MaskMode::loaded) {
    mask = [fields](const Vec3& v) { return merge_eval(fields, v).mask; };
  }
  ExtractionStats stats;
  out.mesh = extract_on_lattice(lattice, W, merged, config.extraction.iso_value, mask, &stats);
  logger().info("reconstruct_large: {} chunks fitted, {} failed, {} lattice points, {} triangles", out.fields.size(),
                out.failed_chunks.size(), stats.lattice_points, out.mesh.triangles.size());
  return out;
}

}  // namespace kernelsurf
