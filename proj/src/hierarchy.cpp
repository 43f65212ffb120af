#include "kernelsurf/hierarchy.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <absl/container/flat_hash_set.h>

#include "kernelsurf/error.hpp"

namespace kernelsurf {

void HierarchyConfig::validate() const {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw Error(ErrorCode::InvalidConfig, "voxel size must be positive and finite");
  }
  if (levels < 1 || levels > 24) throw Error(ErrorCode::InvalidConfig, "levels must be in [1, 24]");
  if (adaptive_depth < 1 || adaptive_depth > levels) {
    throw Error(ErrorCode::InvalidConfig, "adaptive depth must be in [1, levels]");
  }
  if (!(subdivision_threshold >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "subdivision threshold must be non-negative");
  }
}

VoxelLevel::VoxelLevel(double width, std::vector<GridCoord> coords) : width_(width), coords_(std::move(coords)) {
  std::sort(coords_.begin(), coords_.end());
  coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
  centers_.reserve(coords_.size());
  lookup_.reserve(coords_.size());
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    centers_.push_back(cell_center(coords_[i], width_));
    lookup_.emplace(coords_[i], static_cast<std::uint32_t>(i));
  }
  normals_.assign(coords_.size(), Vec3::Zero());
  leaf_.assign(coords_.size(), 1);
}

class HierarchyBuilder {
 public:
  static VoxelHierarchy make(const HierarchyConfig& config, const Vec3& origin,
                             std::vector<std::vector<GridCoord>> coords) {
    VoxelHierarchy h;
    h.config_ = config;
    h.origin_ = origin;
    h.finalize(std::move(coords));
    return h;
  }
};

void VoxelHierarchy::finalize(std::vector<std::vector<GridCoord>> coords_per_level) {
  const int L = config_.levels;
  levels_.clear();
  levels_.reserve(static_cast<std::size_t>(L));
  for (int l = 1; l <= L; ++l) {
    levels_.emplace_back(width(l), std::move(coords_per_level[static_cast<std::size_t>(l - 1)]));
  }
  for (int l = 2; l <= L; ++l) {
    auto& parent = levels_[static_cast<std::size_t>(l - 1)];
    for (const auto& c : levels_[static_cast<std::size_t>(l - 2)].coords_) {
      const auto p = parent.find(parent_of(c));
      if (p < 0) throw Error(ErrorCode::InvalidConfig, "hierarchy violates containment");
      parent.leaf_[static_cast<std::size_t>(p)] = 0;
    }
  }
  offsets_.assign(static_cast<std::size_t>(L) + 1, 0);
  for (int l = 1; l <= L; ++l) {
    offsets_[static_cast<std::size_t>(l)] = offsets_[static_cast<std::size_t>(l - 1)] + levels_[static_cast<std::size_t>(l - 1)].size();
  }
}

namespace {

Vec3 origin_from_coords(const std::vector<GridCoord>& coarsest, double width) {
  if (coarsest.empty()) return Vec3::Zero();
  GridCoord lo = coarsest.front();
  for (const auto& c : coarsest) lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
  return Vec3(lo.x * width, lo.y * width, lo.z * width);
}

}  // namespace

VoxelHierarchy VoxelHierarchy::from_keys(const HierarchyConfig& config, const std::vector<VoxelKey>& keys) {
  config.validate();
  const int L = config.levels;
  std::vector<std::vector<GridCoord>> coords(static_cast<std::size_t>(L));
  for (const auto& key : keys) {
    if (key.level < 1 || key.level > L) throw Error(ErrorCode::InvalidConfig, "voxel key level out of range");
    GridCoord c = key.ijk;
    for (int l = key.level; l <= L; ++l) {
      coords[static_cast<std::size_t>(l - 1)].push_back(c);
      c = parent_of(c);
    }
  }
  const auto top = coords.back();
  return HierarchyBuilder::make(config, origin_from_coords(top, std::ldexp(config.voxel_size, L - 1)),
                                std::move(coords));
}

VoxelKey VoxelHierarchy::key_of(std::size_t global_index) const {
  if (global_index >= voxel_count()) throw Error(ErrorCode::SizeMismatch, "voxel index out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global_index);
  const int l = static_cast<int>(it - offsets_.begin());
  return {l, level(l).coord(global_index - offset(l))};
}

void VoxelHierarchy::set_normals(int l, std::vector<Vec3> normals) {
  auto& lvl = levels_.at(static_cast<std::size_t>(l - 1));
  if (normals.size() != lvl.size()) throw Error(ErrorCode::SizeMismatch, "normal count does not match level size");
  lvl.normals_ = std::move(normals);
}

void VoxelHierarchy::splat_normals(const OrientedPointCloud& cloud) {
  if (!cloud.has_normals()) throw Error(ErrorCode::InvalidConfig, "splatting needs input normals");
  for (int l = 1; l <= levels(); ++l) {
    auto& lvl = levels_[static_cast<std::size_t>(l - 1)];
    std::vector<Vec3> acc(lvl.size(), Vec3::Zero());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double w = cloud.has_weights() ? cloud.weights[i] : 1.0;
      if (w == 0.0) continue;
      lvl.for_each_support(cloud.positions[i], [&](std::size_t j, const Vec3& s) {
        acc[j] += w * bspline(s.x()) * bspline(s.y()) * bspline(s.z()) * cloud.normals[i];
      });
    }
    for (auto& n : acc) {
      const double len = n.norm();
      n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }
    lvl.normals_ = std::move(acc);
  }
}

void VoxelHierarchy::dump(std::ostream& os) const {
  std::ostringstream buf;
  buf.precision(17);
  buf << "kernelsurf-hierarchy 1\n";
  buf << "voxel_size " << config_.voxel_size << "\n";
  buf << "levels " << config_.levels << "\n";
  buf << "adaptive_depth " << config_.adaptive_depth << "\n";
  buf << "subdivision_threshold " << config_.subdivision_threshold << "\n";
  buf << "origin " << origin_.x() << ' ' << origin_.y() << ' ' << origin_.z() << "\n";
  buf << "voxels " << voxel_count() << "\n";
  for (int l = 1; l <= levels(); ++l) {
    const auto& lvl = level(l);
    for (std::size_t i = 0; i < lvl.size(); ++i) {
      const auto& c = lvl.coord(i);
      const auto& p = lvl.center(i);
      const auto& n = lvl.normal(i);
      buf << l << ' ' << c.x << ' ' << c.y << ' ' << c.z << ' ' << p.x() << ' ' << p.y() << ' ' << p.z()
          << ' ' << (lvl.is_leaf(i) ? 1 : 0) << ' ' << n.x() << ' ' << n.y() << ' ' << n.z() << "\n";
    }
  }
  os << buf.str();
  if (!os) throw Error(ErrorCode::IoError, "failed to write hierarchy dump");
}

void VoxelHierarchy::dump(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  dump(os);
}

namespace {

template <typename T>
T read_field(std::istream& is, const std::string& name) {
  std::string key;
  T value{};
  if (!(is >> key) || key != name || !(is >> value)) {
    throw Error(ErrorCode::ParseError, "hierarchy dump: expected '" + name + "'");
  }
  return value;
}

}  // namespace

VoxelHierarchy VoxelHierarchy::load(std::istream& is) {
  if (read_field<int>(is, "kernelsurf-hierarchy") != 1) {
    throw Error(ErrorCode::ParseError, "hierarchy dump: unsupported version");
  }
  HierarchyConfig config;
  config.voxel_size = read_field<double>(is, "voxel_size");
  config.levels = read_field<int>(is, "levels");
  config.adaptive_depth = read_field<int>(is, "adaptive_depth");
  config.subdivision_threshold = read_field<double>(is, "subdivision_threshold");
  config.validate();
  Vec3 origin;
  origin.x() = read_field<double>(is, "origin");
  if (!(is >> origin.y() >> origin.z())) throw Error(ErrorCode::ParseError, "hierarchy dump: bad origin");
  const auto count = read_field<std::size_t>(is, "voxels");

  std::vector<std::vector<GridCoord>> coords(static_cast<std::size_t>(config.levels));
  std::vector<std::vector<Vec3>> normals(static_cast<std::size_t>(config.levels));
  int previous = 1;
  for (std::size_t v = 0; v < count; ++v) {
    int l = 0, leaf = 0;
    GridCoord c;
    Vec3 p, n;
    if (!(is >> l >> c.x >> c.y >> c.z >> p.x() >> p.y() >> p.z() >> leaf >> n.x() >> n.y() >> n.z())) {
      throw Error(ErrorCode::ParseError, "hierarchy dump: bad voxel record " + std::to_string(v));
    }
    if (l < previous || l > config.levels) {
      throw Error(ErrorCode::ParseError, "hierarchy dump: voxel record " + std::to_string(v) + " out of order");
    }
    previous = l;
    coords[static_cast<std::size_t>(l - 1)].push_back(c);
    normals[static_cast<std::size_t>(l - 1)].push_back(n);
  }
  for (const auto& level_coords : coords) {
    if (!std::is_sorted(level_coords.begin(), level_coords.end()) ||
        std::adjacent_find(level_coords.begin(), level_coords.end()) != level_coords.end()) {
      throw Error(ErrorCode::ParseError, "hierarchy dump: voxels not in sorted order");
    }
  }
  auto hier = HierarchyBuilder::make(config, origin, std::move(coords));
  for (int l = 1; l <= config.levels; ++l) hier.set_normals(l, std::move(normals[static_cast<std::size_t>(l - 1)]));
  return hier;
}

VoxelHierarchy VoxelHierarchy::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return load(is);
}

double normal_variation(std::span<const Vec3> normals) {
  if (normals.empty()) return 0.0;
  const double n = static_cast<double>(normals.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& v : normals) mean += v;
  mean /= n;
  Vec3 var = Vec3::Zero();
  for (const auto& v : normals) var += (v - mean).cwiseAbs2();
  return (var / n).cwiseSqrt().sum();
}

namespace {

// Shared top-down construction. Point-bearing voxels subdivide when above
// the adaptive depth or when their normals vary; children exist only where
// points are. With dilation, each level also gains the face neighbors of its
// occupied voxels, restricted to subdivided parents below the top level.
VoxelHierarchy build(const OrientedPointCloud& cloud, const HierarchyConfig& config, bool dilate) {
  config.validate();
  if (cloud.size() == 0) throw Error(ErrorCode::EmptyInput, "hierarchy build needs at least one point");
  if (!cloud.has_normals()) throw Error(ErrorCode::InvalidConfig, "hierarchy build needs normals");
  const int L = config.levels;
  const double W = config.voxel_size;
  const std::size_t n = cloud.size();

  std::vector<GridCoord> fine(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 s = cloud.positions[i] / W;
    if (!(s.cwiseAbs().maxCoeff() < 1.0e9)) {
      throw Error(ErrorCode::InvalidConfig, "point coordinates too large for the voxel size");
    }
    fine[i] = cell_containing(cloud.positions[i], W);
  }

  std::vector<std::vector<GridCoord>> coords(static_cast<std::size_t>(L));
  std::vector<std::uint32_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = static_cast<std::uint32_t>(i);
  absl::flat_hash_set<GridCoord, GridCoordHash> subdivided_above;
  std::vector<std::pair<GridCoord, std::uint32_t>> keyed;
  std::vector<Vec3> group_normals;

  for (int l = L; l >= 1; --l) {
    const int shift = l - 1;
    keyed.clear();
    keyed.reserve(active.size());
    for (auto i : active) {
      const auto& c = fine[i];
      keyed.emplace_back(GridCoord{c.x >> shift, c.y >> shift, c.z >> shift}, i);
    }
    std::sort(keyed.begin(), keyed.end());

    auto& level_coords = coords[static_cast<std::size_t>(l - 1)];
    absl::flat_hash_set<GridCoord, GridCoordHash> occupied;
    absl::flat_hash_set<GridCoord, GridCoordHash> subdivided;
    std::vector<std::uint32_t> next_active;
    for (std::size_t a = 0; a < keyed.size();) {
      std::size_t b = a;
      while (b < keyed.size() && keyed[b].first == keyed[a].first) ++b;
      const GridCoord cell = keyed[a].first;
      level_coords.push_back(cell);
      occupied.insert(cell);
      bool split = false;
      if (l > 1) {
        if (l > config.adaptive_depth) {
          split = true;
        } else {
          group_normals.clear();
          for (std::size_t k = a; k < b; ++k) group_normals.push_back(cloud.normals[keyed[k].second]);
          split = normal_variation(group_normals) > config.subdivision_threshold;
        }
      }
      if (split) {
        subdivided.insert(cell);
        for (std::size_t k = a; k < b; ++k) next_active.push_back(keyed[k].second);
      }
      a = b;
    }

    if (dilate) {
      static constexpr std::array<GridCoord, 6> kFaces{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
      const std::size_t occupied_count = level_coords.size();
      for (std::size_t v = 0; v < occupied_count; ++v) {
        for (const auto& f : kFaces) {
          const GridCoord nb = level_coords[v] + f;
          if (occupied.contains(nb)) continue;
          if (l < L && !subdivided_above.contains(parent_of(nb))) continue;
          level_coords.push_back(nb);
        }
      }
    }
    subdivided_above = std::move(subdivided);
    active = std::move(next_active);
  }

  AABB box;
  for (const auto& p : cloud.positions) box.extend(p);
  const double top = std::ldexp(W, L - 1);
  const Vec3 origin = (box.min / top).array().floor().matrix() * top;
  return HierarchyBuilder::make(config, origin, std::move(coords));
}

}  // namespace

VoxelHierarchy build_from_dense(const OrientedPointCloud& dense, const HierarchyConfig& config) {
  auto hier = build(dense, config, false);
  for (int l = 1; l <= hier.levels(); ++l) {
    const auto& lvl = hier.level(l);
    std::vector<Vec3> sum(lvl.size(), Vec3::Zero());
    const double w = lvl.width();
    for (std::size_t i = 0; i < dense.size(); ++i) {
      const auto j = lvl.find(cell_containing(dense.positions[i], w));
      if (j >= 0) sum[static_cast<std::size_t>(j)] += dense.normals[i];
    }
    for (auto& s : sum) {
      const double len = s.norm();
      s = len > 0.0 ? Vec3(s / len) : Vec3::Zero();
    }
    hier.set_normals(l, std::move(sum));
  }
  return hier;
}

VoxelHierarchy build_from_input(const OrientedPointCloud& cloud, const HierarchyConfig& config) {
  auto hier = build(cloud, config, true);
  hier.splat_normals(cloud);
  return hier;
}

std::vector<std::pair<VoxelKey, Vec3>> voxels_at(const VoxelHierarchy& hier, int level) {
  if (level < 1 || level > hier.levels()) throw Error(ErrorCode::InvalidConfig, "level out of range");
  const auto& lvl = hier.level(level);
  std::vector<std::pair<VoxelKey, Vec3>> out;
  out.reserve(lvl.size());
  for (std::size_t i = 0; i < lvl.size(); ++i) out.push_back({VoxelKey{level, lvl.coord(i)}, lvl.center(i)});
  return out;
}

std::vector<std::pair<VoxelKey, double>> bezier_weights(const VoxelHierarchy& hier, int level, const Vec3& x) {
  if (level < 1 || level > hier.levels()) throw Error(ErrorCode::InvalidConfig, "level out of range");
  const auto& lvl = hier.level(level);
  std::vector<std::pair<VoxelKey, double>> out;
  lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
    const double w = bspline(s.x()) * bspline(s.y()) * bspline(s.z());
    if (w != 0.0) out.push_back({VoxelKey{level, lvl.coord(j)}, w});
  });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

Eigen::VectorXd interpolate_feature(const VoxelHierarchy& hier, int level, const Vec3& x,
                                    const Eigen::MatrixXd& features) {
  const auto& lvl = hier.level(level);
  if (static_cast<std::size_t>(features.rows()) != lvl.size()) {
    throw Error(ErrorCode::DimensionMismatch, "feature rows do not match level size");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(features.cols());
  lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
    out += bspline(s.x()) * bspline(s.y()) * bspline(s.z()) * features.row(static_cast<Eigen::Index>(j)).transpose();
  });
  return out;
}

}  // namespace kernelsurf
