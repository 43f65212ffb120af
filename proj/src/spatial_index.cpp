#include "kernelsurf/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace kernelsurf {
namespace {

double default_cell_size(std::span<const Vec3> points) {
  AABB box;
  for (const auto& p : points) box.extend(p);
  const Vec3 e = (box.max - box.min).cwiseMax(Vec3::Zero());
  const double half_area = e.x() * e.y() + e.y() * e.z() + e.x() * e.z();
  double cell = 2.0 * std::sqrt(half_area / static_cast<double>(points.size()));
  if (!(cell > 0.0)) cell = std::max(e.maxCoeff(), 1.0);
  // Keep lattice coordinates far from int32 overflow.
  const double span = std::max({std::abs(box.min.minCoeff()), std::abs(box.max.maxCoeff()), e.maxCoeff()});
  return std::max(cell, span / double(1 << 28));
}

}  // namespace

PointGrid::PointGrid(std::span<const Vec3> points, double cell_size)
    : points_(points.begin(), points.end()),
      cell_size_(cell_size > 0.0 ? cell_size : (points.empty() ? 1.0 : default_cell_size(points))) {
  std::vector<std::pair<GridCoord, std::uint32_t>> keyed;
  keyed.reserve(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    keyed.emplace_back(cell_of(points_[i]), static_cast<std::uint32_t>(i));
  }
  std::sort(keyed.begin(), keyed.end());
  order_.reserve(keyed.size());
  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i;
    while (j < keyed.size() && keyed[j].first == keyed[i].first) {
      order_.push_back(keyed[j].second);
      ++j;
    }
    cells_.emplace(keyed[i].first, std::make_pair(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)));
    occupied_.push_back(keyed[i].first);
    i = j;
  }
}

GridCoord PointGrid::cell_of(const Vec3& x) const { return cell_containing(x, cell_size_); }

template <typename Visit>
void PointGrid::visit_cell(const GridCoord& c, Visit&& visit) const {
  const auto it = cells_.find(c);
  if (it == cells_.end()) return;
  for (std::uint32_t k = it->second.first; k < it->second.second; ++k) visit(order_[k]);
}

double PointGrid::lower_bound(const Vec3& x, const GridCoord& c) const {
  const Vec3 lo(c.x * cell_size_, c.y * cell_size_, c.z * cell_size_);
  const Vec3 hi = lo + Vec3::Constant(cell_size_);
  const Vec3 d = (lo - x).cwiseMax(x - hi).cwiseMax(Vec3::Zero());
  return d.norm();
}

namespace {

// Calls f(cell) for every cell at Chebyshev distance exactly r from c.
template <typename F>
void for_each_shell_cell(const GridCoord& c, int r, F&& f) {
  if (r == 0) {
    f(c);
    return;
  }
  for (int dx = -r; dx <= r; ++dx) {
    for (int dy = -r; dy <= r; ++dy) {
      const bool edge = std::abs(dx) == r || std::abs(dy) == r;
      if (edge) {
        for (int dz = -r; dz <= r; ++dz) f(GridCoord{c.x + dx, c.y + dy, c.z + dz});
      } else {
        f(GridCoord{c.x + dx, c.y + dy, c.z - r});
        f(GridCoord{c.x + dx, c.y + dy, c.z + r});
      }
    }
  }
}

bool closer(double d, std::size_t i, double best_d, std::size_t best_i) {
  return d < best_d || (d == best_d && i < best_i);
}

}  // namespace

Neighbor PointGrid::nearest(const Vec3& x) const {
  Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  if (points_.empty()) return best;
  auto consider = [&](std::uint32_t i) {
    const double d = (x - points_[i]).norm();
    if (closer(d, i, best.distance, best.index)) best = {i, d};
  };
  const GridCoord c0 = cell_of(x);
  for (int r = 0;; ++r) {
    const double shell_cells = r == 0 ? 1.0 : 24.0 * r * r + 2.0;
    if (shell_cells > static_cast<double>(occupied_.size())) break;
    for_each_shell_cell(c0, r, [&](const GridCoord& c) { visit_cell(c, consider); });
    // Unvisited points lie at least r cells away.
    if (best.distance <= r * cell_size_) return best;
  }
  for (const auto& c : occupied_) {
    if (lower_bound(x, c) > best.distance) continue;
    visit_cell(c, consider);
  }
  return best;
}

std::vector<Neighbor> PointGrid::knearest(const Vec3& x, std::size_t k) const {
  k = std::min(k, points_.size());
  std::vector<Neighbor> result;
  if (k == 0) return result;
  auto worse = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  // Max-heap on (distance, index): top is the current k-th nearest.
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(worse)> heap(worse);
  auto consider = [&](std::uint32_t i) {
    const Neighbor n{i, (x - points_[i]).norm()};
    if (heap.size() < k) {
      heap.push(n);
    } else if (worse(n, heap.top())) {
      heap.pop();
      heap.push(n);
    }
  };
  const GridCoord c0 = cell_of(x);
  bool done = false;
  for (int r = 0;; ++r) {
    const double shell_cells = r == 0 ? 1.0 : 24.0 * r * r + 2.0;
    if (shell_cells > static_cast<double>(occupied_.size())) break;
    for_each_shell_cell(c0, r, [&](const GridCoord& c) { visit_cell(c, consider); });
    if (heap.size() == k && heap.top().distance <= r * cell_size_) {
      done = true;
      break;
    }
  }
  if (!done) {
    // Restart with a full scan; cheap relative to the shells already visited.
    decltype(heap) fresh(worse);
    heap.swap(fresh);
    for (const auto& c : occupied_) {
      if (heap.size() == k && lower_bound(x, c) > heap.top().distance) continue;
      visit_cell(c, consider);
    }
  }
  result.resize(heap.size());
  for (std::size_t i = result.size(); i-- > 0;) {
    result[i] = heap.top();
    heap.pop();
  }
  return result;
}

std::vector<std::size_t> PointGrid::within(const Vec3& x, double radius) const {
  std::vector<std::size_t> out;
  if (points_.empty() || radius < 0.0) return out;
  auto consider = [&](std::uint32_t i) {
    if ((x - points_[i]).norm() <= radius) out.push_back(i);
  };
  const GridCoord lo = cell_of(x - Vec3::Constant(radius));
  const GridCoord hi = cell_of(x + Vec3::Constant(radius));
  const double box_cells = double(hi.x - lo.x + 1) * double(hi.y - lo.y + 1) * double(hi.z - lo.z + 1);
  if (box_cells > static_cast<double>(occupied_.size())) {
    for (const auto& c : occupied_) {
      if (lower_bound(x, c) <= radius) visit_cell(c, consider);
    }
  } else {
    for (int cx = lo.x; cx <= hi.x; ++cx) {
      for (int cy = lo.y; cy <= hi.y; ++cy) {
        for (int cz = lo.z; cz <= hi.z; ++cz) visit_cell(GridCoord{cx, cy, cz}, consider);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool PointGrid::any_within(const Vec3& x, double radius) const {
  if (points_.empty() || radius < 0.0) return false;
  return nearest(x).distance <= radius;
}

}  // namespace kernelsurf
