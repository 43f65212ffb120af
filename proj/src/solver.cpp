#include "kernelsurf/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

#include "kernelsurf/error.hpp"
#include "kernelsurf/log.hpp"

namespace kernelsurf {

void SolveConfig::validate() const {
  if (!(tolerance > 0.0)) throw Error(ErrorCode::InvalidConfig, "solver tolerance must be positive");
  if (max_iterations < 0) throw Error(ErrorCode::InvalidConfig, "max iterations must be non-negative");
  if (!(ridge >= 0.0) && !(ridge < 0.0)) throw Error(ErrorCode::InvalidConfig, "ridge must be a number");
}

namespace {

// Builds a CSR matrix whose rows are produced independently by fill(row, out)
// in parallel blocks, concatenated in row order.
template <typename Fill>
SparseMatrix assemble_rows(std::size_t rows, std::size_t cols, Fill&& fill) {
  constexpr std::size_t kBlock = 2048;
  const std::size_t blocks = (rows + kBlock - 1) / kBlock;
  std::vector<std::vector<std::uint64_t>> block_counts(blocks);
  std::vector<std::vector<std::uint32_t>> block_cols(blocks);
  std::vector<std::vector<double>> block_vals(blocks);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(blocks); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<std::pair<std::uint32_t, double>> row;
    const std::size_t lo = b * kBlock, hi = std::min(rows, lo + kBlock);
    for (std::size_t r = lo; r < hi; ++r) {
      row.clear();
      fill(r, row);
      std::sort(row.begin(), row.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      std::size_t count = 0;
      for (const auto& [c, v] : row) {
        if (v == 0.0) continue;
        block_cols[b].push_back(c);
        block_vals[b].push_back(v);
        ++count;
      }
      block_counts[b].push_back(count);
    }
  }
  std::vector<std::uint64_t> offsets;
  offsets.reserve(rows + 1);
  offsets.push_back(0);
  std::vector<std::uint32_t> col_idx;
  std::vector<double> vals;
  std::size_t nnz = 0;
  for (const auto& v : block_vals) nnz += v.size();
  col_idx.reserve(nnz);
  vals.reserve(nnz);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (auto c : block_counts[b]) offsets.push_back(offsets.back() + c);
    col_idx.insert(col_idx.end(), block_cols[b].begin(), block_cols[b].end());
    vals.insert(vals.end(), block_vals[b].begin(), block_vals[b].end());
    std::vector<std::uint32_t>().swap(block_cols[b]);
    std::vector<double>().swap(block_vals[b]);
  }
  return SparseMatrix(rows, cols, std::move(offsets), std::move(col_idx), std::move(vals));
}

// Appends (column, K(x, center_j)) for every voxel supporting x.
void kernel_row(const KernelModel& model, const Vec3& x, std::vector<std::pair<std::uint32_t, double>>& row) {
  const auto& hier = model.hierarchy();
  for (int l = 1; l <= hier.levels(); ++l) {
    const auto& lvl = hier.level(l);
    const auto off = static_cast<std::uint32_t>(hier.offset(l));
    if (model.is_constant(l)) {
      const double c = model.constant_norm2(l);
      lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
        row.emplace_back(off + static_cast<std::uint32_t>(j), c * (bspline(s.x()) * bspline(s.y()) * bspline(s.z())));
      });
    } else {
      bool any = false;
      lvl.for_each_support(x, [&](std::size_t, const Vec3&) { any = true; });
      if (!any) continue;
      const Eigen::VectorXd px = model.phi(l, x);
      const auto& centers = model.center_phi(l);
      lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
        const double kb = bspline(s.x()) * bspline(s.y()) * bspline(s.z());
        row.emplace_back(off + static_cast<std::uint32_t>(j),
                         px.dot(centers.row(static_cast<Eigen::Index>(j)).transpose()) * kb);
      });
    }
  }
}

}  // namespace

SparseMatrix assemble_G(const KernelModel& model, std::span<const Vec3> points, std::size_t* empty_rows) {
  const auto& hier = model.hierarchy();
  if (hier.voxel_count() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::InvalidConfig, "hierarchy too large for 32-bit column indices");
  }
  auto G = assemble_rows(points.size(), hier.voxel_count(),
                         [&](std::size_t r, auto& row) { kernel_row(model, points[r], row); });
  std::size_t empty = 0;
  const auto off = G.row_offsets();
  for (std::size_t r = 0; r < G.rows(); ++r) empty += off[r] == off[r + 1] ? 1 : 0;
  if (empty > 0) logger().warn("{} input points have no kernel support", empty);
  if (empty_rows) *empty_rows = empty;
  return G;
}

SparseMatrix assemble_G(const KernelModel& model, const OrientedPointCloud& cloud, std::size_t* empty_rows) {
  return assemble_G(model, std::span<const Vec3>(cloud.positions), empty_rows);
}

SparseMatrix assemble_Q(const KernelModel& model) {
  const auto& hier = model.hierarchy();
  const std::size_t m = hier.constraint_count();
  std::vector<Vec3> centers;
  centers.reserve(m);
  for (int l = 1; l <= hier.adaptive_depth(); ++l) {
    const auto c = hier.level(l).centers();
    centers.insert(centers.end(), c.begin(), c.end());
  }
  return assemble_rows(3 * m, hier.voxel_count(), [&](std::size_t r, auto& row) {
    const Vec3& x = centers[r / 3];
    const int axis = static_cast<int>(r % 3);
    for (int l = 1; l <= hier.levels(); ++l) {
      const auto& lvl = hier.level(l);
      const auto off = static_cast<std::uint32_t>(hier.offset(l));
      const double w = lvl.width();
      auto grad_kb = [w](const Vec3& s, double& kb) -> Vec3 {
        const double bx = bspline(s.x()), by = bspline(s.y()), bz = bspline(s.z());
        kb = bx * by * bz;
        return Vec3(bspline_deriv(s.x()) * by * bz, bx * bspline_deriv(s.y()) * bz, bx * by * bspline_deriv(s.z())) / w;
      };
      if (model.is_constant(l)) {
        const double c = model.constant_norm2(l);
        lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
          double kb = 0.0;
          row.emplace_back(off + static_cast<std::uint32_t>(j), c * grad_kb(s, kb)[axis]);
        });
      } else {
        bool any = false;
        lvl.for_each_support(x, [&](std::size_t, const Vec3&) { any = true; });
        if (!any) continue;
        Eigen::MatrixXd jac;
        const Eigen::VectorXd px = model.phi(l, x, jac);
        const auto& phis = model.center_phi(l);
        lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
          double kb = 0.0;
          const Vec3 g = grad_kb(s, kb);
          const Eigen::VectorXd pc = phis.row(static_cast<Eigen::Index>(j)).transpose();
          row.emplace_back(off + static_cast<std::uint32_t>(j), jac.col(axis).dot(pc) * kb + px.dot(pc) * g[axis]);
        });
      }
    }
  });
}

Eigen::VectorXd stacked_normals(const VoxelHierarchy& hier) {
  Eigen::VectorXd n(static_cast<Eigen::Index>(3 * hier.constraint_count()));
  Eigen::Index k = 0;
  for (int l = 1; l <= hier.adaptive_depth(); ++l) {
    for (const auto& v : hier.level(l).normals()) {
      n[k++] = v.x();
      n[k++] = v.y();
      n[k++] = v.z();
    }
  }
  return n;
}

namespace {

std::mutex& footprint_mutex() {
  static std::mutex m;
  return m;
}

SystemFootprint& footprint_state() {
  static SystemFootprint f;
  return f;
}

}  // namespace

SystemFootprint SystemFootprint::current() {
  std::lock_guard lock(footprint_mutex());
  return footprint_state();
}

void SystemFootprint::reset_peak() {
  std::lock_guard lock(footprint_mutex());
  auto& f = footprint_state();
  f.peak_bytes = f.live_bytes;
  f.peak_unknowns = f.live_unknowns;
}

NormalSystem::NormalSystem(SparseMatrix G, SparseMatrix Q, std::vector<double> weights, double ridge)
    : G_(std::move(G)), Q_(std::move(Q)), weights_(std::move(weights)), ridge_(ridge) {
  if (G_.cols() != Q_.cols()) throw Error(ErrorCode::SizeMismatch, "G and Q column counts differ");
  if (!weights_.empty() && weights_.size() != G_.rows()) {
    throw Error(ErrorCode::SizeMismatch, "weight count does not match point count");
  }
  Gt_ = G_.transpose();
  Qt_ = Q_.transpose();
  scratch_g_.resize(static_cast<Eigen::Index>(G_.rows()));
  scratch_q_.resize(static_cast<Eigen::Index>(Q_.rows()));
  footprint_ = memory_bytes();
  std::lock_guard lock(footprint_mutex());
  auto& f = footprint_state();
  f.live_bytes += footprint_;
  f.live_unknowns += size();
  f.peak_bytes = std::max(f.peak_bytes, f.live_bytes);
  f.peak_unknowns = std::max(f.peak_unknowns, f.live_unknowns);
}

NormalSystem::~NormalSystem() {
  std::lock_guard lock(footprint_mutex());
  auto& f = footprint_state();
  f.live_bytes -= footprint_;
  f.live_unknowns -= size();
}

std::size_t NormalSystem::memory_bytes() const {
  return G_.memory_bytes() + Gt_.memory_bytes() + Q_.memory_bytes() + Qt_.memory_bytes() +
         weights_.capacity() * sizeof(double) +
         static_cast<std::size_t>(scratch_g_.size() + scratch_q_.size()) * sizeof(double);
}

void NormalSystem::apply(std::span<const double> x, std::span<double> y) const {
  const std::size_t n = size();
  if (x.size() != n || y.size() != n) throw Error(ErrorCode::SizeMismatch, "system apply size mismatch");
  std::span<double> q(scratch_q_.data(), static_cast<std::size_t>(scratch_q_.size()));
  std::span<double> g(scratch_g_.data(), static_cast<std::size_t>(scratch_g_.size()));
  Q_.multiply(x, q);
  G_.multiply(x, g);
  if (!weights_.empty()) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= weights_[i];
  }
  std::vector<double> tmp(n);
  Qt_.multiply(q, y);
  Gt_.multiply(g, tmp);
  for (std::size_t i = 0; i < n; ++i) y[i] += tmp[i] + ridge_ * x[i];
}

Eigen::VectorXd NormalSystem::apply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y(x.size());
  apply(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
        std::span<double>(y.data(), static_cast<std::size_t>(y.size())));
  return y;
}

Eigen::VectorXd NormalSystem::diagonal() const {
  Eigen::VectorXd d = Q_.weighted_column_norms2() + G_.weighted_column_norms2(weights_);
  d.array() += ridge_;
  return d;
}

Eigen::VectorXd NormalSystem::rhs(const Eigen::VectorXd& stacked) const {
  if (static_cast<std::size_t>(stacked.size()) != Q_.rows()) {
    throw Error(ErrorCode::SizeMismatch, "normal vector does not match the constraint count");
  }
  Eigen::VectorXd b(static_cast<Eigen::Index>(size()));
  Qt_.multiply(std::span<const double>(stacked.data(), static_cast<std::size_t>(stacked.size())),
               std::span<double>(b.data(), static_cast<std::size_t>(b.size())));
  return b;
}

double NormalSystem::energy(const Eigen::VectorXd& alpha, const Eigen::VectorXd& stacked) const {
  Eigen::VectorXd q(static_cast<Eigen::Index>(Q_.rows()));
  Eigen::VectorXd g(static_cast<Eigen::Index>(G_.rows()));
  const std::span<const double> a(alpha.data(), static_cast<std::size_t>(alpha.size()));
  Q_.multiply(a, std::span<double>(q.data(), static_cast<std::size_t>(q.size())));
  G_.multiply(a, std::span<double>(g.data(), static_cast<std::size_t>(g.size())));
  double e = (q - stacked).squaredNorm();
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    e += (weights_.empty() ? 1.0 : weights_[static_cast<std::size_t>(i)]) * g[i] * g[i];
  }
  return e + ridge_ * alpha.squaredNorm();
}

namespace {

double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return deterministic_dot(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                           std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

Eigen::VectorXd apply_fn(const ApplyFn& apply, const Eigen::VectorXd& x) {
  Eigen::VectorXd y(x.size());
  apply(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
        std::span<double>(y.data(), static_cast<std::size_t>(y.size())));
  return y;
}

}  // namespace

SolverStats conjugate_gradient(const ApplyFn& apply, const Eigen::VectorXd& diagonal, const Eigen::VectorXd& b,
                               Eigen::VectorXd& x, const SolveConfig& config) {
  config.validate();
  const Eigen::Index n = b.size();
  if (diagonal.size() != n) throw Error(ErrorCode::SizeMismatch, "preconditioner size mismatch");
  if (x.size() != n) x = Eigen::VectorXd::Zero(n);
  SolverStats stats;

  Eigen::VectorXd inv_diag(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (diagonal[i] == 0.0 || !std::isfinite(diagonal[i])) {
      inv_diag[i] = 1.0;
      ++stats.zero_diagonals;
    } else {
      inv_diag[i] = 1.0 / diagonal[i];
    }
  }
  if (stats.zero_diagonals > 0) {
    logger().warn("{} zero diagonal entries replaced by 1 in the preconditioner", stats.zero_diagonals);
  }

  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    x.setZero();
    stats.final_residual = 0.0;
    return stats;
  }
  Eigen::VectorXd r = b - apply_fn(apply, x);
  double res = std::sqrt(dot(r, r)) / bnorm;
  stats.residual_history.push_back(res);
  Eigen::VectorXd best = x;
  double best_res = res;
  if (res <= config.tolerance) {
    stats.final_residual = res;
    return stats;
  }
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = dot(r, z);
  stats.converged = false;
  // x^T A x / 2 - b^T x = -(x^T r + b^T x) / 2 with r = b - A x.
  auto objective = [&] { return -0.5 * (dot(x, r) + dot(b, x)); };
  stats.preconditioned_history.push_back(std::sqrt(rz) / bnorm);
  stats.objective_history.push_back(objective());

  for (int it = 1; it <= config.max_iterations; ++it) {
    const Eigen::VectorXd Ap = apply_fn(apply, p);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) {
      logger().warn("conjugate gradient stopped: non-positive curvature {}", pAp);
      break;
    }
    const double step = rz / pAp;
    x += step * p;
    r -= step * Ap;
    res = std::sqrt(dot(r, r)) / bnorm;
    stats.iterations = it;
    if (res <= config.tolerance) {
      // Confirm against the true residual before stopping.
      r = b - apply_fn(apply, x);
      res = std::sqrt(dot(r, r)) / bnorm;
    }
    stats.residual_history.push_back(res);
    stats.objective_history.push_back(objective());
    logger().debug("{{\"iter\": {}, \"residual\": {:.9e}}}", it, res);
    if (res < best_res) {
      best_res = res;
      best = x;
    }
    if (res <= config.tolerance) {
      stats.converged = true;
      break;
    }
    z = inv_diag.cwiseProduct(r);
    const double rz_next = dot(r, z);
    stats.preconditioned_history.push_back(std::sqrt(rz_next) / bnorm);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  if (!stats.converged) {
    x = best;
    logger().warn("conjugate gradient did not converge in {} iterations (residual {:.3e})", stats.iterations,
                  best_res);
  }
  const Eigen::VectorXd r_final = b - apply_fn(apply, x);
  stats.final_residual = std::sqrt(dot(r_final, r_final)) / bnorm;
  return stats;
}

FitResult solve(const KernelModel& model, const OrientedPointCloud& cloud, const SolveConfig& config,
                std::span<const double> weights) {
  config.validate();
  if (!weights.empty()) {
    if (weights.size() != cloud.size()) throw Error(ErrorCode::SizeMismatch, "weight count does not match point count");
    for (double w : weights) {
      if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::InvalidConfig, "point weights must lie in [0, 1]");
    }
  }
  const auto& hier = model.hierarchy();
  std::size_t empty_rows = 0;
  NormalSystem system(assemble_G(model, cloud, &empty_rows), assemble_Q(model),
                      std::vector<double>(weights.begin(), weights.end()), config.ridge);
  const Eigen::VectorXd b = system.rhs(stacked_normals(hier));
  FitResult fit;
  fit.alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hier.voxel_count()));
  fit.stats = conjugate_gradient([&](auto x, auto y) { system.apply(x, y); }, system.diagonal(), b, fit.alpha,
                                 config);
  fit.stats.empty_rows = empty_rows;
  logger().info("solve: {} unknowns, {} iterations, residual {:.3e}", hier.voxel_count(), fit.stats.iterations,
                fit.stats.final_residual);
  return fit;
}

ColorFit solve_color(const KernelModel& model, std::span<const Vec3> points, std::span<const Vec3> colors,
                     const SolveConfig& config) {
  config.validate();
  if (points.size() != colors.size()) throw Error(ErrorCode::SizeMismatch, "color count does not match point count");
  const std::size_t N = model.hierarchy().voxel_count();
  SparseMatrix G = assemble_G(model, points);
  ColorFit out;
  out.ridge = config.ridge;
  if (!(out.ridge > 0.0)) {
    const double trace = G.weighted_column_norms2().sum();
    out.ridge = N > 0 ? 1e-4 * trace / static_cast<double>(N) : 0.0;
  }
  const SparseMatrix Gt = G.transpose();
  SparseMatrix Q(0, N, {0}, {}, {});
  NormalSystem system(std::move(G), std::move(Q), {}, out.ridge);
  const Eigen::VectorXd diag = system.diagonal();
  SolveConfig cfg = config;
  cfg.ridge = out.ridge;
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) t[static_cast<Eigen::Index>(i)] = colors[i][c];
    Eigen::VectorXd b(static_cast<Eigen::Index>(N));
    Gt.multiply(std::span<const double>(t.data(), static_cast<std::size_t>(t.size())),
                 std::span<double>(b.data(), static_cast<std::size_t>(b.size())));
    out.gamma[static_cast<std::size_t>(c)] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    out.stats[static_cast<std::size_t>(c)] = conjugate_gradient([&](auto x, auto y) { system.apply(x, y); }, diag, b,
                                                                out.gamma[static_cast<std::size_t>(c)], cfg);
  }
  return out;
}

}  // namespace kernelsurf
