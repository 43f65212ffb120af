#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>

#include <Eigen/Core>

#include "kernelsurf/geometry.hpp"
#include "kernelsurf/kernel_field.hpp"
#include "kernelsurf/sparse_matrix.hpp"

namespace kernelsurf {

struct SolveConfig {
  double tolerance = 1e-5;   // relative residual ||A a - b|| / ||b||
  int max_iterations = 2000;
  double ridge = 0.0;        // added to the diagonal of A

  void validate() const;
};

/// G(i, j) = K(x_i, center_j) for every input point i and every hierarchy
/// voxel j (global index order). `empty_rows`, if given, receives the number
/// of points without any kernel support.
SparseMatrix assemble_G(const KernelModel& model, std::span<const Vec3> points,
                        std::size_t* empty_rows = nullptr);
SparseMatrix assemble_G(const KernelModel& model, const OrientedPointCloud& cloud,
                        std::size_t* empty_rows = nullptr);

/// Gradient rows at the constraint voxels (levels 1..L'), ordered
/// constraint-major: row 3i + a is the derivative along axis a of
/// K(x, center_j) at x = center of constraint voxel i.
SparseMatrix assemble_Q(const KernelModel& model);

/// Voxel normals of levels 1..L' stacked as (x, y, z) per constraint voxel.
Eigen::VectorXd stacked_normals(const VoxelHierarchy& hier);

/// A = Q^T Q + G^T W G + ridge * I, applied through sparse products with G,
/// G^T, Q and Q^T; never formed.
class NormalSystem {
 public:
  NormalSystem(SparseMatrix G, SparseMatrix Q, std::vector<double> weights = {}, double ridge = 0.0);
  ~NormalSystem();
  NormalSystem(const NormalSystem&) = delete;
  NormalSystem& operator=(const NormalSystem&) = delete;

  std::size_t size() const { return G_.cols(); }
  const SparseMatrix& G() const { return G_; }
  const SparseMatrix& Q() const { return Q_; }

  void apply(std::span<const double> x, std::span<double> y) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// diag(A), exact.
  Eigen::VectorXd diagonal() const;
  /// Q^T n.
  Eigen::VectorXd rhs(const Eigen::VectorXd& stacked) const;
  /// ||Q a - n||^2 + sum_i w_i (G a)_i^2 (+ ridge ||a||^2).
  double energy(const Eigen::VectorXd& alpha, const Eigen::VectorXd& stacked) const;
  std::size_t memory_bytes() const;

 private:
  SparseMatrix G_, Gt_, Q_, Qt_;
  std::vector<double> weights_;
  double ridge_;
  std::size_t footprint_;
  mutable Eigen::VectorXd scratch_g_, scratch_q_;
};

/// Bookkeeping of live NormalSystem instances, used to check that chunked
/// runs never hold more than one chunk's system per worker.
struct SystemFootprint {
  std::size_t live_bytes = 0;
  std::size_t live_unknowns = 0;
  std::size_t peak_bytes = 0;
  std::size_t peak_unknowns = 0;

  static SystemFootprint current();
  static void reset_peak();
};

using ApplyFn = std::function<void(std::span<const double>, std::span<double>)>;

/// Jacobi-preconditioned conjugate gradient from x = initial guess. Zero
/// diagonal entries are replaced by 1. On hitting max_iterations the iterate
/// with the smallest residual is returned with converged = false.
SolverStats conjugate_gradient(const ApplyFn& apply, const Eigen::VectorXd& diagonal,
                               const Eigen::VectorXd& b, Eigen::VectorXd& x, const SolveConfig& config);

/// Minimizes the gradient + value energy. `weights` (one per point, in
/// [0,1]) scales each point's value term; empty means unweighted.
FitResult solve(const KernelModel& model, const OrientedPointCloud& cloud, const SolveConfig& config,
                std::span<const double> weights = {});

struct ColorFit {
  std::array<Eigen::VectorXd, 3> gamma;
  std::array<SolverStats, 3> stats;
  double ridge = 0.0;
};

/// Per-channel (G^T G + ridge I) gamma = G^T t with a kernel shared across
/// channels. config.ridge <= 0 selects 1e-4 * trace(G^T G) / n.
ColorFit solve_color(const KernelModel& model, std::span<const Vec3> points,
                     std::span<const Vec3> colors, const SolveConfig& config);

}  // namespace kernelsurf
