#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "kernelsurf/geometry.hpp"
#include "kernelsurf/hierarchy.hpp"

namespace kernelsurf {

enum class Activation { relu, none };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::none;
};

struct MLPWeights {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  /// Throws Error(DimensionMismatch) when widths do not chain or the last
  /// layer has an activation.
  void validate() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

  /// Forward pass that also returns d(output)/d(input), using the relu
  /// subgradient 0 at exactly zero pre-activation.
  Eigen::VectorXd forward(const Eigen::VectorXd& input, Eigen::MatrixXd& jacobian) const;
};

/// phi for one level: either a fixed vector, or an MLP applied to
/// K_b-interpolated per-voxel features of that level.
struct FeatureFieldSpec {
  enum class Kind { constant, learned };

  Kind kind = Kind::constant;
  Eigen::VectorXd constant;
  MLPWeights mlp;
  Eigen::MatrixXd features;  // learned: one row per voxel of the level
  bool concat_position = false;

  static FeatureFieldSpec make_constant(Eigen::VectorXd value);
  static FeatureFieldSpec make_learned(MLPWeights mlp, Eigen::MatrixXd features,
                                       bool concat_position = false);

  Eigen::Index dim() const { return kind == Kind::constant ? constant.size() : mlp.output_dim(); }
};

/// Per-level kernels K(x, x') = <phi(x), phi(x')> * K_b(x, x') over a hierarchy.
class KernelModel {
 public:
  KernelModel(std::shared_ptr<const VoxelHierarchy> hierarchy, std::vector<FeatureFieldSpec> fields);

  /// Constant field with every entry 1/sqrt(d), so that K equals K_b.
  static KernelModel constant(std::shared_ptr<const VoxelHierarchy> hierarchy, int d = 1);

  const VoxelHierarchy& hierarchy() const { return *hierarchy_; }
  std::shared_ptr<const VoxelHierarchy> hierarchy_ptr() const { return hierarchy_; }
  const FeatureFieldSpec& field(int level) const { return fields_.at(static_cast<std::size_t>(level - 1)); }
  bool is_constant(int level) const { return field(level).kind == FeatureFieldSpec::Kind::constant; }
  Eigen::Index dim(int level) const { return field(level).dim(); }

  Eigen::VectorXd phi(int level, const Vec3& x) const;
  /// phi(x) and its d x 3 spatial Jacobian.
  Eigen::VectorXd phi(int level, const Vec3& x, Eigen::MatrixXd& jacobian) const;

  /// phi at every voxel center of the level, one row per voxel.
  const Eigen::MatrixXd& center_phi(int level) const {
    return center_phi_.at(static_cast<std::size_t>(level - 1));
  }

  /// <c, c> for constant levels.
  double constant_norm2(int level) const { return constant_norm2_.at(static_cast<std::size_t>(level - 1)); }

 private:
  std::shared_ptr<const VoxelHierarchy> hierarchy_;
  std::vector<FeatureFieldSpec> fields_;
  std::vector<Eigen::MatrixXd> center_phi_;
  std::vector<double> constant_norm2_;
};

struct SolverStats {
  int iterations = 0;
  double final_residual = 0.0;  // ||A a - b|| / ||b||
  bool converged = true;
  std::size_t empty_rows = 0;      // input points without kernel support
  std::size_t zero_diagonals = 0;  // preconditioner entries replaced by 1
  std::vector<double> residual_history;
  std::vector<double> preconditioned_history;  // sqrt(r^T M^-1 r) / ||b||
  std::vector<double> objective_history;       // x^T A x / 2 - b^T x
};

/// Coefficients over all hierarchy voxels in global index order.
struct FitResult {
  Eigen::VectorXd alpha;
  SolverStats stats;
};

Eigen::VectorXd eval_phi(const KernelModel& model, int level, const Vec3& x);
double eval_kernel(const KernelModel& model, int level, const Vec3& x, const Vec3& y);
/// Gradient with respect to the first argument.
Vec3 eval_kernel_grad(const KernelModel& model, int level, const Vec3& x, const Vec3& y);

/// f(x) = sum over levels and supporting voxels of alpha * K. Throws
/// Error(SizeMismatch) when alpha does not match the hierarchy.
double eval_field(const KernelModel& model, const FitResult& fit, const Vec3& x);
Vec3 eval_field_grad(const KernelModel& model, const FitResult& fit, const Vec3& x);

/// Same as eval_field for an arbitrary coefficient vector, without the size
/// check (used by solves that share the kernel, e.g. the color field).
double eval_expansion(const KernelModel& model, const Eigen::VectorXd& coeffs, const Vec3& x);
Vec3 eval_expansion_grad(const KernelModel& model, const Eigen::VectorXd& coeffs, const Vec3& x);

}  // namespace kernelsurf
