#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "kernelsurf/geometry.hpp"
#include "kernelsurf/kernel_field.hpp"
#include "kernelsurf/spatial_index.hpp"

namespace kernelsurf {

/// Dense oriented cloud plus the radius of the near-surface band S_eps.
class DenseReference {
 public:
  /// Throws Error(EmptyReference) for an empty cloud or one without normals,
  /// Error(InvalidConfig) for epsilon <= 0.
  DenseReference(OrientedPointCloud cloud, double epsilon);

  const OrientedPointCloud& cloud() const { return cloud_; }
  double epsilon() const { return epsilon_; }
  const PointGrid& index() const { return index_; }

 private:
  OrientedPointCloud cloud_;
  double epsilon_;
  PointGrid index_;
};

/// Point-to-plane signed distance to the nearest reference point, clamped
/// to [-trunc, trunc].
double tsdf(const Vec3& x, const DenseReference& ref, double trunc);

struct LossConfig {
  double beta = 0.1;
  double eta = 0.5;
  double trunc = 0.0;  // <= 0 means epsilon
  std::uint64_t seed = 0;
  std::size_t surface_samples = 4096;
  std::size_t tsdf_samples = 4096;
  std::size_t normal_samples = 4096;
  std::size_t outside_samples = 4096;
  std::size_t min_surf_samples = 4096;
};

struct LossReport {
  double surf = 0.0;
  double tsdf = 0.0;
  double normal = 0.0;
  std::optional<double> outside;  // absent without sensor origins
  double min_surf = 0.0;
  std::size_t zero_gradient_skipped = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

/// Monte-Carlo estimates of the supervision losses of a fitted field.
LossReport loss_report(const KernelModel& model, const FitResult& fit, const DenseReference& ref,
                       const LossConfig& config = {});

/// True iff some indexed point lies within distance tau (closed ball).
bool mask_distance(const Vec3& x, const PointGrid& cloud, double tau);

/// 1 within tau of the cloud, falling linearly to 0 at 2 tau.
double soft_mask(const Vec3& x, const PointGrid& cloud, double tau);

}  // namespace kernelsurf
