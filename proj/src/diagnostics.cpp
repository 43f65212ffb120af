#include "kernelsurf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "kernelsurf/error.hpp"
#include "kernelsurf/log.hpp"

namespace kernelsurf {
namespace {

const OrientedPointCloud& checked(const OrientedPointCloud& cloud) {
  if (cloud.size() == 0) throw Error(ErrorCode::EmptyReference, "dense reference is empty");
  if (!cloud.has_normals()) throw Error(ErrorCode::EmptyReference, "dense reference has no normals");
  return cloud;
}

}  // namespace

DenseReference::DenseReference(OrientedPointCloud cloud, double epsilon)
    : cloud_(std::move(cloud)), epsilon_(epsilon), index_(checked(cloud_).positions) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "reference band radius must be positive");
}

double tsdf(const Vec3& x, const DenseReference& ref, double trunc) {
  const auto nn = ref.index().nearest(x);
  const auto& cloud = ref.cloud();
  const double d = (x - cloud.positions[nn.index]).dot(cloud.normals[nn.index]);
  return std::clamp(d, -trunc, trunc);
}

namespace {

std::vector<std::size_t> pick(std::size_t population, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  if (population <= count) {
    out.resize(population);
    for (std::size_t i = 0; i < population; ++i) out[i] = i;
    return out;
  }
  std::uniform_int_distribution<std::size_t> dist(0, population - 1);
  out.resize(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Gaussian perturbations of dense points kept only inside the eps band.
std::vector<Vec3> band_samples(const DenseReference& ref, std::size_t count, std::mt19937_64& rng) {
  const auto& pts = ref.cloud().positions;
  const double eps = ref.epsilon();
  std::uniform_int_distribution<std::size_t> which(0, pts.size() - 1);
  std::normal_distribution<double> gauss(0.0, eps / 2.0);
  std::vector<Vec3> out;
  out.reserve(count);
  const std::size_t max_attempts = 100 * count + 100;
  for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
    const Vec3& p = pts[which(rng)];
    const Vec3 x = p + Vec3(gauss(rng), gauss(rng), gauss(rng));
    if (ref.index().nearest(x).distance <= eps) out.push_back(x);
  }
  return out;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace

LossReport loss_report(const KernelModel& model, const FitResult& fit, const DenseReference& ref,
                       const LossConfig& config) {
  if (!(config.beta > 0.0) || !(config.eta > 0.0)) throw Error(ErrorCode::InvalidConfig, "beta and eta must be positive");
  const auto& cloud = ref.cloud();
  const double trunc = config.trunc > 0.0 ? config.trunc : ref.epsilon();
  std::mt19937_64 rng(config.seed);
  LossReport report;
  report.seed = config.seed;

  std::vector<double> values;
  for (auto i : pick(cloud.size(), config.surface_samples, rng)) {
    values.push_back(std::abs(eval_field(model, fit, cloud.positions[i])));
  }
  report.surf = mean(values);

  values.clear();
  for (const auto& x : band_samples(ref, config.tsdf_samples, rng)) {
    values.push_back(std::abs(eval_field(model, fit, x) - tsdf(x, ref, trunc)));
  }
  report.tsdf = mean(values);

  values.clear();
  for (auto i : pick(cloud.size(), config.normal_samples, rng)) {
    const Vec3 g = eval_field_grad(model, fit, cloud.positions[i]);
    const double len = g.norm();
    if (len < 1e-12) {
      ++report.zero_gradient_skipped;
      continue;
    }
    values.push_back(1.0 - g.dot(cloud.normals[i]) / len);
  }
  report.normal = mean(values);
  if (report.zero_gradient_skipped > 0) {
    logger().warn("normal loss skipped {} samples with vanishing gradient", report.zero_gradient_skipped);
  }

  if (cloud.has_sensors()) {
    values.clear();
    std::uniform_int_distribution<std::size_t> which(0, cloud.size() - 1);
    std::uniform_real_distribution<double> along(0.0, 1.0);
    const std::size_t max_attempts = 100 * config.outside_samples + 100;
    for (std::size_t attempt = 0; attempt < max_attempts && values.size() < config.outside_samples; ++attempt) {
      const std::size_t i = which(rng);
      const Vec3& p = cloud.positions[i];
      const Vec3 x = p + along(rng) * (cloud.sensor_origins[i] - p);
      if ((x - p).norm() <= ref.epsilon()) continue;
      values.push_back(std::exp(-config.beta * std::abs(eval_field(model, fit, x))));
    }
    report.outside = mean(values);
  }

  values.clear();
  const double eta_over_pi = config.eta / std::numbers::pi;
  for (const auto& x : band_samples(ref, config.min_surf_samples, rng)) {
    const double f = eval_field(model, fit, x);
    values.push_back(eta_over_pi / (config.eta * config.eta + f * f));
  }
  report.min_surf = mean(values);
  return report;
}

std::string LossReport::to_json() const {
  nlohmann::json j;
  j["surf"] = surf;
  j["tsdf"] = tsdf;
  j["normal"] = normal;
  j["outside"] = outside ? nlohmann::json(*outside) : nlohmann::json(nullptr);
  j["min_surf"] = min_surf;
  j["zero_gradient_skipped"] = zero_gradient_skipped;
  j["seed"] = seed;
  return j.dump();
}

bool mask_distance(const Vec3& x, const PointGrid& cloud, double tau) {
  return cloud.size() > 0 && cloud.nearest(x).distance <= tau;
}

double soft_mask(const Vec3& x, const PointGrid& cloud, double tau) {
  if (cloud.size() == 0) return 0.0;
  const double d = cloud.nearest(x).distance;
  if (d <= tau) return 1.0;
  if (d >= 2.0 * tau) return 0.0;
  return (2.0 * tau - d) / tau;
}

}  // namespace kernelsurf
