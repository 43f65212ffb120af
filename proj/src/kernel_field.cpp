#include "kernelsurf/kernel_field.hpp"

#include <cmath>
#include <string>

#include "kernelsurf/error.hpp"

namespace kernelsurf {

void MLPWeights::validate() const {
  if (layers.empty()) throw Error(ErrorCode::DimensionMismatch, "MLP has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0 || layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "MLP layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i > 0 && layer.weight.cols() != layers[i - 1].weight.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "MLP layer " + std::to_string(i) + " width does not chain");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw Error(ErrorCode::DimensionMismatch, "MLP layer " + std::to_string(i) + " has non-finite values");
    }
  }
  if (layers.back().activation != Activation::none) {
    throw Error(ErrorCode::DimensionMismatch, "MLP output layer must be linear");
  }
}

Eigen::VectorXd MLPWeights::forward(const Eigen::VectorXd& input) const {
  Eigen::VectorXd h = input;
  for (const auto& layer : layers) {
    h = layer.weight * h + layer.bias;
    if (layer.activation == Activation::relu) h = h.cwiseMax(0.0);
  }
  return h;
}

Eigen::VectorXd MLPWeights::forward(const Eigen::VectorXd& input, Eigen::MatrixXd& jacobian) const {
  Eigen::VectorXd h = input;
  jacobian = Eigen::MatrixXd::Identity(input.size(), input.size());
  for (const auto& layer : layers) {
    h = layer.weight * h + layer.bias;
    jacobian = layer.weight * jacobian;
    if (layer.activation == Activation::relu) {
      for (Eigen::Index r = 0; r < h.size(); ++r) {
        if (h[r] <= 0.0) {
          h[r] = 0.0;
          jacobian.row(r).setZero();
        }
      }
    }
  }
  return h;
}

FeatureFieldSpec FeatureFieldSpec::make_constant(Eigen::VectorXd value) {
  FeatureFieldSpec spec;
  spec.kind = Kind::constant;
  spec.constant = std::move(value);
  return spec;
}

FeatureFieldSpec FeatureFieldSpec::make_learned(MLPWeights mlp, Eigen::MatrixXd features, bool concat_position) {
  FeatureFieldSpec spec;
  spec.kind = Kind::learned;
  spec.mlp = std::move(mlp);
  spec.features = std::move(features);
  spec.concat_position = concat_position;
  return spec;
}

KernelModel::KernelModel(std::shared_ptr<const VoxelHierarchy> hierarchy, std::vector<FeatureFieldSpec> fields)
    : hierarchy_(std::move(hierarchy)), fields_(std::move(fields)) {
  if (!hierarchy_) throw Error(ErrorCode::InvalidConfig, "kernel model needs a hierarchy");
  const int L = hierarchy_->levels();
  if (fields_.size() != static_cast<std::size_t>(L)) {
    throw Error(ErrorCode::DimensionMismatch, "kernel model needs one feature field per level");
  }
  center_phi_.resize(fields_.size());
  constant_norm2_.assign(fields_.size(), 0.0);
  for (int l = 1; l <= L; ++l) {
    const auto& spec = fields_[static_cast<std::size_t>(l - 1)];
    const auto& lvl = hierarchy_->level(l);
    if (spec.kind == FeatureFieldSpec::Kind::constant) {
      if (spec.constant.size() == 0 || !spec.constant.allFinite() || spec.constant.squaredNorm() == 0.0) {
        throw Error(ErrorCode::InvalidConfig, "constant feature at level " + std::to_string(l) +
                                                  " must be finite and nonzero");
      }
      constant_norm2_[static_cast<std::size_t>(l - 1)] = spec.constant.squaredNorm();
      continue;
    }
    spec.mlp.validate();
    if (static_cast<std::size_t>(spec.features.rows()) != lvl.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "level " + std::to_string(l) + " has " + std::to_string(lvl.size()) + " voxels but " +
                      std::to_string(spec.features.rows()) + " feature rows");
    }
    const Eigen::Index in = spec.features.cols() + (spec.concat_position ? 3 : 0);
    if (spec.mlp.input_dim() != in) {
      throw Error(ErrorCode::DimensionMismatch, "MLP input width at level " + std::to_string(l) +
                                                    " does not match the feature dimension");
    }
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(lvl.size()), spec.mlp.output_dim());
    for (std::size_t i = 0; i < lvl.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = phi(l, lvl.center(i)).transpose();
    center_phi_[static_cast<std::size_t>(l - 1)] = std::move(rows);
  }
}

KernelModel KernelModel::constant(std::shared_ptr<const VoxelHierarchy> hierarchy, int d) {
  if (d < 1) throw Error(ErrorCode::InvalidConfig, "feature dimension must be positive");
  if (!hierarchy) throw Error(ErrorCode::InvalidConfig, "kernel model needs a hierarchy");
  const Eigen::VectorXd value = Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<FeatureFieldSpec> fields(static_cast<std::size_t>(hierarchy->levels()),
                                       FeatureFieldSpec::make_constant(value));
  return KernelModel(std::move(hierarchy), std::move(fields));
}

namespace {

Eigen::VectorXd mlp_input(const KernelModel& model, int level, const Vec3& x) {
  const auto& spec = model.field(level);
  Eigen::VectorXd z = interpolate_feature(model.hierarchy(), level, x, spec.features);
  if (!spec.concat_position) return z;
  Eigen::VectorXd in(z.size() + 3);
  in << z, x;
  return in;
}

}  // namespace

Eigen::VectorXd KernelModel::phi(int level, const Vec3& x) const {
  const auto& spec = field(level);
  if (spec.kind == FeatureFieldSpec::Kind::constant) return spec.constant;
  return spec.mlp.forward(mlp_input(*this, level, x));
}

Eigen::VectorXd KernelModel::phi(int level, const Vec3& x, Eigen::MatrixXd& jacobian) const {
  const auto& spec = field(level);
  if (spec.kind == FeatureFieldSpec::Kind::constant) {
    jacobian = Eigen::MatrixXd::Zero(spec.constant.size(), 3);
    return spec.constant;
  }
  const auto& lvl = hierarchy_->level(level);
  const double w = lvl.width();
  const Eigen::Index fd = spec.features.cols();
  const Eigen::Index in_dim = fd + (spec.concat_position ? 3 : 0);
  Eigen::VectorXd in = Eigen::VectorXd::Zero(in_dim);
  Eigen::MatrixXd din = Eigen::MatrixXd::Zero(in_dim, 3);
  lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
    const double bx = bspline(s.x()), by = bspline(s.y()), bz = bspline(s.z());
    const Eigen::RowVector3d g(bspline_deriv(s.x()) * by * bz / w, bx * bspline_deriv(s.y()) * bz / w,
                               bx * by * bspline_deriv(s.z()) / w);
    const auto f = spec.features.row(static_cast<Eigen::Index>(j)).transpose();
    in.head(fd) += bx * by * bz * f;
    din.topRows(fd) += f * g;
  });
  if (spec.concat_position) {
    in.tail(3) = x;
    din.bottomRows(3) = Eigen::Matrix3d::Identity();
  }
  Eigen::MatrixXd jmlp;
  Eigen::VectorXd out = spec.mlp.forward(in, jmlp);
  jacobian = jmlp * din;
  return out;
}

Eigen::VectorXd eval_phi(const KernelModel& model, int level, const Vec3& x) { return model.phi(level, x); }

double eval_kernel(const KernelModel& model, int level, const Vec3& x, const Vec3& y) {
  const double kb = bezier_kernel(x, y, model.hierarchy().width(level));
  if (model.is_constant(level)) return model.constant_norm2(level) * kb;
  if (kb == 0.0) return 0.0;
  return model.phi(level, x).dot(model.phi(level, y)) * kb;
}

Vec3 eval_kernel_grad(const KernelModel& model, int level, const Vec3& x, const Vec3& y) {
  const double w = model.hierarchy().width(level);
  const Vec3 gkb = bezier_kernel_grad(x, y, w);
  if (model.is_constant(level)) return model.constant_norm2(level) * gkb;
  const double kb = bezier_kernel(x, y, w);
  Eigen::MatrixXd jac;
  const Eigen::VectorXd px = model.phi(level, x, jac);
  const Eigen::VectorXd py = model.phi(level, y);
  return Vec3(jac.transpose() * py) * kb + px.dot(py) * gkb;
}

double eval_expansion(const KernelModel& model, const Eigen::VectorXd& coeffs, const Vec3& x) {
  const auto& hier = model.hierarchy();
  double f = 0.0;
  for (int l = 1; l <= hier.levels(); ++l) {
    const auto& lvl = hier.level(l);
    const std::size_t off = hier.offset(l);
    double level_sum = 0.0;
    if (model.is_constant(l)) {
      lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
        level_sum += coeffs[static_cast<Eigen::Index>(off + j)] * (bspline(s.x()) * bspline(s.y()) * bspline(s.z()));
      });
      f += model.constant_norm2(l) * level_sum;
    } else {
      const Eigen::VectorXd px = model.phi(l, x);
      const auto& centers = model.center_phi(l);
      lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
        const double kb = bspline(s.x()) * bspline(s.y()) * bspline(s.z());
        level_sum += coeffs[static_cast<Eigen::Index>(off + j)] * px.dot(centers.row(static_cast<Eigen::Index>(j)).transpose()) * kb;
      });
      f += level_sum;
    }
  }
  return f;
}

Vec3 eval_expansion_grad(const KernelModel& model, const Eigen::VectorXd& coeffs, const Vec3& x) {
  const auto& hier = model.hierarchy();
  Vec3 g = Vec3::Zero();
  for (int l = 1; l <= hier.levels(); ++l) {
    const auto& lvl = hier.level(l);
    const std::size_t off = hier.offset(l);
    const double w = lvl.width();
    auto grad_kb = [w](const Vec3& s, double& kb) -> Vec3 {
      const double bx = bspline(s.x()), by = bspline(s.y()), bz = bspline(s.z());
      kb = bx * by * bz;
      return Vec3(bspline_deriv(s.x()) * by * bz, bx * bspline_deriv(s.y()) * bz, bx * by * bspline_deriv(s.z())) / w;
    };
    if (model.is_constant(l)) {
      Vec3 level_sum = Vec3::Zero();
      lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
        double kb = 0.0;
        level_sum += coeffs[static_cast<Eigen::Index>(off + j)] * grad_kb(s, kb);
      });
      g += model.constant_norm2(l) * level_sum;
    } else {
      Eigen::MatrixXd jac;
      const Eigen::VectorXd px = model.phi(l, x, jac);
      const auto& centers = model.center_phi(l);
      lvl.for_each_support(x, [&](std::size_t j, const Vec3& s) {
        double kb = 0.0;
        const Vec3 gkb = grad_kb(s, kb);
        const Eigen::VectorXd pc = centers.row(static_cast<Eigen::Index>(j)).transpose();
        g += coeffs[static_cast<Eigen::Index>(off + j)] * (Vec3(jac.transpose() * pc) * kb + px.dot(pc) * gkb);
      });
    }
  }
  return g;
}

namespace {

void check_fit(const KernelModel& model, const FitResult& fit) {
  if (static_cast<std::size_t>(fit.alpha.size()) != model.hierarchy().voxel_count()) {
    throw Error(ErrorCode::SizeMismatch, "coefficient count " + std::to_string(fit.alpha.size()) +
                                             " does not match voxel count " +
                                             std::to_string(model.hierarchy().voxel_count()));
  }
}

}  // namespace

double eval_field(const KernelModel& model, const FitResult& fit, const Vec3& x) {
  check_fit(model, fit);
  return eval_expansion(model, fit.alpha, x);
}

Vec3 eval_field_grad(const KernelModel& model, const FitResult& fit, const Vec3& x) {
  check_fit(model, fit);
  return eval_expansion_grad(model, fit.alpha, x);
}

}  // namespace kernelsurf
