// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// only when a criterion throws; FAIL lines are reported, not hidden.
//
//   acceptance            run all criteria
//   acceptance 3 7        run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "kernelsurf/basis.hpp"
#include "kernelsurf/diagnostics.hpp"
#include "kernelsurf/error.hpp"
#include "kernelsurf/hierarchy.hpp"
#include "kernelsurf/kernel_field.hpp"
#include "kernelsurf/log.hpp"
#include "kernelsurf/metrics.hpp"
#include "kernelsurf/outofcore.hpp"
#include "kernelsurf/pipeline.hpp"
#include "kernelsurf/solver.hpp"
#include "kernelsurf/spatial_index.hpp"
#include "support.hpp"

namespace kernelsurf {
namespace {

namespace kt = kernelsurf::testing;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

// Quadratic B-spline with unit integral; the library basis is twice this.
double bspline_oracle(double s) {
  const double a = std::abs(s);
  if (a <= 0.5) return 0.75 - a * a;
  if (a <= 1.5) return 0.5 * (a - 1.5) * (a - 1.5);
  return 0.0;
}

double bspline_deriv_oracle(double s) {
  const double a = std::abs(s);
  const double sign = s < 0 ? -1.0 : 1.0;
  if (a <= 0.5) return -2.0 * s;
  if (a <= 1.5) return sign * (a - 1.5);
  return 0.0;
}

HierarchyConfig hconfig(double W, int L, int Lp) {
  HierarchyConfig c;
  c.voxel_size = W;
  c.levels = L;
  c.adaptive_depth = Lp;
  return c;
}

double rel_error(const Vec3& a, const Vec3& b) { return (a - b).norm() / b.norm(); }

// ---------------------------------------------------------------- 1

Outcome criterion_kernel() {
  Outcome out;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> arg(-2.0, 2.0);
  double value_err = 0.0, deriv_err = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double s = arg(rng);
    value_err = std::max(value_err, std::abs(bspline(s) - 2.0 * bspline_oracle(s)));
    deriv_err = std::max(deriv_err, std::abs(bspline_deriv(s) - 2.0 * bspline_deriv_oracle(s)));
  }
  out.check(value_err <= 1e-12, fmt::format("psi err {:.1e}", value_err));
  out.check(deriv_err <= 1e-12, fmt::format("psi' err {:.1e}", deriv_err));

  auto cloud = kt::sphere_cloud(3000, 102, 0.5);
  auto hier = std::make_shared<const VoxelHierarchy>(build_from_input(cloud, hconfig(0.1, 3, 2)));

  // Learned fields: random features, one relu hidden layer.
  std::vector<FeatureFieldSpec> learned_specs;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int l = 1; l <= hier->levels(); ++l) {
    MLPWeights mlp;
    DenseLayer h{Eigen::MatrixXd(8, 4), Eigen::VectorXd(8), Activation::relu};
    DenseLayer o{Eigen::MatrixXd(3, 8), Eigen::VectorXd(3), Activation::none};
    for (auto* m : {&h.weight, &o.weight}) for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = g(rng);
    for (auto* b : {&h.bias, &o.bias}) for (Eigen::Index k = 0; k < b->size(); ++k) b->data()[k] = 0.3 * g(rng);
    mlp.layers = {h, o};
    Eigen::MatrixXd feats(static_cast<Eigen::Index>(hier->level(l).size()), 4);
    for (Eigen::Index k = 0; k < feats.size(); ++k) feats.data()[k] = g(rng);
    learned_specs.push_back(FeatureFieldSpec::make_learned(mlp, feats));
  }
  const KernelModel constant = KernelModel::constant(hier, 4);
  const KernelModel learned(hier, learned_specs);

  // Distance from every relu pre-activation to its kink along the probe.
  auto kink_margin = [&](int level, const Vec3& x) {
    const auto& spec = learned.field(level);
    const Eigen::VectorXd z = spec.mlp.layers[0].weight * interpolate_feature(*hier, level, x, spec.features) +
                              spec.mlp.layers[0].bias;
    return z.cwiseAbs().minCoeff();
  };

  std::uniform_real_distribution<double> u(-0.6, 0.6);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  double worst_const = 0.0, worst_learned = 0.0;
  int checked_const = 0, checked_learned = 0;
  std::uniform_real_distribution<double> offset(-1.45, 1.45);
  for (int i = 0; i < 2000; ++i) {
    const int level = 1 + static_cast<int>(i % hier->levels());
    const double w = hier->width(level);
    const double h = 1e-5 * w;
    const Vec3 x = cloud.positions[pick(rng)] + Vec3(u(rng), u(rng), u(rng)) * w;
    const Vec3 y = x + Vec3(offset(rng), offset(rng), offset(rng)) * w;
    for (int which = 0; which < 2; ++which) {
      const KernelModel& m = which == 0 ? constant : learned;
      if (which == 1 && kink_margin(level, x) < 1e-3) continue;
      Vec3 fd;
      for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = h;
        fd[a] = (eval_kernel(m, level, x + e, y) - eval_kernel(m, level, x - e, y)) / (2 * h);
      }
      if (fd.norm() < 1e-6 / w) continue;
      const double err = rel_error(eval_kernel_grad(m, level, x, y), fd);
      (which == 0 ? worst_const : worst_learned) = std::max(which == 0 ? worst_const : worst_learned, err);
      ++(which == 0 ? checked_const : checked_learned);
    }
  }

  // Field gradients with random coefficients.
  Eigen::VectorXd coeffs(static_cast<Eigen::Index>(hier->voxel_count()));
  for (auto& c : coeffs) c = g(rng);
  double worst_field_const = 0.0, worst_field_learned = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = cloud.positions[pick(rng)] + Vec3(u(rng), u(rng), u(rng)) * 0.1;
    const double h = 1e-5 * hier->voxel_size();
    for (int which = 0; which < 2; ++which) {
      const KernelModel& m = which == 0 ? constant : learned;
      if (which == 1) {
        bool near_kink = false;
        for (int l = 1; l <= hier->levels(); ++l) near_kink = near_kink || kink_margin(l, x) < 1e-3;
        if (near_kink) continue;
      }
      Vec3 fd;
      for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = h;
        fd[a] = (eval_expansion(m, coeffs, x + e) - eval_expansion(m, coeffs, x - e)) / (2 * h);
      }
      if (fd.norm() < 1e-6) continue;
      const double err = rel_error(eval_expansion_grad(m, coeffs, x), fd);
      (which == 0 ? worst_field_const : worst_field_learned) =
          std::max(which == 0 ? worst_field_const : worst_field_learned, err);
    }
  }
  out.check(worst_const < 1e-4 && worst_field_const < 1e-4,
            fmt::format("constant grad rel {:.1e}/{:.1e} ({} probes)", worst_const, worst_field_const, checked_const));
  out.check(worst_learned < 1e-3 && worst_field_learned < 1e-3,
            fmt::format("learned grad rel {:.1e}/{:.1e} ({} probes)", worst_learned, worst_field_learned,
                        checked_learned));
  const double t = seconds_since(t0);
  out.check(t < 5.0, fmt::format("{:.2f}s < 5s", t));
  return out;
}

// ---------------------------------------------------------------- 2

Outcome criterion_spd() {
  Outcome out;
  const auto t0 = Clock::now();
  double worst_sym = 0.0, worst_rayleigh = std::numeric_limits<double>::infinity(), worst_match = 0.0;
  double worst_bound = 0.0, worst_tight = 0.0;
  std::size_t max_nv = 0;
  int problems = 0;
  for (int t = 0; t < 20; ++t) {
    const double radius = 0.2 + 0.01 * t;
    auto cloud = kt::sphere_cloud(300 + 10 * static_cast<std::size_t>(t), 200 + t, radius);
    auto hier = std::make_shared<const VoxelHierarchy>(build_from_input(cloud, hconfig(0.2, 2, 1)));
    const auto model = KernelModel::constant(hier);
    const std::size_t n = hier->voxel_count();
    max_nv = std::max(max_nv, n);
    if (n > 300) continue;
    ++problems;
    NormalSystem sys(assemble_G(model, cloud), assemble_Q(model));
    Eigen::MatrixXd A(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
      A.col(static_cast<Eigen::Index>(j)) = sys.apply(e);
    }
    worst_sym = std::max(worst_sym, (A - A.transpose()).cwiseAbs().maxCoeff() / A.cwiseAbs().maxCoeff());
    std::mt19937_64 rng(300 + t);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(n));
      for (auto& x : v) x = g(rng);
      worst_rayleigh = std::min(worst_rayleigh, v.dot(A * v) / v.squaredNorm());
    }
    const Eigen::VectorXd b = sys.rhs(stacked_normals(*hier));
    const Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
      worst_match = std::numeric_limits<double>::infinity();
      continue;
    }
    const Eigen::VectorXd ref = llt.solve(b);
    const auto fit = solve(model, cloud, SolveConfig{});
    worst_match = std::max(worst_match, (fit.alpha - ref).cwiseAbs().maxCoeff());
    const double lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues().minCoeff();
    worst_rayleigh = std::min(worst_rayleigh, lambda_min);
    worst_bound = std::max(worst_bound, (A * fit.alpha - b).norm() / lambda_min);
    SolveConfig tight;
    tight.tolerance = 1e-12;
    tight.max_iterations = 10000;
    worst_tight = std::max(worst_tight, (solve(model, cloud, tight).alpha - ref).cwiseAbs().maxCoeff());
  }
  out.check(problems == 20, fmt::format("{} problems, max n_v {}", problems, max_nv));
  out.check(worst_sym <= 1e-9, fmt::format("asym {:.1e}", worst_sym));
  out.check(worst_rayleigh >= -1e-9, fmt::format("min Rayleigh {:.2e}", worst_rayleigh));
  out.check(worst_match <= 1e-4, fmt::format("CG vs LLT inf-norm {:.2e} at tol 1e-5 (||r||/lambda_min {:.2e}, "
                                             "{:.1e} at tol 1e-12)",
                                             worst_match, worst_bound, worst_tight));
  const double t = seconds_since(t0);
  out.check(t < 30.0, fmt::format("{:.1f}s < 30s", t));
  return out;
}

// ---------------------------------------------------------------- 3, 4, 7

OrientedPointCloud sphere_truth(std::size_t n) {
  OrientedPointCloud gt;
  gt.positions = kt::fibonacci_sphere(n, 1.0);
  gt.normals = gt.positions;
  return gt;
}

PipelineConfig sphere_config() {
  PipelineConfig cfg;
  cfg.hierarchy = hconfig(0.04, 3, 2);
  return cfg;
}

Outcome criterion_sphere() {
  Outcome out;
  const auto cloud = kt::sphere_cloud(20000, 401, 1.0);
  const auto t0 = Clock::now();
  const auto rec = reconstruct(cloud, sphere_config());
  const double t = seconds_since(t0);
  const auto gt = sphere_truth(100000);
  const auto pred = sample_mesh(rec.mesh, 500000, 402);
  const auto m = evaluate_clouds(gt, pred, 0.01);
  const auto topo = kt::mesh_topology(rec.mesh);
  out.check(m.chamfer.chamfer < 0.5 * 0.04, fmt::format("d_C {:.5f} < 0.02", m.chamfer.chamfer));
  out.check(m.fscore.fscore > 99.0, fmt::format("F(0.01) {:.2f} > 99", m.fscore.fscore));
  out.check(m.normal_consistency > 0.98, fmt::format("NC {:.4f} > 0.98", m.normal_consistency));
  out.check(topo.boundary_edges == 0 && topo.nonmanifold_edges == 0,
            fmt::format("boundary {} nonmanifold {}", topo.boundary_edges, topo.nonmanifold_edges));
  out.check(t < 60.0, fmt::format("{:.1f}s < 60s", t));
  return out;
}

std::vector<double> component_areas(const TriangleMesh& mesh) {
  std::vector<std::uint32_t> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& tri : mesh.triangles) {
    parent[find(tri[0])] = find(tri[1]);
    parent[find(tri[1])] = find(tri[2]);
  }
  std::vector<double> area(mesh.vertices.size(), 0.0);
  for (const auto& tri : mesh.triangles) {
    const Vec3& a = mesh.vertices[tri[0]];
    area[find(tri[0])] += 0.5 * (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a).norm();
  }
  std::vector<double> out;
  for (double a : area) if (a > 0.0) out.push_back(a);
  std::sort(out.rbegin(), out.rend());
  return out;
}

Outcome criterion_noisy_sphere() {
  Outcome out;
  auto cloud = kt::sphere_cloud(20000, 411, 1.0);
  std::mt19937_64 rng(412);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto& p : cloud.positions) p += Vec3(noise(rng), noise(rng), noise(rng));
  auto cfg = sphere_config();
  cfg.extraction.mask_mode = MaskMode::distance;
  const auto rec = reconstruct(cloud, cfg);
  const auto gt = sphere_truth(100000);
  const auto pred = sample_mesh(rec.mesh, 500000, 413);
  const auto m = evaluate_clouds(gt, pred, 0.01);
  out.check(m.chamfer.chamfer < 1.5 * 0.04, fmt::format("d_C {:.5f} < 0.06", m.chamfer.chamfer));
  const auto areas = component_areas(rec.mesh);
  const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
  const double spurious = areas.size() > 1 ? areas[1] / total : 0.0;
  out.check(spurious <= 0.05,
            fmt::format("{} components, largest spurious {:.2f}% of area", areas.size(), 100.0 * spurious));
  return out;
}

Outcome criterion_outliers() {
  Outcome out;
  const auto clean = kt::sphere_cloud(20000, 421, 1.0);
  auto noisy = clean;
  noisy.weights.assign(clean.size(), 1.0);
  std::mt19937_64 rng(422);
  std::uniform_real_distribution<double> box(-1.5, 1.5);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t outliers = clean.size() * 3 / 10;
  for (std::size_t i = 0; i < outliers; ++i) {
    noisy.positions.emplace_back(box(rng), box(rng), box(rng));
    noisy.normals.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
    noisy.weights.push_back(0.0);
  }
  auto cfg = sphere_config();
  cfg.extraction.mask_mode = MaskMode::distance;
  const auto gt = sphere_truth(100000);
  auto dc = [&](const TriangleMesh& mesh) {
    return evaluate_clouds(gt, sample_mesh(mesh, 500000, 423), 0.01).chamfer.chamfer;
  };
  const auto base = reconstruct(clean, cfg);
  const auto robust = reconstruct(noisy, cfg);
  const double d0 = dc(base.mesh), d1 = dc(robust.mesh);
  out.check(std::abs(d1 - d0) <= 0.1 * d0, fmt::format("d_C clean {:.5f} weighted {:.5f}", d0, d1));

  auto ones = clean;
  ones.weights.assign(clean.size(), 1.0);
  const auto unit = reconstruct(ones, cfg);
  const bool same = (unit.field.fit.alpha.array() == base.field.fit.alpha.array()).all() &&
                    unit.mesh.vertices == base.mesh.vertices && unit.mesh.triangles == base.mesh.triangles;
  out.check(same, "unit weights bitwise identical");
  return out;
}

// ---------------------------------------------------------------- 5

Outcome criterion_metrics() {
  Outcome out;
  std::mt19937_64 rng(501);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  auto random_cloud = [&](std::size_t n) {
    OrientedPointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
      c.positions.emplace_back(u(rng), u(rng), u(rng));
      c.normals.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
    }
    return c;
  };
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const auto a = random_cloud(1500 + 100 * static_cast<std::size_t>(t));
    const auto b = random_cloud(2000 - 100 * static_cast<std::size_t>(t));
    const double xi = 0.05 + 0.02 * t;
    double comp = 0.0, acc = 0.0, nc_a = 0.0, nc_b = 0.0;
    std::size_t recall = 0, precision = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::size_t j = 0;
      const double d = kt::brute_nearest(b.positions, a.positions[i], &j);
      comp += d;
      recall += d < xi ? 1 : 0;
      nc_a += std::abs(a.normals[i].dot(b.normals[j]));
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      std::size_t j = 0;
      const double d = kt::brute_nearest(a.positions, b.positions[i], &j);
      acc += d;
      precision += d < xi ? 1 : 0;
      nc_b += std::abs(b.normals[i].dot(a.normals[j]));
    }
    comp /= static_cast<double>(a.size());
    acc /= static_cast<double>(b.size());
    const double P = 100.0 * static_cast<double>(precision) / static_cast<double>(b.size());
    const double R = 100.0 * static_cast<double>(recall) / static_cast<double>(a.size());
    const double F = P + R > 0 ? 2 * P * R / (P + R) : 0.0;
    const double NC = 0.5 * (nc_a / static_cast<double>(a.size()) + nc_b / static_cast<double>(b.size()));
    const auto m = evaluate_clouds(a, b, xi);
    worst = std::max({worst, std::abs(m.chamfer.chamfer - 0.5 * (comp + acc)), std::abs(m.fscore.precision - P),
                      std::abs(m.fscore.recall - R), std::abs(m.fscore.fscore - F),
                      std::abs(m.normal_consistency - NC)});
  }
  out.check(worst <= 1e-12, fmt::format("vs brute force {:.1e}", worst));
  const auto c = random_cloud(2000);
  const auto self = evaluate_clouds(c, c, 0.01);
  out.check(self.chamfer.chamfer == 0.0 && self.fscore.fscore == 100.0 && self.normal_consistency == 1.0,
            fmt::format("identity d_C {} F {} NC {}", self.chamfer.chamfer, self.fscore.fscore,
                        self.normal_consistency));
  return out;
}

// ---------------------------------------------------------------- 6

Outcome criterion_outofcore() {
  Outcome out;
  const auto cloud = kt::plane_box_scene(60000, 601, 2.0);
  PipelineConfig cfg;
  cfg.hierarchy = hconfig(0.02, 3, 2);
  cfg.extraction.mask_mode = MaskMode::distance;
  const double snap = cfg.hierarchy.voxel_size * 4;
  const auto layout = plan_chunks(cloud, 1.04, 0.3, snap);
  out.check(layout.chunks.size() == 4, fmt::format("{} chunks", layout.chunks.size()));

  const auto t0 = Clock::now();
  const auto large = reconstruct_large(cloud, cfg, layout);
  const double t = seconds_since(t0);
  const auto mono = fit_field(cloud, cfg);

  // Probes near the surface where at least two chunks cover with full mask.
  std::mt19937_64 rng(602);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  double worst = 0.0;
  int probes = 0, attempts = 0;
  while (probes < 1000 && attempts < 1000000) {
    ++attempts;
    const Vec3 x = cloud.positions[pick(rng)] + Vec3(u(rng), u(rng), u(rng));
    int full = 0;
    for (const auto& f : large.fields) full += f.mask(x) >= 1.0 ? 1 : 0;
    if (full < 2) continue;
    ++probes;
    worst = std::max(worst, std::abs(merged_field(large.fields, x) - eval_field(*mono.model, mono.fit, x)));
  }
  out.check(probes == 1000, fmt::format("{} probes", probes));
  out.check(worst < 1e-3, fmt::format("merged vs monolithic {:.2e}", worst));

  // Cracks: open edges away from the outer rim of the scene.
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (const auto& tri : large.mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t a = tri[k], b = tri[(k + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::size_t interior_open = 0, nonmanifold = 0;
  for (const auto& [e, c] : edges) {
    nonmanifold += c > 2 ? 1 : 0;
    if (c != 1) continue;
    const Vec3 mid = 0.5 * (large.mesh.vertices[e.first] + large.mesh.vertices[e.second]);
    const double rim = std::min({mid.x(), mid.y(), 2.0 - mid.x(), 2.0 - mid.y()});
    interior_open += rim > 0.1 ? 1 : 0;
  }
  out.check(interior_open == 0 && nonmanifold == 0,
            fmt::format("interior open edges {} nonmanifold {}", interior_open, nonmanifold));
  out.check(t < 120.0, fmt::format("{:.1f}s < 120s", t));
  return out;
}

// ---------------------------------------------------------------- 8

Outcome criterion_color() {
  Outcome out;
  auto cloud = kt::sphere_cloud(20000, 801, 1.0);
  for (const auto& p : cloud.positions) {
    cloud.colors.push_back(p.z() < -1.0 / 3 ? Vec3(1, 0, 0) : p.z() < 1.0 / 3 ? Vec3(0, 1, 0) : Vec3(0, 0, 1));
  }
  auto cfg = sphere_config();
  cfg.extraction.color = true;
  const auto fit = fit_field(cloud, cfg);
  double err = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      err += std::abs(eval_expansion(*fit.model, fit.color->gamma[static_cast<std::size_t>(c)], cloud.positions[i]) -
                      cloud.colors[i][c]);
    }
  }
  err /= 3.0 * static_cast<double>(cloud.size());
  out.check(err < 0.05, fmt::format("mean abs channel error {:.4f} < 0.05", err));
  return out;
}

// ---------------------------------------------------------------- 9

Outcome criterion_losses() {
  Outcome out;
  auto dense = kt::sphere_cloud(50000, 901, 1.0);
  for (const auto& p : dense.positions) dense.sensor_origins.push_back(3.0 * p);
  const DenseReference ref(dense, 0.05);
  const auto cloud = kt::sphere_cloud(5000, 902, 1.0);
  auto hier = std::make_shared<const VoxelHierarchy>(build_from_input(cloud, hconfig(0.1, 3, 2)));
  const auto model = KernelModel::constant(hier);
  FitResult zero;
  zero.alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hier->voxel_count()));
  LossConfig lc;
  lc.seed = 903;
  const auto r = loss_report(model, zero, ref, lc);
  const double expected_min_surf = 1.0 / (0.5 * std::numbers::pi);
  out.check(r.surf == 0.0, fmt::format("L_surf {}", r.surf));
  out.check(r.outside && *r.outside == 1.0, fmt::format("L_outside {}", r.outside ? *r.outside : -1.0));
  out.check(std::abs(r.min_surf - expected_min_surf) <= 1e-9,
            fmt::format("L_min-surf err {:.1e}", std::abs(r.min_surf - expected_min_surf)));

  const auto fit = solve(model, cloud, SolveConfig{});
  const auto a = loss_report(model, fit, ref, lc);
  const auto b = loss_report(model, fit, ref, lc);
  out.check(a.to_json() == b.to_json(), "seeded reports identical");
  return out;
}

// ---------------------------------------------------------------- 10

Outcome criterion_large() {
  Outcome out;
  const double extent = 64.0;
  const auto cloud = kt::terrain_scene(2000000, 1001, extent);
  PipelineConfig cfg;
  apply_preset("carla", cfg);
  // L = 4 stalls Jacobi PCG above the 1e-5 tolerance on these chunks, and
  // chunks holding box corners need more than the default 2000 iterations.
  cfg.hierarchy.levels = 3;
  cfg.solve.max_iterations = 4000;
  cfg.extraction.mask_mode = MaskMode::distance;
  const double snap = std::ldexp(cfg.hierarchy.voxel_size, cfg.hierarchy.levels - 1);
  const auto layout = plan_chunks(cloud, 2.0, 6.0 * cfg.hierarchy.voxel_size, snap);
  SystemFootprint::reset_peak();
  const auto t0 = Clock::now();
  const auto large = reconstruct_large(cloud, cfg, layout);
  const double t = seconds_since(t0);
  out.check(large.failed_chunks.empty(),
            fmt::format("{} chunks, {} failed", layout.chunks.size(), large.failed_chunks.size()));
  out.check(large.footprint.peak_unknowns <= large.max_chunk_unknowns,
            fmt::format("peak unknowns {} <= largest chunk {}", large.footprint.peak_unknowns,
                        large.max_chunk_unknowns));
  out.check(!large.mesh.empty(), fmt::format("{} triangles", large.mesh.triangles.size()));
  out.check(t < 600.0, fmt::format("{:.0f}s < 600s", t));
  return out;
}

}  // namespace
}  // namespace kernelsurf

int main(int argc, char** argv) {
  using namespace kernelsurf;
  logger().set_level(spdlog::level::warn);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"kernel and gradients", criterion_kernel},
      {"normal system SPD and CG", criterion_spd},
      {"noiseless sphere", criterion_sphere},
      {"noisy sphere", criterion_noisy_sphere},
      {"metrics", criterion_metrics},
      {"out-of-core consistency", criterion_outofcore},
      {"outlier weights", criterion_outliers},
      {"color", criterion_color},
      {"losses", criterion_losses},
      {"large scene", criterion_large},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int errors = 0, failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = Clock::now();
    try {
      const Outcome o = criteria[i].second();
      failures += o.pass ? 0 : 1;
      std::printf("criterion %2d %-26s %s  (%s) [%.1fs]\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL",
                  o.detail.c_str(), seconds_since(t0));
    } catch (const std::exception& e) {
      ++errors;
      std::printf("criterion %2d %-26s FAIL  (error: %s)\n", id, criteria[i].first, e.what());
    }
    std::fflush(stdout);
  }
  std::printf("%d failed, %d errors\n", failures, errors);
  return errors == 0 ? 0 : 1;
}
