#include "kernelsurf/cli.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include "kernelsurf/diagnostics.hpp"
#include "kernelsurf/error.hpp"
#include "kernelsurf/io.hpp"
#include "kernelsurf/log.hpp"
#include "kernelsurf/metrics.hpp"
#include "kernelsurf/normals.hpp"
#include "kernelsurf/outofcore.hpp"
#include "kernelsurf/pipeline.hpp"

namespace kernelsurf {
namespace {

struct Options {
  std::string input;
  std::string output;
  std::optional<std::string> preset;
  std::optional<double> voxel_size;
  std::optional<int> levels;
  std::optional<int> adaptive_depth;
  std::optional<int> feature_dim;
  std::optional<std::string> model;
  std::string mask = "none";
  std::optional<double> mask_tau;
  double tolerance = 1e-5;
  int max_iters = 2000;
  std::optional<double> chunk_size;
  std::optional<double> overlap;
  std::optional<std::string> chunk_dir;
  bool color = false;
  int threads = 0;
  std::uint64_t seed = 0;
  std::optional<int> estimate_normals;
  std::optional<std::string> dump_matrices;
  // evaluate / diagnose
  std::string gt;
  std::string pred;
  double xi = 0.01;
  std::size_t samples = 100000;
  std::string reference;
  std::optional<double> epsilon;
};

PipelineConfig make_config(const Options& o) {
  PipelineConfig cfg;
  if (o.preset && !apply_preset(*o.preset, cfg)) {
    throw Error(ErrorCode::InvalidConfig, "unknown preset '" + *o.preset + "'");
  }
  if (o.voxel_size) cfg.hierarchy.voxel_size = *o.voxel_size;
  if (o.levels) cfg.hierarchy.levels = *o.levels;
  if (o.adaptive_depth) cfg.hierarchy.adaptive_depth = *o.adaptive_depth;
  if (o.feature_dim) cfg.feature_dim = *o.feature_dim;
  if (o.model) cfg.model_path = *o.model;
  if (o.mask == "none") {
    cfg.extraction.mask_mode = MaskMode::none;
  } else if (o.mask == "distance") {
    cfg.extraction.mask_mode = MaskMode::distance;
  } else {
    throw Error(ErrorCode::InvalidConfig, "mask must be 'none' or 'distance'");
  }
  if (o.mask_tau) cfg.extraction.mask_tau = *o.mask_tau;
  cfg.extraction.color = o.color;
  cfg.solve.tolerance = o.tolerance;
  cfg.solve.max_iterations = o.max_iters;
  if (o.estimate_normals) {
    if (*o.estimate_normals < 3) throw Error(ErrorCode::InvalidConfig, "--estimate-normals needs K >= 3");
    cfg.normal_neighbors = static_cast<std::size_t>(*o.estimate_normals);
  }
  cfg.hierarchy.validate();
  cfg.solve.validate();
  if (cfg.extraction.mask_mode == MaskMode::distance && !(cfg.extraction.mask_tau > 0.0)) {
    cfg.extraction.mask_tau = 2.0 * cfg.hierarchy.voxel_size;
  }
  cfg.extraction.validate();
  return cfg;
}

OrientedPointCloud load_input(const Options& o) {
  if (o.input.empty()) throw Error(ErrorCode::InvalidConfig, "--input is required");
  auto cloud = load_point_cloud(o.input);
  if (o.estimate_normals) {
    // Explicit request: replace whatever normals the file carried.
    cloud.normals.clear();
    cloud = estimate_normals(cloud, static_cast<std::size_t>(*o.estimate_normals)).cloud;
  }
  return cloud;
}

void require_output(const Options& o) {
  if (o.output.empty()) throw Error(ErrorCode::InvalidConfig, "--output is required");
}

nlohmann::json stats_json(const SolverStats& s) {
  return {{"iterations", s.iterations},
          {"final_residual", s.final_residual},
          {"converged", s.converged},
          {"empty_rows", s.empty_rows},
          {"zero_diagonals", s.zero_diagonals}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void dump_matrices(const FittedField& field, const OrientedPointCloud& cloud, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&dir](const SparseMatrix& m, const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + (dir / name).string());
    m.write_triplets(os);
  };
  write(assemble_G(*field.model, cloud), "G.txt");
  write(assemble_Q(*field.model), "Q.txt");
  field.hierarchy->dump(dir / "hierarchy.txt");
}

int cmd_reconstruct(const Options& o, std::ostream& out) {
  require_output(o);
  const auto cfg = make_config(o);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cloud = load_input(o);
  auto result = reconstruct(cloud, cfg);
  save_mesh(result.mesh, o.output);
  if (o.dump_matrices) {
    OrientedPointCloud used = cloud;
    if (!used.has_normals()) used = estimate_normals(cloud, cfg.normal_neighbors).cloud;
    dump_matrices(result.field, used, *o.dump_matrices);
  }
  nlohmann::json report;
  report["points"] = cloud.size();
  report["voxels"] = result.field.hierarchy->voxel_count();
  report["solver"] = stats_json(result.field.fit.stats);
  report["vertices"] = result.mesh.vertices.size();
  report["triangles"] = result.mesh.triangles.size();
  report["seconds"] = seconds_since(t0);
  out << report.dump() << "\n";
  return 0;
}

int cmd_reconstruct_large(const Options& o, std::ostream& out) {
  require_output(o);
  const auto cfg = make_config(o);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cloud = load_input(o);
  const double W = cfg.hierarchy.voxel_size;
  const double chunk = o.chunk_size.value_or(51.2);
  const double overlap = o.overlap.value_or(6.0 * W);
  const auto layout = plan_chunks(cloud, chunk, overlap, std::ldexp(W, cfg.hierarchy.levels - 1));
  std::optional<std::filesystem::path> dir;
  if (o.chunk_dir) dir = *o.chunk_dir;
  const auto result = reconstruct_large(cloud, cfg, layout, dir);
  save_mesh(result.mesh, o.output);
  nlohmann::json report;
  report["points"] = cloud.size();
  report["chunks"] = layout.chunks.size();
  report["failed_chunks"] = result.failed_chunks;
  report["max_chunk_unknowns"] = result.max_chunk_unknowns;
  report["peak_system_unknowns"] = result.footprint.peak_unknowns;
  report["peak_system_bytes"] = result.footprint.peak_bytes;
  report["vertices"] = result.mesh.vertices.size();
  report["triangles"] = result.mesh.triangles.size();
  report["seconds"] = seconds_since(t0);
  out << report.dump() << "\n";
  return 0;
}

// Meshes are sampled; files without faces are taken as point sets.
OrientedPointCloud load_samples(const std::string& path, std::size_t count, std::uint64_t seed, bool require_mesh) {
  const std::filesystem::path p(path);
  const auto ext = p.extension().string();
  if (ext == ".obj" || ext == ".ply") {
    const auto mesh = load_mesh(p);
    if (!mesh.triangles.empty()) return sample_mesh(mesh, count, seed);
    if (require_mesh) throw Error(ErrorCode::EmptyMesh, path + " has no triangles");
  } else if (require_mesh) {
    throw Error(ErrorCode::FormatError, path + " is not a mesh file");
  }
  return load_point_cloud(p);
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.gt.empty() || o.pred.empty()) throw Error(ErrorCode::InvalidConfig, "--gt and --pred are required");
  const auto gt = load_samples(o.gt, o.samples, o.seed, false);
  // Same seed for both sides, so a mesh evaluated against itself scores exactly.
  const auto pred = load_samples(o.pred, o.samples, o.seed, true);
  out << evaluate_clouds(gt, pred, o.xi, o.seed).to_json() << "\n";
  return 0;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
  const auto cfg = make_config(o);
  const auto cloud = load_input(o);
  const auto field = fit_field(cloud, cfg);
  OrientedPointCloud dense = o.reference.empty() ? cloud : load_point_cloud(o.reference);
  if (!dense.has_normals() && dense.size() > cfg.normal_neighbors) {
    dense = estimate_normals(dense, cfg.normal_neighbors).cloud;
  }
  const DenseReference ref(std::move(dense), o.epsilon.value_or(cfg.hierarchy.voxel_size));
  LossConfig loss;
  loss.seed = o.seed;
  out << loss_report(*field.model, field.fit, ref, loss).to_json() << "\n";
  return 0;
}

void report_error(std::ostream& err, std::string_view code, const std::string& message) {
  err << nlohmann::json{{"code", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"kernelsurf: surface reconstruction from oriented point clouds", "kernelsurf"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key = value file; command line flags take precedence");

  app.add_option("--input", o.input, "input point cloud (.xyz or .ply)");
  app.add_option("--output", o.output, "output mesh (.obj or .ply)");
  app.add_option("--preset", o.preset, "shapenet, abc, room or carla");
  app.add_option("--voxel-size", o.voxel_size, "finest voxel width W");
  app.add_option("--levels", o.levels, "number of hierarchy levels L");
  app.add_option("--adaptive-depth", o.adaptive_depth, "adaptive depth L'");
  app.add_option("--feature-dim", o.feature_dim, "constant feature width d");
  app.add_option("--model", o.model, "kernel model file");
  app.add_option("--mask", o.mask, "none or distance");
  app.add_option("--mask-tau", o.mask_tau, "distance mask radius (default 2W)");
  app.add_option("--tolerance", o.tolerance, "relative residual tolerance");
  app.add_option("--max-iters", o.max_iters, "conjugate gradient iteration cap");
  app.add_option("--chunk-size", o.chunk_size, "chunk edge length (default 51.2)");
  app.add_option("--overlap", o.overlap, "chunk overlap (default 6W)");
  app.add_option("--chunk-dir", o.chunk_dir, "directory for per-chunk results, reused on rerun");
  app.add_flag("--color", o.color, "fit and write per-vertex colors");
  app.add_option("--threads", o.threads, "worker threads (default: all cores)");
  app.add_option("--seed", o.seed, "sampling seed");
  app.add_option("--estimate-normals", o.estimate_normals, "estimate normals from K neighbors");
  app.add_option("--dump-matrices", o.dump_matrices, "write G, Q and the hierarchy as text");
  app.add_option("--gt", o.gt, "ground truth mesh or point cloud");
  app.add_option("--pred", o.pred, "predicted mesh");
  app.add_option("--xi", o.xi, "F-score threshold");
  app.add_option("--samples", o.samples, "samples per mesh");
  app.add_option("--reference", o.reference, "dense reference cloud (default: the input)");
  app.add_option("--epsilon", o.epsilon, "near-surface band radius (default W)");

  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "fit and extract one mesh");
  auto* large_cmd = app.add_subcommand("reconstruct-large", "chunked reconstruction for large inputs");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Chamfer distance, F-score and normal consistency");
  auto* diagnose_cmd = app.add_subcommand("diagnose", "loss diagnostics of a fitted field");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, to_string(ErrorCode::InvalidConfig), e.what());
    return 1;
  }

  try {
    if (o.threads > 0) omp_set_num_threads(o.threads);
    if (reconstruct_cmd->parsed()) return cmd_reconstruct(o, out);
    if (large_cmd->parsed()) return cmd_reconstruct_large(o, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(o, out);
    if (diagnose_cmd->parsed()) return cmd_diagnose(o, out);
  } catch (const Error& e) {
    report_error(err, to_string(e.code()), e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, to_string(ErrorCode::IoError), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, "InternalError", e.what());
    return 1;
  }
  return 1;
}

}  // namespace kernelsurf
