#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "kernelsurf/cli.hpp"
#include "kernelsurf/io.hpp"
#include "kernelsurf/model_io.hpp"
#include "support.hpp"

namespace kernelsurf {
namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "kernelsurf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string error_code(const Run& r) { return nlohmann::json::parse(r.err).at("code").get<std::string>(); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    save_point_cloud(testing::sphere_cloud(6000, 1, 0.5), dir_ / "sphere.ply");
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::filesystem::path dir_;
};

TEST_F(CliTest, ReconstructEvaluateDiagnose) {
  const auto rec = run({"reconstruct", "--input", path("sphere.ply"), "--output", path("mesh.ply"), "--voxel-size",
                        "0.05", "--levels", "3", "--adaptive-depth", "2", "--dump-matrices", path("dump")});
  ASSERT_EQ(rec.code, 0) << rec.err;
  const auto report = nlohmann::json::parse(rec.out);
  EXPECT_TRUE(report.at("solver").at("converged").get<bool>());
  EXPECT_GT(report.at("triangles").get<std::size_t>(), 1000u);
  EXPECT_TRUE(std::filesystem::exists(path("dump/G.txt")));
  EXPECT_TRUE(std::filesystem::exists(path("dump/Q.txt")));
  EXPECT_TRUE(std::filesystem::exists(path("dump/hierarchy.txt")));

  const auto same = run({"evaluate", "--gt", path("mesh.ply"), "--pred", path("mesh.ply"), "--samples", "5000"});
  ASSERT_EQ(same.code, 0) << same.err;
  const auto self = nlohmann::json::parse(same.out);
  EXPECT_EQ(self.at("chamfer").at("dc").get<double>(), 0.0);
  EXPECT_EQ(self.at("fscore").at("f").get<double>(), 100.0);
  EXPECT_EQ(self.at("fscore").at("xi").get<double>(), 0.01);

  const auto eval = run({"evaluate", "--gt", path("sphere.ply"), "--pred", path("mesh.ply"), "--samples", "20000",
                         "--xi", "0.05"});
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_GT(nlohmann::json::parse(eval.out).at("fscore").at("f").get<double>(), 95.0);

  // Byte-identical output on a rerun.
  const auto bytes = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  };
  const auto first = bytes(path("mesh.ply"));
  ASSERT_EQ(run({"reconstruct", "--input", path("sphere.ply"), "--output", path("mesh.ply"), "--voxel-size", "0.05",
                 "--levels", "3", "--adaptive-depth", "2"})
                .code,
            0);
  EXPECT_EQ(bytes(path("mesh.ply")), first);

  const auto diag = run({"diagnose", "--input", path("sphere.ply"), "--voxel-size", "0.05", "--levels", "3",
                         "--adaptive-depth", "2", "--seed", "3"});
  ASSERT_EQ(diag.code, 0) << diag.err;
  const auto loss = nlohmann::json::parse(diag.out);
  EXPECT_TRUE(loss.at("outside").is_null());
  EXPECT_LT(loss.at("normal").get<double>(), 0.05);
}

TEST_F(CliTest, ConfigFileAndPreset) {
  {
    std::ofstream cfg(path("run.ini"));
    cfg << "voxel-size = 0.05\nlevels = 3\nadaptive-depth = 2\nmask = distance\n";
  }
  const auto r = run({"reconstruct", "--config", path("run.ini"), "--input", path("sphere.ply"), "--output",
                      path("m.obj")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(load_mesh(path("m.obj")).triangles.size(), 1000u);
  const auto bad = run({"reconstruct", "--preset", "nope", "--input", path("sphere.ply"), "--output", path("x.ply")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(error_code(bad), "InvalidConfig");
}

TEST_F(CliTest, LargeRunAndResume) {
  const std::vector<std::string> args = {"reconstruct-large", "--input", path("sphere.ply"), "--output",
                                         path("large.ply"), "--voxel-size", "0.05", "--levels", "3",
                                         "--adaptive-depth", "2", "--chunk-size", "0.8", "--overlap", "0.3",
                                         "--chunk-dir", path("chunks")};
  const auto first = run(args);
  ASSERT_EQ(first.code, 0) << first.err;
  const auto report = nlohmann::json::parse(first.out);
  EXPECT_GT(report.at("chunks").get<std::size_t>(), 1u);
  EXPECT_LE(report.at("peak_system_unknowns").get<std::size_t>(), report.at("max_chunk_unknowns").get<std::size_t>());
  EXPECT_TRUE(std::filesystem::exists(path("chunks/chunk_0.hier")));
  EXPECT_TRUE(std::filesystem::exists(path("chunks/chunk_0.alpha")));
  const auto mesh = load_mesh(path("large.ply"));
  const auto second = run(args);
  ASSERT_EQ(second.code, 0) << second.err;
  EXPECT_EQ(nlohmann::json::parse(second.out).at("peak_system_unknowns").get<std::size_t>(), 0u);
  const auto again = load_mesh(path("large.ply"));
  EXPECT_EQ(again.vertices, mesh.vertices);
  EXPECT_EQ(again.triangles, mesh.triangles);
}

TEST_F(CliTest, ConstantModelFileMatchesDefault) {
  HierarchyConfig hc;
  hc.voxel_size = 0.05;
  hc.levels = 3;
  hc.adaptive_depth = 2;
  const auto hier = std::make_shared<const VoxelHierarchy>(VoxelHierarchy::from_keys(hc, {VoxelKey{1, {0, 0, 0}}}));
  save_model(KernelModel::constant(hier, 4), path("const.ksrm"));
  const std::vector<std::string> base = {"reconstruct", "--input", path("sphere.ply"), "--voxel-size", "0.05",
                                         "--levels", "3", "--adaptive-depth", "2"};
  auto with_model = base;
  with_model.insert(with_model.end(), {"--output", path("a.obj"), "--model", path("const.ksrm")});
  auto without = base;
  without.insert(without.end(), {"--output", path("b.obj")});
  ASSERT_EQ(run(with_model).code, 0);
  ASSERT_EQ(run(without).code, 0);
  const auto a = load_mesh(path("a.obj")), b = load_mesh(path("b.obj"));
  EXPECT_EQ(a.triangles, b.triangles);
  EXPECT_EQ(a.vertices, b.vertices);

  std::string bytes;
  {
    std::ifstream is(path("const.ksrm"), std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }
  {
    std::ofstream os(path("short.ksrm"), std::ios::binary);
    os << bytes.substr(0, 10);
  }
  auto truncated = base;
  truncated.insert(truncated.end(), {"--output", path("c.obj"), "--model", path("short.ksrm")});
  EXPECT_EQ(error_code(run(truncated)), "FormatError");
  auto deeper = base;
  deeper[6] = "4";
  deeper.insert(deeper.end(), {"--output", path("d.obj"), "--model", path("const.ksrm")});
  EXPECT_EQ(error_code(run(deeper)), "DimensionMismatch");
}

TEST_F(CliTest, Errors) {
  const auto missing = run({"reconstruct", "--input", path("nope.ply"), "--output", path("m.ply")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(error_code(missing), "IoError");

  const auto zero = run({"reconstruct", "--input", path("sphere.ply"), "--output", path("m.ply"), "--voxel-size", "0"});
  EXPECT_EQ(zero.code, 1);
  EXPECT_EQ(error_code(zero), "InvalidConfig");

  EXPECT_EQ(error_code(run({"reconstruct", "--bogus"})), "InvalidConfig");
  EXPECT_EQ(error_code(run({})), "InvalidConfig");

  {
    std::ofstream os(path("broken.obj"));
    os << "v 0 0 0\nv 1 0 0\nf 1 2 x\n";
  }
  const auto malformed = run({"evaluate", "--gt", path("sphere.ply"), "--pred", path("broken.obj")});
  EXPECT_EQ(malformed.code, 1);
  EXPECT_EQ(error_code(malformed), "ParseError");

  EXPECT_EQ(run({"--help"}).code, 0);
}

}  // namespace
}  // namespace kernelsurf
