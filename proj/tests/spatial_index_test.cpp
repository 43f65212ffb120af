#include <algorithm>

#include <gtest/gtest.h>

#include "kernelsurf/spatial_index.hpp"
#include "support.hpp"

namespace kernelsurf {
namespace {

std::vector<Vec3> random_box(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(u(rng), u(rng), u(rng));
  return out;
}

TEST(PointGrid, NearestMatchesBruteForce) {
  for (const auto& pts : {random_box(1500, 1), testing::random_sphere(1500, 2)}) {
    const PointGrid grid(pts);
    const auto probes = random_box(500, 3);
    for (const auto& q : probes) {
      std::size_t idx = 0;
      const double d = testing::brute_nearest(pts, q, &idx);
      const auto nn = grid.nearest(q);
      EXPECT_EQ(nn.distance, d);
    }
    // Far away probes take the full-scan path.
    const auto far = grid.nearest(Vec3(40, -30, 10));
    EXPECT_EQ(far.distance, testing::brute_nearest(pts, Vec3(40, -30, 10)));
  }
}

TEST(PointGrid, TiesResolveToSmallestIndex) {
  const std::vector<Vec3> pts = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(1, 0, 0)};
  const PointGrid grid(pts);
  EXPECT_EQ(grid.nearest(Vec3(0.9, 0, 0)).index, 0u);
  EXPECT_EQ(grid.nearest(Vec3(0, 0, 0)).index, 0u);
}

TEST(PointGrid, KNearestMatchesSortedBruteForce) {
  const auto pts = random_box(800, 5);
  const PointGrid grid(pts);
  for (const auto& q : random_box(50, 6)) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < pts.size(); ++i) all.emplace_back((q - pts[i]).norm(), i);
    std::sort(all.begin(), all.end());
    const auto knn = grid.knearest(q, 12);
    ASSERT_EQ(knn.size(), 12u);
    for (std::size_t k = 0; k < 12; ++k) {
      EXPECT_EQ(knn[k].index, all[k].second);
      EXPECT_EQ(knn[k].distance, all[k].first);
    }
  }
  EXPECT_EQ(grid.knearest(Vec3::Zero(), 5000).size(), pts.size());
}

TEST(PointGrid, WithinIsClosedBall) {
  const auto pts = random_box(1000, 7);
  const PointGrid grid(pts);
  for (const auto& q : random_box(30, 8)) {
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if ((q - pts[i]).norm() <= 0.3) expect.push_back(i);
    }
    EXPECT_EQ(grid.within(q, 0.3), expect);
  }
  const std::vector<Vec3> one = {Vec3(0, 0, 0)};
  const PointGrid g1(one);
  EXPECT_TRUE(g1.any_within(Vec3(0.5, 0, 0), 0.5));
  EXPECT_FALSE(g1.any_within(Vec3(0.5, 0, 0), 0.49));
}

TEST(PointGrid, DegenerateAndEmptySets) {
  const std::vector<Vec3> same(20, Vec3(3, 3, 3));
  const PointGrid grid(same);
  EXPECT_EQ(grid.nearest(Vec3(0, 0, 0)).index, 0u);
  EXPECT_EQ(grid.within(Vec3(3, 3, 3), 0.0).size(), 20u);
  const PointGrid empty(std::vector<Vec3>{});
  EXPECT_TRUE(std::isinf(empty.nearest(Vec3::Zero()).distance));
  EXPECT_TRUE(empty.knearest(Vec3::Zero(), 3).empty());
}

}  // namespace
}  // namespace kernelsurf
