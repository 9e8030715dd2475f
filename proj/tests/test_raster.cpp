#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "densereg/raster.hpp"
#include "raster_oracle.hpp"
#include "support.hpp"

using namespace densereg;
using raster_oracle::brute_force;

namespace {

ProjectedMesh single_triangle(Vec2 a, Vec2 b, Vec2 c, double depth, UvCoord uv, int label = 3) {
  ProjectedMesh pm;
  pm.vertices_2d = {a, b, c};
  pm.vertex_depth = {depth, depth, depth};
  pm.part_labels = {label, label, label};
  pm.triangles = {{0, 1, 2}};
  pm.corner_uv = {{uv, uv, uv}};
  return pm;
}

void append(ProjectedMesh& dst, const ProjectedMesh& src) {
  const std::size_t base = dst.vertices_2d.size();
  dst.vertices_2d.insert(dst.vertices_2d.end(), src.vertices_2d.begin(), src.vertices_2d.end());
  dst.vertex_depth.insert(dst.vertex_depth.end(), src.vertex_depth.begin(), src.vertex_depth.end());
  dst.part_labels.insert(dst.part_labels.end(), src.part_labels.begin(), src.part_labels.end());
  for (auto t : src.triangles) dst.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  dst.corner_uv.insert(dst.corner_uv.end(), src.corner_uv.begin(), src.corner_uv.end());
}

}  // namespace

TEST(Barycentric, Examples) {
  const Tri2 tri{Vec2{0, 0}, Vec2{4, 1}, Vec2{1, 5}};
  const auto w = barycentric(tri, {5.0 / 3.0, 2.0});
  EXPECT_NEAR(w.a, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(w.b, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(w.c, 1.0 / 3.0, 1e-12);
  const auto v = barycentric(tri, tri[0]);
  EXPECT_EQ(v.a, 1.0);
  EXPECT_EQ(v.b, 0.0);
  EXPECT_EQ(v.c, 0.0);
  const auto out = barycentric(Tri2{Vec2{0, 0}, Vec2{1, 0}, Vec2{0, 1}}, {0.5, -0.1});
  EXPECT_LT(out.c, 0.0);
  EXPECT_THROW(barycentric(Tri2{Vec2{0, 0}, Vec2{1, 1}, Vec2{2, 2}}, {0, 0}), InvalidInput);
}

TEST(Barycentric, ReconstructsPoint) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 100; ++i) {
    const Tri2 tri{Vec2{u(rng), u(rng)}, Vec2{u(rng), u(rng)}, Vec2{u(rng), u(rng)}};
    const Vec2 p{u(rng), u(rng)};
    const auto w = barycentric(tri, p);
    EXPECT_NEAR(w.a + w.b + w.c, 1.0, 1e-12);
    EXPECT_NEAR(w.a * tri[0].x + w.b * tri[1].x + w.c * tri[2].x, p.x, 1e-9);
    EXPECT_NEAR(w.a * tri[0].y + w.b * tri[1].y + w.c * tri[2].y, p.y, 1e-9);
  }
}

TEST(Rasterize, ConstantUv) {
  const auto pm = single_triangle({2, 2}, {30, 2}, {2, 30}, 1.0, {0.2, 0.7});
  const auto f = rasterize(pm, 32, 32);
  ASSERT_GT(f.foreground_count(), 0u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f.mask[i]) {
      EXPECT_EQ(f.uh[i], 0.0f);
      EXPECT_EQ(f.uv[i], 0.0f);
      EXPECT_EQ(f.depth[i], 0.0f);
      EXPECT_EQ(f.parts[i], kBackgroundLabel);
      continue;
    }
    EXPECT_FLOAT_EQ(f.uh[i], 0.2f);
    EXPECT_FLOAT_EQ(f.uv[i], 0.7f);
    EXPECT_EQ(f.depth[i], 1.0f);  // constant depth
    EXPECT_EQ(f.parts[i], 3);
  }
}

TEST(Rasterize, NearerTriangleWins) {
  auto pm = single_triangle({0, 0}, {20, 0}, {0, 20}, 0.9, {0.9, 0.9}, 1);
  append(pm, single_triangle({0, 0}, {16, 0}, {0, 16}, 0.1, {0.1, 0.1}, 2));
  const auto f = rasterize(pm, 20, 20);
  const auto i = f.index(3, 3);
  EXPECT_EQ(f.parts[i], 2);
  EXPECT_FLOAT_EQ(f.uh[i], 0.1f);
  EXPECT_EQ(f.depth[i], 1.0f);
  const auto far = f.index(1, 17);
  EXPECT_EQ(f.parts[far], 1);
  EXPECT_EQ(f.depth[far], 0.0f);
}

TEST(Rasterize, DepthTieGoesToLowerIndex) {
  auto pm = single_triangle({0, 0}, {10, 0}, {0, 10}, 0.5, {0.3, 0.3}, 4);
  append(pm, single_triangle({0, 0}, {10, 0}, {0, 10}, 0.5, {0.6, 0.6}, 5));
  const auto r = rasterize_with_buffers(pm, 10, 10);
  for (std::size_t i = 0; i < r.triangle.size(); ++i)
    if (r.triangle[i] >= 0) { EXPECT_EQ(r.triangle[i], 0); }
}

TEST(Rasterize, SharedEdgeCoveredExactlyOnce) {
  // Square split along its diagonal; the diagonal passes through pixel centers.
  ProjectedMesh pm;
  pm.vertices_2d = {{0.5, 0.5}, {8.5, 0.5}, {8.5, 8.5}, {0.5, 8.5}};
  pm.vertex_depth = {0, 0, 0, 0};
  pm.part_labels = {0, 1, 2, 3};
  pm.triangles = {{0, 1, 2}, {0, 2, 3}};
  pm.corner_uv = {{UvCoord{0, 0}, UvCoord{1, 0}, UvCoord{1, 1}}, {UvCoord{0, 0}, UvCoord{1, 1}, UvCoord{0, 1}}};
  const Tri2 t0{pm.vertices_2d[0], pm.vertices_2d[1], pm.vertices_2d[2]};
  const Tri2 t1{pm.vertices_2d[0], pm.vertices_2d[2], pm.vertices_2d[3]};
  for (int row = 0; row < 10; ++row)
    for (int col = 0; col < 10; ++col) {
      const Vec2 p = pixel_center(row, col);
      const bool in_square = row <= 8 && col <= 8;
      const int hits = int(covers(t0, p)) + int(covers(t1, p));
      // Right and bottom borders of the square are not owned; the diagonal is owned once.
      EXPECT_LE(hits, 1) << row << "," << col;
      if (in_square && row < 8 && col < 8) { EXPECT_EQ(hits, 1) << row << "," << col; }
      if (row == 8 || col == 8) { EXPECT_EQ(hits, 0) << row << "," << col; }
    }
}

TEST(Rasterize, OrientationDoesNotMatter) {
  const auto cw = single_triangle({1, 1}, {1, 15}, {15, 1}, 0.0, {0.5, 0.5});
  const auto ccw = single_triangle({1, 1}, {15, 1}, {1, 15}, 0.0, {0.5, 0.5});
  EXPECT_EQ(rasterize(cw, 16, 16), rasterize(ccw, 16, 16));
}

TEST(Rasterize, SeamUvWraps) {
  ProjectedMesh pm = single_triangle({0, 0}, {16, 0}, {0, 16}, 0.0, {0.0, 0.5});
  pm.corner_uv[0] = {UvCoord{0.95, 0.5}, UvCoord{1.05, 0.5}, UvCoord{0.95, 0.5}};
  const auto f = rasterize(pm, 16, 16);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f.mask[i]) {
      EXPECT_GE(f.uh[i], 0.0f);
      EXPECT_LE(f.uh[i], 1.0f);
      EXPECT_TRUE(f.uh[i] >= 0.95f || f.uh[i] <= 0.05f) << f.uh[i];
    }
}

TEST(Rasterize, EmptyCoverageIsValid) {
  const auto pm = single_triangle({-20, -20}, {-10, -20}, {-20, -10}, 0.0, {0.5, 0.5});
  const auto f = rasterize(pm, 8, 8);
  EXPECT_EQ(f.foreground_count(), 0u);
  EXPECT_EQ(f, CorrespondenceField(8, 8));
}

TEST(Rasterize, DepthNormalizationRange) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pm = testing_support::random_projected_mesh(rng, 30, 32);
    const auto f = rasterize(pm, 32, 32);
    if (f.foreground_count() == 0) continue;
    float lo = 2, hi = -1;
    for (std::size_t i = 0; i < f.size(); ++i)
      if (f.mask[i]) {
        lo = std::min(lo, f.depth[i]);
        hi = std::max(hi, f.depth[i]);
      }
    EXPECT_EQ(hi, 1.0f);
    EXPECT_TRUE(lo == 0.0f || lo == 1.0f);
  }
}

TEST(Rasterize, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(1, 100);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pm = testing_support::random_projected_mesh(rng, count(rng), 64);
    const auto got = rasterize_with_buffers(pm, 64, 64);
    const auto want = brute_force(pm, 64, 64);
    EXPECT_EQ(got.triangle, want.winner) << "trial " << trial;
    EXPECT_TRUE(got.field == want.field) << "trial " << trial;
  }
}

TEST(Rasterize, RejectsInconsistentMesh) {
  auto pm = single_triangle({0, 0}, {4, 0}, {0, 4}, 0.0, {0.5, 0.5});
  pm.triangles[0][2] = 7;
  EXPECT_THROW(rasterize(pm, 8, 8), InvalidInput);
  auto nan = single_triangle({0, 0}, {4, 0}, {0, 4}, 0.0, {0.5, 0.5});
  nan.vertex_depth[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(rasterize(nan, 8, 8), InvalidInput);
}
