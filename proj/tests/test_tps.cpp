#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "densereg/tps.hpp"

using namespace densereg;

namespace {

std::vector<Vec2> grid4() { return {{0, 0}, {10, 0}, {0, 10}, {10, 10}, {5, 3}}; }

// Independent evaluation of the warp formula.
Vec2 eval_warp(const TpsWarp& w, Vec2 p) {
  Vec2 out{w.affine[0][0] * p.x + w.affine[0][1] * p.y + w.affine[0][2],
           w.affine[1][0] * p.x + w.affine[1][1] * p.y + w.affine[1][2]};
  for (std::size_t i = 0; i < w.control_src.size(); ++i) {
    const double r = std::hypot(p.x - w.control_src[i].x, p.y - w.control_src[i].y);
    const double phi = r > 0 ? r * r * std::log(r) : 0.0;
    out.x += w.kernel_weights[i].x * phi;
    out.y += w.kernel_weights[i].y * phi;
  }
  return out;
}

}  // namespace

TEST(Tps, IdentityWhenDstEqualsSrc) {
  const auto src = grid4();
  const auto w = fit_tps(src, src, 0.0);
  for (const auto& k : w.kernel_weights) {
    EXPECT_NEAR(k.x, 0.0, 1e-12);
    EXPECT_NEAR(k.y, 0.0, 1e-12);
  }
  EXPECT_NEAR(w.affine[0][0], 1.0, 1e-12);
  EXPECT_NEAR(w.affine[0][1], 0.0, 1e-12);
  EXPECT_NEAR(w.affine[0][2], 0.0, 1e-12);
  EXPECT_NEAR(w.affine[1][0], 0.0, 1e-12);
  EXPECT_NEAR(w.affine[1][1], 1.0, 1e-12);
  EXPECT_NEAR(w.affine[1][2], 0.0, 1e-12);
  const std::vector<Vec2> pts{{1.5, 2.5}, {-3, 7}, {20, -4}};
  const auto moved = apply_tps(w, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(moved[i].x, pts[i].x, 1e-9);
    EXPECT_NEAR(moved[i].y, pts[i].y, 1e-9);
  }
}

TEST(Tps, TranslationIsAffine) {
  const auto src = grid4();
  auto dst = src;
  for (auto& p : dst) p.x += 5.0;
  const auto w = fit_tps(src, dst, 0.0);
  for (const auto& k : w.kernel_weights) {
    EXPECT_NEAR(k.x, 0.0, 1e-10);
    EXPECT_NEAR(k.y, 0.0, 1e-10);
  }
  EXPECT_NEAR(w.affine[0][2], 5.0, 1e-10);
  EXPECT_NEAR(w.affine[1][2], 0.0, 1e-10);
  const Vec2 mid{(src[0].x + src[1].x) / 2, (src[0].y + src[1].y) / 2};
  const Vec2 m = w(mid);
  EXPECT_NEAR(m.x, mid.x + 5.0, 1e-9);
  EXPECT_NEAR(m.y, mid.y, 1e-9);
}

TEST(Tps, RandomWarpInterpolatesControls) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0.0, 64.0), jit(-4.0, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec2> src, dst;
    for (int i = 0; i < 8; ++i) {
      src.push_back({pos(rng), pos(rng)});
      dst.push_back({src.back().x + jit(rng), src.back().y + jit(rng)});
    }
    const auto w = fit_tps(src, dst, 0.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Vec2 p = eval_warp(w, src[i]);
      worst = std::max({worst, std::abs(p.x - dst[i].x), std::abs(p.y - dst[i].y)});
      const Vec2 q = w(src[i]);
      EXPECT_NEAR(q.x, p.x, 1e-9);
      EXPECT_NEAR(q.y, p.y, 1e-9);
    }
    EXPECT_LE(worst, 1e-6);
    // Side conditions.
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syx = 0, syy = 0, scale = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto& k = w.kernel_weights[i];
      sx += k.x;
      sy += k.y;
      sxx += k.x * src[i].x;
      sxy += k.x * src[i].y;
      syx += k.y * src[i].x;
      syy += k.y * src[i].y;
      scale = std::max({scale, std::abs(k.x), std::abs(k.y)});
    }
    const double tol = 1e-8 * std::max(1.0, scale * 64.0);
    EXPECT_NEAR(sx, 0.0, tol);
    EXPECT_NEAR(sy, 0.0, tol);
    EXPECT_NEAR(sxx, 0.0, tol);
    EXPECT_NEAR(sxy, 0.0, tol);
    EXPECT_NEAR(syx, 0.0, tol);
    EXPECT_NEAR(syy, 0.0, tol);
  }
}

TEST(Tps, RegularizedWarpSmooths) {
  std::vector<Vec2> src{{0, 0}, {10, 0}, {0, 10}, {10, 10}, {5, 5}};
  auto dst = src;
  dst[4] = {7, 5};
  const auto exact = fit_tps(src, dst, 0.0);
  const auto smooth = fit_tps(src, dst, 10.0);
  EXPECT_NEAR(exact(src[4]).x, 7.0, 1e-9);
  EXPECT_LT(smooth(src[4]).x, 7.0);
  EXPECT_GT(smooth(src[4]).x, 5.0);
}

TEST(Tps, SingularInputsRejected) {
  const std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  try {
    fit_tps(line, line, 0.0);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("singular"), std::string::npos);
  }
  const std::vector<Vec2> dup{{0, 0}, {1, 0}, {0, 1}, {1, 0}};
  try {
    fit_tps(dup, dup, 0.0);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("singular"), std::string::npos);
  }
  EXPECT_THROW(fit_tps(std::vector<Vec2>{{0, 0}, {1, 0}}, std::vector<Vec2>{{0, 0}, {1, 0}}, 0.0), InvalidInput);
  EXPECT_THROW(fit_tps(grid4(), line, 0.0), InvalidInput);
}
