#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "densereg/app.hpp"
#include "densereg/metrics.hpp"

using namespace densereg;

namespace {

// Direct loop with no shared helpers.
double rms_oracle(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double norm) {
  long double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double dx = a[i].x - b[i].x, dy = a[i].y - b[i].y;
    acc += dx * dx + dy * dy;
  }
  return double(std::sqrt(acc / a.size()) / norm);
}

std::vector<double> random_errors(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 0.15);
  std::vector<double> e(n);
  for (auto& v : e) v = u(rng);
  return e;
}

}  // namespace

TEST(RmsError, Examples) {
  const std::vector<Vec2> gt{{1, 2}, {5, 7}, {9, 3}};
  EXPECT_EQ(rms_point_error(gt, gt, 10.0), 0.0);
  const std::vector<Vec2> a{{3, 4}}, b{{0, 0}};
  EXPECT_EQ(rms_point_error(a, b, 10.0), 0.5);
  EXPECT_THROW(rms_point_error(std::vector<Vec2>{}, std::vector<Vec2>{}, 1.0), InvalidInput);
  EXPECT_THROW(rms_point_error(a, gt, 1.0), InvalidInput);
  EXPECT_THROW(rms_point_error(a, b, 0.0), InvalidInput);
}

TEST(RmsError, MatchesLoopOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 64.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec2> a(68), b(68);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = {u(rng), u(rng)};
      b[i] = {u(rng), u(rng)};
    }
    const double norm = 1.0 + u(rng);
    EXPECT_NEAR(rms_point_error(a, b, norm), rms_oracle(a, b, norm), 1e-12);
  }
}

TEST(Normalizers, Examples) {
  EXPECT_EQ(interocular_distance({0, 0}, {0, 30}), 30.0);
  EXPECT_THROW(interocular_distance({2, 2}, {2, 2}), InvalidInput);
  const std::vector<Vec2> box{{10, 5}, {50, 25}, {30, 10}};
  EXPECT_EQ(bbox_edge_normalizer(box), 30.0);
  const std::vector<Vec2> point{{3, 3}, {3, 3}};
  EXPECT_THROW(bbox_edge_normalizer(point), InvalidInput);
  EXPECT_THROW(bbox_edge_normalizer(std::vector<Vec2>{{1, 1}}), InvalidInput);
}

TEST(Ced, TrivialCurves) {
  const std::vector<double> zeros(7, 0.0), big(7, 0.2);
  const auto s0 = summarize_errors(zeros);
  EXPECT_EQ(s0.auc, 1.0);
  EXPECT_EQ(s0.failure_rate, 0.0);
  const auto s1 = summarize_errors(big);
  EXPECT_EQ(s1.auc, 0.0);
  EXPECT_EQ(s1.failure_rate, 100.0);
  EXPECT_THROW(summarize_errors(std::vector<double>{}), InvalidInput);
  EXPECT_THROW(failure_rate(std::vector<double>{}), InvalidInput);
  EXPECT_THROW(uniform_thresholds(0.0), InvalidInput);
}

TEST(Ced, SingleErrorAreaIsClosedForm) {
  // One image: the curve steps from 0 to 1 at the first threshold t_k >= e,
  // so the trapezoid rule gives (cap - t_k)/cap plus half a cell when k > 0.
  const auto t = uniform_thresholds();
  const double h = t[1] - t[0];
  for (double e : {0.0, 0.025, 0.05, 0.0333, 0.09}) {
    const std::vector<double> v{e};
    const std::size_t k = std::size_t(std::lower_bound(t.begin(), t.end(), e) - t.begin());
    const double expected = (0.1 - t[k] + (k > 0 ? 0.5 * h : 0.0)) / 0.1;
    EXPECT_NEAR(summarize_errors(v).auc, expected, 1e-9) << e;
  }
  const std::vector<double> at_cap{0.1};
  EXPECT_EQ(failure_rate(at_cap), 0.0);
}

TEST(Ced, MonotoneOnRandomVectors) {
  std::mt19937_64 rng(8);
  const auto t = uniform_thresholds();
  ASSERT_EQ(t.size(), 1001u);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto e = random_errors(rng, 1 + trial % 50);
    const auto c = ced(e, t);
    ASSERT_EQ(c.fractions.size(), t.size());
    for (std::size_t i = 1; i < c.fractions.size(); ++i) ASSERT_LE(c.fractions[i - 1], c.fractions[i]);
    ASSERT_GE(c.fractions.front(), 0.0);
    ASSERT_LE(c.fractions.back(), 1.0);
    const double a = auc(c);
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
    const double f = failure_rate(e);
    ASSERT_GE(f, 0.0);
    ASSERT_LE(f, 100.0);
  }
}

TEST(Ced, AucAntitoneInErrors) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> bump(0.0, 0.05);
  for (int trial = 0; trial < 200; ++trial) {
    auto e = random_errors(rng, 20);
    const auto before = summarize_errors(e);
    e[std::size_t(trial) % e.size()] += bump(rng);
    const auto after = summarize_errors(e);
    EXPECT_LE(after.auc, before.auc);
    EXPECT_GE(after.failure_rate, before.failure_rate);
  }
}

TEST(Iou, Examples) {
  const std::vector<std::uint8_t> a{1, 1, 0, 0, 8, 8};
  EXPECT_EQ(iou(a, a, 1), 1.0);
  EXPECT_FALSE(iou(a, a, 3).has_value());
  const std::vector<std::uint8_t> p{2, 2, 8, 8}, q{8, 8, 2, 2};
  EXPECT_EQ(iou(p, q, 2), 0.0);
  // Two 2x2 squares overlapping in one 1x2 column: intersection 2 cells, union 6.
  const std::vector<std::uint8_t> s{4, 4, 8, 4, 4, 8}, r{8, 4, 4, 8, 4, 4};
  EXPECT_DOUBLE_EQ(*iou(s, r, 4), 1.0 / 3.0);
  EXPECT_THROW(iou(p, a, 1), InvalidInput);
}

TEST(Iou, SymmetryIdentityAndOrderInvariance) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> label(0, 8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> a(64), b(64);
    for (auto& v : a) v = std::uint8_t(label(rng));
    b = a;
    for (int k = 0; k < trial % 5; ++k) b[std::size_t(label(rng)) * 7] = std::uint8_t(label(rng));
    const auto ab = per_class_iou(a, b), ba = per_class_iou(b, a);
    for (int c = 0; c < kNumPartClasses; ++c) {
      EXPECT_EQ(ab[std::size_t(c)], ba[std::size_t(c)]);
      if (ab[std::size_t(c)]) {
        std::vector<std::uint8_t> ma(64), mb(64);
        for (std::size_t i = 0; i < 64; ++i) {
          ma[i] = a[i] == c;
          mb[i] = b[i] == c;
        }
        EXPECT_EQ(*ab[std::size_t(c)] == 1.0, ma == mb);
      }
    }
    auto shuffled = ab;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(mean_iou(shuffled), mean_iou(ab), 1e-15);
  }
}

TEST(Report, FormatMatchesTableShape) {
  EXPECT_EQ(format_auc_line("DenseReg", 0.3605, 10.83), "DenseReg 0.3605 / 10.83%");
}
