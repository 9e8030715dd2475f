#pragma once

// Thin plate spline warps with kernel phi(r) = r^2 log r.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "densereg/common.hpp"

namespace densereg {

struct TpsWarp {
  std::vector<Vec2> control_src;
  std::vector<Vec2> control_dst;
  std::vector<Vec2> kernel_weights;
  /// f(p) = affine * [p.x, p.y, 1]^T + sum_i w_i phi(|p - src_i|)
  std::array<std::array<double, 3>, 2> affine{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}};
  double regularization = 0.0;

  Vec2 operator()(const Vec2& p) const;
};

inline double tps_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

inline Vec2 TpsWarp::operator()(const Vec2& p) const {
  double x = affine[0][0] * p.x + affine[0][1] * p.y + affine[0][2];
  double y = affine[1][0] * p.x + affine[1][1] * p.y + affine[1][2];
  for (std::size_t i = 0; i < control_src.size(); ++i) {
    const double u = tps_kernel(std::hypot(p.x - control_src[i].x, p.y - control_src[i].y));
    x += kernel_weights[i].x * u;
    y += kernel_weights[i].y * u;
  }
  return {x, y};
}

inline TpsWarp fit_tps(std::span<const Vec2> src, std::span<const Vec2> dst, double lambda = 0.0) {
  const std::size_t n = src.size();
  if (n != dst.size()) throw InvalidInput("fit_tps: source and destination counts differ");
  if (n < 3) throw InvalidInput("fit_tps: need at least 3 control points");
  if (lambda < 0.0) throw InvalidInput("fit_tps: regularization must be nonnegative");

  double scale = 0.0;
  for (const auto& p : src) scale = std::max({scale, std::abs(p.x), std::abs(p.y)});
  scale = std::max(scale, 1.0);
  bool spans_plane = false;
  for (std::size_t i = 0; i < n && !spans_plane; ++i)
    for (std::size_t j = i + 1; j < n && !spans_plane; ++j) {
      if (src[i] == src[j]) throw InvalidInput("fit_tps: singular system (duplicate control points)");
      for (std::size_t k = j + 1; k < n; ++k) {
        const double area = (src[j].x - src[i].x) * (src[k].y - src[i].y) -
                            (src[j].y - src[i].y) * (src[k].x - src[i].x);
        if (std::abs(area) > 1e-9 * scale * scale) {
          spans_plane = true;
          break;
        }
      }
    }
  if (!spans_plane) throw InvalidInput("fit_tps: singular system (collinear control points)");

  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 3, m + 3);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m + 3, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j)
      A(i, j) = tps_kernel(std::hypot(src[i].x - src[j].x, src[i].y - src[j].y));
    A(i, i) += lambda;
    A(i, m) = 1.0;
    A(i, m + 1) = src[i].x;
    A(i, m + 2) = src[i].y;
    A(m, i) = 1.0;
    A(m + 1, i) = src[i].x;
    A(m + 2, i) = src[i].y;
    b(i, 0) = dst[i].x;
    b(i, 1) = dst[i].y;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw InvalidInput("fit_tps: singular system");
  const Eigen::MatrixXd sol = lu.solve(b);

  TpsWarp warp;
  warp.control_src.assign(src.begin(), src.end());
  warp.control_dst.assign(dst.begin(), dst.end());
  warp.regularization = lambda;
  warp.kernel_weights.resize(n);
  for (Eigen::Index i = 0; i < m; ++i) warp.kernel_weights[i] = {sol(i, 0), sol(i, 1)};
  for (int k = 0; k < 2; ++k) {
    warp.affine[k][0] = sol(m + 1, k);
    warp.affine[k][1] = sol(m + 2, k);
    warp.affine[k][2] = sol(m, k);
  }
  return warp;
}

inline std::vector<Vec2> apply_tps(const TpsWarp& warp, std::span<const Vec2> points) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(warp(p));
  return out;
}

}  // namespace densereg
