#pragma once

// Software triangle rasterizer with z-buffer visibility.
//
// Conventions: pixel (row i, col j) samples at (x, y) = (j + 0.5, i + 0.5);
// a sample exactly on an edge belongs to the triangle when that edge is a
// top or left edge; among covering triangles the smallest interpolated depth
// wins and exact depth ties go to the lower triangle index.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "densereg/common.hpp"
#include "densereg/template_mesh.hpp"

namespace densereg {

struct CorrespondenceField {
  int width = 0;
  int height = 0;
  std::vector<float> uh;
  std::vector<float> uv;
  std::vector<float> depth;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint8_t> parts;

  CorrespondenceField() = default;
  CorrespondenceField(int w, int h)
      : width(w),
        height(h),
        uh(pixel_count(w, h), 0.0f),
        uv(pixel_count(w, h), 0.0f),
        depth(pixel_count(w, h), 0.0f),
        mask(pixel_count(w, h), 0),
        parts(pixel_count(w, h), static_cast<std::uint8_t>(kBackgroundLabel)) {}

  std::size_t size() const { return uh.size(); }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col);
  }
  std::size_t foreground_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }

  friend bool operator==(const CorrespondenceField&, const CorrespondenceField&) = default;

 private:
  static std::size_t pixel_count(int w, int h) {
    if (w < 0 || h < 0) throw InvalidInput("negative field dimensions");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
};

struct ProjectedMesh {
  std::vector<Vec2> vertices_2d;   // pixel coordinates, x = column, y = row
  std::vector<double> vertex_depth;  // larger = farther
  std::vector<Triangle> triangles;
  std::vector<int> part_labels;
  std::vector<std::array<UvCoord, 3>> corner_uv;  // seam-corrected, per triangle

  void validate() const {
    const std::size_t m = vertices_2d.size();
    if (vertex_depth.size() != m || part_labels.size() != m)
      throw InvalidInput("projected mesh: per-vertex arrays disagree in length");
    if (corner_uv.size() != triangles.size())
      throw InvalidInput("projected mesh: corner_uv does not match triangle count");
    for (std::size_t i = 0; i < m; ++i)
      if (!std::isfinite(vertices_2d[i].x) || !std::isfinite(vertices_2d[i].y) ||
          !std::isfinite(vertex_depth[i]))
        throw InvalidInput("projected mesh: non-finite vertex " + std::to_string(i));
    for (const auto& t : triangles)
      for (auto idx : t)
        if (idx >= m) throw InvalidInput("projected mesh: vertex index out of range");
  }
};

/// Pairs template topology and UVs with projected positions and depths.
inline ProjectedMesh project_mesh(const TemplateMesh& mesh, const UvAtlas& atlas,
                                  std::vector<Vec2> positions, std::vector<double> depths) {
  ProjectedMesh pm;
  pm.vertices_2d = std::move(positions);
  pm.vertex_depth = std::move(depths);
  pm.triangles = mesh.triangles;
  pm.part_labels = mesh.part_labels;
  pm.corner_uv.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    for (int k = 0; k < 3; ++k) pm.corner_uv[t][k] = atlas.corner_uv(mesh, t, k);
  pm.validate();
  return pm;
}

struct Barycentric {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

using Tri2 = std::array<Vec2, 3>;

namespace detail {

// Twice the signed area of (a, b, p).
inline double edge_function(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

// For an edge a->b of a triangle whose interior has positive edge values.
inline bool is_top_left(const Vec2& a, const Vec2& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

inline bool edge_owns(double e, const Vec2& a, const Vec2& b) {
  return e > 0.0 || (e == 0.0 && is_top_left(a, b));
}

}  // namespace detail

/// Weights (a, b, c) of p with respect to the triangle corners; sum to 1.
inline Barycentric barycentric(const Tri2& tri, const Vec2& p) {
  const double area = detail::edge_function(tri[0], tri[1], tri[2]);
  if (area == 0.0 || !std::isfinite(area)) throw InvalidInput("degenerate triangle");
  Barycentric w;
  w.a = detail::edge_function(tri[1], tri[2], p) / area;
  w.b = detail::edge_function(tri[2], tri[0], p) / area;
  w.c = 1.0 - w.a - w.b;
  return w;
}

/// Coverage under the top-left fill rule; degenerate triangles cover nothing.
inline bool covers(const Tri2& tri, const Vec2& p) {
  Vec2 a = tri[0], b = tri[1], c = tri[2];
  const double area = detail::edge_function(a, b, c);
  if (area == 0.0 || !std::isfinite(area)) return false;
  if (area < 0.0) std::swap(b, c);
  return detail::edge_owns(detail::edge_function(b, c, p), b, c) &&
         detail::edge_owns(detail::edge_function(c, a, p), c, a) &&
         detail::edge_owns(detail::edge_function(a, b, p), a, b);
}

inline Vec2 pixel_center(int row, int col) { return {col + 0.5, row + 0.5}; }

struct RasterResult {
  CorrespondenceField field;
  std::vector<double> raw_depth;  // winning interpolated depth, +inf on background
  std::vector<int> triangle;      // winning triangle index, -1 on background
};

namespace detail {

inline Tri2 triangle_2d(const ProjectedMesh& pm, std::size_t t) {
  const auto& tri = pm.triangles[t];
  return {pm.vertices_2d[tri[0]], pm.vertices_2d[tri[1]], pm.vertices_2d[tri[2]]};
}

inline double interpolate_depth(const ProjectedMesh& pm, std::size_t t, const Barycentric& w) {
  const auto& tri = pm.triangles[t];
  // Offset form keeps a constant-depth triangle exactly constant.
  const double z0 = pm.vertex_depth[tri[0]];
  return z0 + w.b * (pm.vertex_depth[tri[1]] - z0) + w.c * (pm.vertex_depth[tri[2]] - z0);
}

// Fills the attribute channels of a pixel from its winning triangle and
// normalizes depth over the foreground (nearest = 1).
inline void shade(const ProjectedMesh& pm, RasterResult& r) {
  auto& f = r.field;
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (r.triangle[i] < 0) continue;
    dmin = std::min(dmin, r.raw_depth[i]);
    dmax = std::max(dmax, r.raw_depth[i]);
  }
  for (int row = 0; row < f.height; ++row) {
    for (int col = 0; col < f.width; ++col) {
      const std::size_t i = f.index(row, col);
      const int t = r.triangle[i];
      if (t < 0) continue;
      const auto ti = static_cast<std::size_t>(t);
      const Barycentric w = barycentric(triangle_2d(pm, ti), pixel_center(row, col));
      const auto& cuv = pm.corner_uv[ti];
      double h = w.a * cuv[0].h + w.b * cuv[1].h + w.c * cuv[2].h;
      double v = w.a * cuv[0].v + w.b * cuv[1].v + w.c * cuv[2].v;
      if (h > 1.0) h -= 1.0;
      f.uh[i] = static_cast<float>(std::clamp(h, 0.0, 1.0));
      f.uv[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      const double z = dmax > dmin ? (dmax - r.raw_depth[i]) / (dmax - dmin) : 1.0;
      f.depth[i] = static_cast<float>(std::clamp(z, 0.0, 1.0));
      f.mask[i] = 1;
      const auto& tri = pm.triangles[ti];
      int corner = 0;
      if (w.b > w.a) corner = 1;
      if (w.c > (corner == 0 ? w.a : w.b)) corner = 2;
      f.parts[i] = static_cast<std::uint8_t>(pm.part_labels[tri[corner]]);
    }
  }
}

}  // namespace detail

/// Rasterizes `pm` into a width x height field. Uncovered frames yield an
/// empty (all-background) field.
inline RasterResult rasterize_with_buffers(const ProjectedMesh& pm, int width, int height) {
  pm.validate();
  RasterResult r{CorrespondenceField(width, height),
                 std::vector<double>(static_cast<std::size_t>(width) * height,
                                     std::numeric_limits<double>::infinity()),
                 std::vector<int>(static_cast<std::size_t>(width) * height, -1)};
  for (std::size_t t = 0; t < pm.triangles.size(); ++t) {
    const Tri2 tri = detail::triangle_2d(pm, t);
    const double area = detail::edge_function(tri[0], tri[1], tri[2]);
    if (area == 0.0) continue;
    const double min_x = std::min({tri[0].x, tri[1].x, tri[2].x});
    const double max_x = std::max({tri[0].x, tri[1].x, tri[2].x});
    const double min_y = std::min({tri[0].y, tri[1].y, tri[2].y});
    const double max_y = std::max({tri[0].y, tri[1].y, tri[2].y});
    const int c0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int c1 = std::min(width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int r1 = std::min(height - 1, static_cast<int>(std::floor(max_y - 0.5)));
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        const Vec2 p = pixel_center(row, col);
        if (!covers(tri, p)) continue;
        const double z = detail::interpolate_depth(pm, t, barycentric(tri, p));
        const std::size_t i = r.field.index(row, col);
        if (z < r.raw_depth[i]) {
          r.raw_depth[i] = z;
          r.triangle[i] = static_cast<int>(t);
        }
      }
    }
  }
  detail::shade(pm, r);
  return r;
}

inline CorrespondenceField rasterize(const ProjectedMesh& pm, int width, int height) {
  return rasterize_with_buffers(pm, width, height).field;
}

}  // namespace densereg
