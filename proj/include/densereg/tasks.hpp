#pragma once

// Network outputs to correspondence fields, and the tasks built on them:
// landmark localization, part segmentation transfer and depth export.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "densereg/codec.hpp"
#include "densereg/common.hpp"
#include "densereg/network.hpp"
#include "densereg/raster.hpp"
#include "densereg/template_mesh.hpp"

namespace densereg {

enum class DecodeMode { kFull, kClassificationOnly };

namespace detail {

template <class T>
std::vector<int> argmax_labels(const Tensor<T>& logits) {
  const std::size_t C = logits.dim(0), n = logits.dim(1) * logits.dim(2);
  std::vector<int> q(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    T best = logits[p];
    for (std::size_t c = 1; c < C; ++c)
      if (logits[c * n + p] > best) {
        best = logits[c * n + p];
        q[p] = static_cast<int>(c);
      }
  }
  return q;
}

}  // namespace detail

/// Per pixel: argmax bin per axis (ties to the lowest index); foreground iff
/// neither axis picks the dummy class; u = q d + r_q clamped to [0,1].
template <class T>
CorrespondenceField predict_field(const NetworkOutput<T>& out, const Tessellation& tess,
                                  DecodeMode mode = DecodeMode::kFull) {
  if (out.bins() != tess.bins()) throw InvalidInput("predict_field: output K does not match tessellation");
  const int W = out.width(), H = out.height();
  CorrespondenceField f(W, H);
  const auto qh = detail::argmax_labels(out.logits_h);
  const auto qv = detail::argmax_labels(out.logits_v);
  std::vector<T> rh, rv;
  if (mode == DecodeMode::kFull) {
    rh = select_residual<T>(out.res_h.values(), qh, tess);
    rv = select_residual<T>(out.res_v.values(), qv, tess);
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (qh[i] == tess.dummy() || qv[i] == tess.dummy()) continue;
    float h, v;
    if (mode == DecodeMode::kFull) {
      h = decode_value(qh[i], static_cast<float>(rh[i]), tess);
      v = decode_value(qv[i], static_cast<float>(rv[i]), tess);
    } else {
      h = decode_bin_center(qh[i], tess);
      v = decode_bin_center(qv[i], tess);
    }
    f.uh[i] = std::clamp(h, 0.0f, 1.0f);
    f.uv[i] = std::clamp(v, 0.0f, 1.0f);
    f.depth[i] = std::clamp(static_cast<float>(out.depth[i]), 0.0f, 1.0f);
    f.mask[i] = 1;
  }
  return f;
}

struct LandmarkResult {
  std::string name;
  bool detected = false;
  int row = -1;
  int col = -1;
  double uv_distance = std::numeric_limits<double>::infinity();
  int components = 0;  // connected regions within the threshold

  Vec2 pixel_center() const { return {col + 0.5, row + 0.5}; }
};

struct NamedUv {
  std::string name;
  UvCoord uv;
};

/// For each landmark: threshold the UV distance map at tau over the
/// foreground, split it into 4-connected components and report the argmin
/// pixel of the component holding the smallest distance. Ties resolve to
/// the smallest (row, col).
inline std::vector<LandmarkResult> localize_landmarks(const CorrespondenceField& field,
                                                      const std::vector<NamedUv>& landmarks, double tau = 0.05) {
  if (!(tau > 0.0)) throw InvalidInput("localize_landmarks: tau must be positive");
  const int W = field.width, H = field.height;
  const std::size_t n = field.size();
  std::vector<double> dist(n);
  std::vector<int> component(n);
  std::vector<LandmarkResult> results;
  for (const auto& lm : landmarks) {
    LandmarkResult r;
    r.name = lm.name;
    for (std::size_t i = 0; i < n; ++i) {
      const double dh = static_cast<double>(field.uh[i]) - lm.uv.h;
      const double dv = static_cast<double>(field.uv[i]) - lm.uv.v;
      dist[i] = field.mask[i] ? std::sqrt(dh * dh + dv * dv) : std::numeric_limits<double>::infinity();
    }
    std::fill(component.begin(), component.end(), -1);
    std::deque<std::size_t> queue;
    for (std::size_t seed = 0; seed < n; ++seed) {
      if (component[seed] >= 0 || !(dist[seed] <= tau)) continue;
      const int id = r.components++;
      component[seed] = id;
      queue.push_back(seed);
      std::size_t best = seed;
      while (!queue.empty()) {
        const std::size_t p = queue.front();
        queue.pop_front();
        if (dist[p] < dist[best] || (dist[p] == dist[best] && p < best)) best = p;
        const int row = static_cast<int>(p) / W, col = static_cast<int>(p) % W;
        const int nr[4] = {row - 1, row + 1, row, row};
        const int nc[4] = {col, col, col - 1, col + 1};
        for (int k = 0; k < 4; ++k) {
          if (nr[k] < 0 || nr[k] >= H || nc[k] < 0 || nc[k] >= W) continue;
          const std::size_t q = field.index(nr[k], nc[k]);
          if (component[q] < 0 && dist[q] <= tau) {
            component[q] = id;
            queue.push_back(q);
          }
        }
      }
      const std::size_t current = r.detected ? field.index(r.row, r.col) : n;
      if (!r.detected || dist[best] < r.uv_distance || (dist[best] == r.uv_distance && best < current)) {
        r.detected = true;
        r.uv_distance = dist[best];
        r.row = static_cast<int>(best) / W;
        r.col = static_cast<int>(best) % W;
      }
    }
    results.push_back(std::move(r));
  }
  return results;
}

inline std::vector<NamedUv> template_landmark_uvs(const TemplateMesh& mesh, const UvAtlas& atlas) {
  std::vector<NamedUv> out;
  for (const auto& lm : mesh.landmarks) out.push_back({lm.name, atlas.uv[lm.vertex]});
  return out;
}

struct TemplateLabelLut {
  int resolution = 0;
  std::vector<std::uint8_t> labels;  // row = floor(u^v R), col = floor(u^h R)

  std::uint8_t lookup(float h, float v) const {
    const int R = resolution;
    const int col = std::clamp(static_cast<int>(std::floor(static_cast<double>(h) * R)), 0, R - 1);
    const int row = std::clamp(static_cast<int>(std::floor(static_cast<double>(v) * R)), 0, R - 1);
    return labels[static_cast<std::size_t>(row) * R + col];
  }
};

/// Rasterizes the unwrapped mesh at R x R cells (labels by max barycentric
/// weight, like the image rasterizer) and fills cells outside the UV
/// footprint from the nearest labeled cell.
inline TemplateLabelLut build_label_lut(const TemplateMesh& mesh, const UvAtlas& atlas, int R) {
  if (R < 64) throw InvalidInput("build_label_lut: resolution must be >= 64");
  constexpr std::uint8_t kEmpty = 255;
  TemplateLabelLut lut;
  lut.resolution = R;
  const auto RR = static_cast<std::size_t>(R);
  lut.labels.assign(RR * RR, kEmpty);
  auto paint = [&](const Tri2& tri, const Triangle& verts) {
    const double min_x = std::min({tri[0].x, tri[1].x, tri[2].x});
    const double max_x = std::max({tri[0].x, tri[1].x, tri[2].x});
    const double min_y = std::min({tri[0].y, tri[1].y, tri[2].y});
    const double max_y = std::max({tri[0].y, tri[1].y, tri[2].y});
    const int c0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int c1 = std::min(R - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int r1 = std::min(R - 1, static_cast<int>(std::floor(max_y - 0.5)));
    for (int row = r0; row <= r1; ++row)
      for (int col = c0; col <= c1; ++col) {
        const Vec2 p = pixel_center(row, col);
        if (!covers(tri, p)) continue;
        const Barycentric w = barycentric(tri, p);
        int corner = 0;
        if (w.b > w.a) corner = 1;
        if (w.c > (corner == 0 ? w.a : w.b)) corner = 2;
        auto& cell = lut.labels[static_cast<std::size_t>(row) * RR + col];
        if (cell == kEmpty) cell = static_cast<std::uint8_t>(mesh.part_labels[verts[corner]]);
      }
  };
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    Tri2 tri;
    for (int k = 0; k < 3; ++k) {
      const UvCoord c = atlas.corner_uv(mesh, t, k);
      tri[k] = {c.h * R, c.v * R};
    }
    if (detail::edge_function(tri[0], tri[1], tri[2]) == 0.0) continue;
    paint(tri, mesh.triangles[t]);
    if (atlas.seam_duplicates[t]) {  // the part that wrapped past u^h = 1
      for (auto& p : tri) p.x -= R;
      paint(tri, mesh.triangles[t]);
    }
  }
  // Multi-source BFS from every labeled cell (8-connected, fixed order).
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < lut.labels.size(); ++i)
    if (lut.labels[i] != kEmpty) queue.push_back(i);
  if (queue.empty()) throw InvalidInput("build_label_lut: mesh covers no UV cell");
  while (!queue.empty()) {
    const std::size_t p = queue.front();
    queue.pop_front();
    const int row = static_cast<int>(p / RR), col = static_cast<int>(p % RR);
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const int nr = row + dr, nc = col + dc;
        if ((dr == 0 && dc == 0) || nr < 0 || nr >= R || nc < 0 || nc >= R) continue;
        const std::size_t q = static_cast<std::size_t>(nr) * RR + nc;
        if (lut.labels[q] == kEmpty) {
          lut.labels[q] = lut.labels[p];
          queue.push_back(q);
        }
      }
  }
  return lut;
}

/// Label image: LUT label at each foreground pixel's UV, background elsewhere.
inline std::vector<std::uint8_t> transfer_segmentation(const CorrespondenceField& field, const TemplateLabelLut& lut) {
  std::vector<std::uint8_t> out(field.size(), static_cast<std::uint8_t>(kBackgroundLabel));
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.mask[i]) out[i] = lut.lookup(field.uh[i], field.uv[i]);
  return out;
}

/// Depth map for export: Z on the foreground, 0 elsewhere.
inline std::vector<float> export_depth(const CorrespondenceField& field) {
  std::vector<float> out(field.size(), 0.0f);
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.mask[i]) out[i] = field.depth[i];
  return out;
}

}  // namespace densereg
