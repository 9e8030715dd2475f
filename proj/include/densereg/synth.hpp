#pragma once

// Synthetic scenes: the template is posed (yaw, in-plane similarity), warped
// by a jittered thin plate spline, textured as a function of UV and
// rasterized for exact ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "densereg/common.hpp"
#include "densereg/image.hpp"
#include "densereg/raster.hpp"
#include "densereg/template_mesh.hpp"
#include "densereg/tps.hpp"

namespace densereg {

struct SynthConfig {
  int width = 64;
  int height = 64;
  std::vector<double> scale_ratios{0.5, 0.75, 1.0, 1.25, 1.5};
  double base_scale_px = 24.0;  // pixels per model unit at ratio 1
  double yaw_range_deg = 30.0;
  double roll_range_deg = 15.0;
  double translate_px = 3.0;
  int tps_grid = 4;             // control points per side
  double tps_jitter_px = 1.5;   // std of control point displacement
  double tps_lambda = 0.0;
  double noise = 0.1;           // amplitude of uniform pixel noise

  void validate() const {
    if (width < 8 || height < 8) throw InvalidInput("synth: image must be at least 8x8");
    if (scale_ratios.empty()) throw InvalidInput("synth: no scale ratios");
    for (double r : scale_ratios)
      if (!(r > 0.0)) throw InvalidInput("synth: scale ratios must be positive");
    if (!(base_scale_px > 0.0)) throw InvalidInput("synth: base scale must be positive");
    if (yaw_range_deg < 0.0 || roll_range_deg < 0.0 || translate_px < 0.0 || tps_jitter_px < 0.0 || noise < 0.0)
      throw InvalidInput("synth: ranges must be nonnegative");
    if (tps_grid < 2) throw InvalidInput("synth: TPS grid needs at least 2x2 control points");
  }
};

struct LandmarkObservation {
  std::string name;
  Vec2 position;  // x = column, y = row, continuous pixel coordinates
  bool visible = false;
};

struct SceneMeta {
  std::uint64_t seed = 0;
  double scale_ratio = 1.0;
  double tps_magnitude = 0.0;  // max control point displacement in pixels
  double yaw_deg = 0.0;
  double roll_deg = 0.0;
};

struct SceneSample {
  Image image;
  CorrespondenceField gt;
  std::vector<LandmarkObservation> gt_landmarks;
  SceneMeta meta;
};

inline constexpr int kTextureChannels = 3;

/// Noise-free appearance at UV (h, v): a fixed sinusoid basis.
inline float texture_value(double h, double v, int channel) {
  constexpr double tau = 2.0 * std::numbers::pi;
  double t = 0.5;
  switch (channel) {
    case 0: t += 0.25 * std::sin(tau * 2.0 * h) + 0.2 * std::cos(tau * 1.5 * v); break;
    case 1: t += 0.25 * std::sin(tau * 3.0 * v + 1.0) + 0.2 * std::cos(tau * h + 0.5); break;
    default: t += 0.3 * std::sin(tau * (2.0 * h + 2.0 * v)); break;
  }
  return static_cast<float>(t);
}

/// Camera-frame pose of the template before the 2D warp.
struct PosedMesh {
  std::vector<Vec2> positions;
  std::vector<double> depths;
};

/// Yaw about the vertical axis, weak-perspective projection, then in-plane
/// rotation, scale and translation about the image center.
inline PosedMesh pose_template(const TemplateMesh& mesh, double yaw_rad, double roll_rad, double scale_px,
                               Vec2 center) {
  PosedMesh out;
  out.positions.reserve(mesh.vertex_count());
  out.depths.reserve(mesh.vertex_count());
  const double cy = std::cos(yaw_rad), sy = std::sin(yaw_rad);
  const double cr = std::cos(roll_rad), sr = std::sin(roll_rad);
  for (const auto& p : mesh.vertices) {
    const double x = p.x * cy + p.z * sy;
    const double z = -p.x * sy + p.z * cy;
    const double ix = x;
    const double iy = -p.y;
    out.positions.push_back({center.x + scale_px * (cr * ix - sr * iy), center.y + scale_px * (sr * ix + cr * iy)});
    out.depths.push_back(-z);
  }
  return out;
}

/// Deterministic in `seed`.
inline SceneSample synthesize_sample(const TemplateMesh& mesh, const UvAtlas& atlas, const SynthConfig& cfg,
                                     std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto symmetric = [&](double range) { return (2.0 * unit(rng) - 1.0) * range; };
  constexpr double deg = std::numbers::pi / 180.0;

  SceneMeta meta;
  meta.seed = seed;
  std::uniform_int_distribution<std::size_t> pick(0, cfg.scale_ratios.size() - 1);
  meta.scale_ratio = cfg.scale_ratios[pick(rng)];
  meta.yaw_deg = symmetric(cfg.yaw_range_deg);
  meta.roll_deg = symmetric(cfg.roll_range_deg);
  const Vec2 center{0.5 * cfg.width + symmetric(cfg.translate_px), 0.5 * cfg.height + symmetric(cfg.translate_px)};

  PosedMesh posed = pose_template(mesh, meta.yaw_deg * deg, meta.roll_deg * deg,
                                  cfg.base_scale_px * meta.scale_ratio, center);

  std::vector<Vec2> src, dst;
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (int gy = 0; gy < cfg.tps_grid; ++gy)
    for (int gx = 0; gx < cfg.tps_grid; ++gx) {
      const Vec2 s{cfg.width * gx / double(cfg.tps_grid - 1), cfg.height * gy / double(cfg.tps_grid - 1)};
      const Vec2 d{s.x + cfg.tps_jitter_px * jitter(rng), s.y + cfg.tps_jitter_px * jitter(rng)};
      meta.tps_magnitude = std::max(meta.tps_magnitude, std::hypot(d.x - s.x, d.y - s.y));
      src.push_back(s);
      dst.push_back(d);
    }
  if (cfg.tps_jitter_px > 0.0) {
    const TpsWarp warp = fit_tps(src, dst, cfg.tps_lambda);
    posed.positions = apply_tps(warp, posed.positions);
  }

  const ProjectedMesh pm = project_mesh(mesh, atlas, posed.positions, posed.depths);
  RasterResult raster = rasterize_with_buffers(pm, cfg.width, cfg.height);
  if (raster.field.foreground_count() == 0) throw InvalidInput("empty foreground");

  SceneSample s;
  s.meta = meta;
  s.image = Image(cfg.width, cfg.height, kTextureChannels);
  std::array<float, kTextureChannels> background{};
  for (auto& b : background) b = static_cast<float>(0.2 + 0.6 * unit(rng));
  const auto& f = raster.field;
  for (int row = 0; row < cfg.height; ++row)
    for (int col = 0; col < cfg.width; ++col) {
      const std::size_t i = f.index(row, col);
      for (int c = 0; c < kTextureChannels; ++c) {
        const float clean = f.mask[i] ? texture_value(f.uh[i], f.uv[i], c) : background[c];
        const float noisy = clean + static_cast<float>(cfg.noise * (2.0 * unit(rng) - 1.0));
        s.image.at(row, col, c) = std::clamp(noisy, 0.0f, 1.0f);
      }
    }

  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
  for (double d : posed.depths) {
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  const double depth_eps = 0.02 * std::max(dmax - dmin, 1e-12);
  for (const auto& lm : mesh.landmarks) {
    LandmarkObservation obs;
    obs.name = lm.name;
    obs.position = posed.positions[lm.vertex];
    const int col = static_cast<int>(std::floor(obs.position.x));
    const int row = static_cast<int>(std::floor(obs.position.y));
    if (col >= 0 && col < cfg.width && row >= 0 && row < cfg.height) {
      const std::size_t i = f.index(row, col);
      obs.visible = f.mask[i] && posed.depths[lm.vertex] <= raster.raw_depth[i] + depth_eps;
    }
    s.gt_landmarks.push_back(std::move(obs));
  }
  s.gt = std::move(raster.field);
  return s;
}

}  // namespace densereg
