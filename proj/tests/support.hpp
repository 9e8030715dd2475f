#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "densereg/codec.hpp"
#include "densereg/gradcheck.hpp"
#include "densereg/network.hpp"
#include "densereg/raster.hpp"
#include "densereg/template_mesh.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using namespace densereg;

inline std::string asset_path(const std::string& name) { return std::string(DENSEREG_ASSET_DIR) + "/" + name; }

inline const TemplateMesh& face() {
  static const TemplateMesh mesh = load_mesh(asset_path("face_lowpoly.json"));
  return mesh;
}

/// Fresh empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("densereg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Random soup of triangles for rasterizer checks. Some vertices land on
/// pixel centers and some triangles share edges so the fill rule matters.
inline ProjectedMesh random_projected_mesh(std::mt19937_64& rng, int triangles, int size) {
  std::uniform_real_distribution<double> pos(-4.0, size + 4.0), depth(0.0, 1.0), uv(0.0, 1.0);
  std::uniform_int_distribution<int> grid(0, size), label(0, 7), coin(0, 3);
  ProjectedMesh pm;
  auto add_vertex = [&](Vec2 p) {
    pm.vertices_2d.push_back(p);
    pm.vertex_depth.push_back(coin(rng) == 0 ? 0.5 : depth(rng));
    pm.part_labels.push_back(label(rng));
    return pm.vertices_2d.size() - 1;
  };
  for (int t = 0; t < triangles; ++t) {
    Triangle tri{};
    const bool share = t > 0 && coin(rng) == 0;
    int k = 0;
    if (share) {
      const auto& prev = pm.triangles.back();
      tri[0] = prev[1];
      tri[1] = prev[0];
      k = 2;
    }
    for (; k < 3; ++k) {
      const Vec2 p = coin(rng) == 0 ? Vec2{grid(rng) + 0.5, grid(rng) + 0.5} : Vec2{pos(rng), pos(rng)};
      tri[static_cast<std::size_t>(k)] = add_vertex(p);
    }
    pm.triangles.push_back(tri);
    pm.corner_uv.push_back({UvCoord{uv(rng), uv(rng)}, UvCoord{uv(rng), uv(rng)}, UvCoord{uv(rng), uv(rng)}});
  }
  return pm;
}

// Network output whose argmax and residuals reproduce `f` exactly.
inline NetworkOutput<float> perfect_output(const CorrespondenceField& f, const Tessellation& tess) {
  const auto t = encode(f, tess);
  const std::size_t K = std::size_t(tess.bins()), H = std::size_t(f.height), W = std::size_t(f.width), n = H * W;
  NetworkOutput<float> out{Tensor<float>({K + 1, H, W}), Tensor<float>({K + 1, H, W}), Tensor<float>({K, H, W}),
                           Tensor<float>({K, H, W}), Tensor<float>({1, H, W})};
  for (std::size_t p = 0; p < n; ++p) {
    out.logits_h[std::size_t(t.qh[p]) * n + p] = 5.0f;
    out.logits_v[std::size_t(t.qv[p]) * n + p] = 5.0f;
    if (!t.mask[p]) continue;
    out.res_h[std::size_t(t.qh[p]) * n + p] = t.rh[p];
    out.res_v[std::size_t(t.qv[p]) * n + p] = t.rv[p];
    out.depth[p] = f.depth[p];
  }
  return out;
}

inline QuantizedTarget random_target(int w, int h, int K, std::mt19937_64& rng) {
  CorrespondenceField f(w, h);
  std::uniform_real_distribution<float> u(0, 1);
  std::bernoulli_distribution fg(0.6);
  for (std::size_t i = 0; i < f.size(); ++i)
    if (fg(rng)) {
      f.mask[i] = 1;
      f.uh[i] = u(rng);
      f.uv[i] = u(rng);
    }
  return encode(f, Tessellation(K));
}

inline NetworkOutput<double> random_output(int w, int h, int K, std::mt19937_64& rng) {
  const auto W = std::size_t(w), H = std::size_t(h), k = std::size_t(K);
  return {detail::random_tensor({k + 1, H, W}, rng), detail::random_tensor({k + 1, H, W}, rng), detail::random_tensor({k, H, W}, rng),
          detail::random_tensor({k, H, W}, rng), detail::random_tensor({1, H, W}, rng)};
}

}  // namespace testing_support
