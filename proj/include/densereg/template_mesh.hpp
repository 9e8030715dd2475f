#pragma once

// Template mesh, its annotations, and the cylindrical unwrap into UV space.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "densereg/common.hpp"

namespace densereg {

using Triangle = std::array<std::size_t, 3>;

struct Landmark {
  std::string name;
  std::size_t vertex = 0;
};

struct TemplateMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<int> part_labels;
  std::vector<Landmark> landmarks;

  std::size_t vertex_count() const { return vertices.size(); }

  const Landmark* find_landmark(const std::string& name) const {
    for (const auto& lm : landmarks)
      if (lm.name == name) return &lm;
    return nullptr;
  }
};

struct UvCoord {
  double h = 0.0;
  double v = 0.0;
  friend bool operator==(const UvCoord&, const UvCoord&) = default;
};

struct UvAtlas {
  std::vector<UvCoord> uv;
  /// Per triangle: corrected u^h of each corner when the triangle straddles
  /// the azimuth seam, otherwise empty.
  std::vector<std::optional<std::array<double, 3>>> seam_duplicates;

  /// UV of `corner` of triangle `tri`, seam correction applied (u^h may exceed 1).
  UvCoord corner_uv(const TemplateMesh& mesh, std::size_t tri, int corner) const {
    UvCoord c = uv[mesh.triangles[tri][corner]];
    if (seam_duplicates[tri]) c.h = (*seam_duplicates[tri])[corner];
    return c;
  }
};

namespace detail {

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1{b.x - a.x, b.y - a.y, b.z - a.z};
  const Vec3 e2{c.x - a.x, c.y - a.y, c.z - a.z};
  const double cx = e1.y * e2.z - e1.z * e2.y;
  const double cy = e1.z * e2.x - e1.x * e2.z;
  const double cz = e1.x * e2.y - e1.y * e2.x;
  return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

}  // namespace detail

/// Throws InvalidInput naming the first violated invariant.
inline void validate_mesh(const TemplateMesh& mesh) {
  const std::size_t m = mesh.vertex_count();
  if (m == 0) throw InvalidInput("mesh has no vertices");
  if (mesh.triangles.empty()) throw InvalidInput("mesh has no triangles");
  if (mesh.part_labels.size() != m)
    throw InvalidInput("part_labels has " + std::to_string(mesh.part_labels.size()) +
                       " entries, expected " + std::to_string(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& p = mesh.vertices[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw InvalidInput("vertex " + std::to_string(i) + " is not finite");
    if (mesh.part_labels[i] < 0 || mesh.part_labels[i] >= kNumPartClasses)
      throw InvalidInput("part label of vertex " + std::to_string(i) + " out of range");
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (auto idx : tri)
      if (idx >= m)
        throw InvalidInput("triangle " + std::to_string(t) + ": vertex index out of range (" +
                           std::to_string(idx) + " >= " + std::to_string(m) + ")");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw InvalidInput("triangle " + std::to_string(t) + " repeats a vertex");
    if (detail::triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]) <=
        0.0)
      throw InvalidInput("triangle " + std::to_string(t) + " has zero area");
  }
  std::set<std::string> names;
  for (const auto& lm : mesh.landmarks) {
    if (lm.vertex >= m)
      throw InvalidInput("landmark '" + lm.name + "': vertex index out of range");
    if (!names.insert(lm.name).second) throw InvalidInput("duplicate landmark '" + lm.name + "'");
  }
}

/// Azimuth/height unwrap: u^h = (atan2(x, z) + pi) / 2pi, u^v = normalized y.
/// Rejects meshes with no height extent or whose vertices collide in UV.
inline UvAtlas cylindrical_unwrap(const TemplateMesh& mesh) {
  validate_mesh(mesh);
  const auto [lo, hi] = std::minmax_element(mesh.vertices.begin(), mesh.vertices.end(),
                                            [](const Vec3& a, const Vec3& b) { return a.y < b.y; });
  const double y_min = lo->y;
  const double y_max = hi->y;
  if (!(y_max > y_min)) throw InvalidInput("degenerate height range: cannot unwrap");

  UvAtlas atlas;
  atlas.uv.reserve(mesh.vertex_count());
  for (const auto& p : mesh.vertices) {
    UvCoord c;
    c.h = (std::atan2(p.x, p.z) + std::numbers::pi) / (2.0 * std::numbers::pi);
    c.v = (p.y - y_min) / (y_max - y_min);
    c.h = std::clamp(c.h, 0.0, 1.0);
    c.v = std::clamp(c.v, 0.0, 1.0);
    atlas.uv.push_back(c);
  }

  std::vector<std::pair<double, double>> keys;
  keys.reserve(atlas.uv.size());
  for (const auto& c : atlas.uv) keys.emplace_back(c.h, c.v);
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
    throw InvalidInput("unwrap is not injective: two vertices share a UV coordinate");

  atlas.seam_duplicates.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    std::array<double, 3> h{};
    for (int k = 0; k < 3; ++k) h[k] = atlas.uv[mesh.triangles[t][k]].h;
    const double spread = *std::max_element(h.begin(), h.end()) - *std::min_element(h.begin(), h.end());
    if (spread > 0.5) {
      for (auto& x : h)
        if (x < 0.5) x += 1.0;
      atlas.seam_duplicates[t] = h;
    }
  }
  return atlas;
}

inline UvCoord landmark_uv(const TemplateMesh& mesh, const UvAtlas& atlas, const std::string& name) {
  const Landmark* lm = mesh.find_landmark(name);
  if (!lm) throw InvalidInput("unknown landmark '" + name + "'");
  return atlas.uv[lm->vertex];
}

/// Parses the JSON mesh document and validates it.
inline TemplateMesh parse_mesh(const std::string& text) {
  using json = nlohmann::ordered_json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("mesh parse error: ") + e.what());
  }
  TemplateMesh mesh;
  try {
    for (const auto& v : doc.at("vertices")) {
      if (v.size() != 3) throw FormatError("vertex entry must have 3 coordinates");
      mesh.vertices.push_back({v[0].get<double>(), v[1].get<double>(), v[2].get<double>()});
    }
    for (const auto& t : doc.at("triangles")) {
      if (t.size() != 3) throw FormatError("triangle entry must have 3 indices");
      Triangle tri{};
      for (int k = 0; k < 3; ++k) {
        const auto idx = t[k].get<long long>();
        if (idx < 0) throw InvalidInput("triangle vertex index out of range (negative)");
        tri[k] = static_cast<std::size_t>(idx);
      }
      mesh.triangles.push_back(tri);
    }
    for (const auto& l : doc.at("part_labels")) mesh.part_labels.push_back(l.get<int>());
    for (const auto& [name, idx] : doc.at("landmarks").items()) {
      const auto i = idx.get<long long>();
      if (i < 0) throw InvalidInput("landmark '" + name + "': vertex index out of range");
      mesh.landmarks.push_back({name, static_cast<std::size_t>(i)});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("mesh field error: ") + e.what());
  }
  validate_mesh(mesh);
  return mesh;
}

inline TemplateMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open mesh file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_mesh(ss.str());
}

inline std::string serialize_mesh(const TemplateMesh& mesh) {
  using json = nlohmann::ordered_json;
  json doc;
  doc["vertices"] = json::array();
  for (const auto& v : mesh.vertices) doc["vertices"].push_back({v.x, v.y, v.z});
  doc["triangles"] = json::array();
  for (const auto& t : mesh.triangles) doc["triangles"].push_back({t[0], t[1], t[2]});
  doc["part_labels"] = mesh.part_labels;
  doc["landmarks"] = json::object();
  for (const auto& lm : mesh.landmarks) doc["landmarks"][lm.name] = lm.vertex;
  return doc.dump();
}

}  // namespace densereg
