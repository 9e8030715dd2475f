#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "densereg/template_mesh.hpp"
#include "support.hpp"

using namespace densereg;
using testing_support::face;

namespace {

TemplateMesh two_triangle_mesh() {
  TemplateMesh m;
  m.vertices = {{0, -1, 1}, {1, 1, 0}, {0, 0, 1}, {-1, 1, 0.5}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.part_labels = {0, 1, 2, 3};
  m.landmarks = {{"a", 2}, {"b", 1}};
  return m;
}

TemplateMesh cylinder(int columns, int rows) {
  TemplateMesh m;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < columns; ++c) {
      const double a = 2.0 * std::numbers::pi * (c + 0.25) / columns;
      m.vertices.push_back({std::sin(a), static_cast<double>(r), std::cos(a)});
      m.part_labels.push_back(c % 8);
    }
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c < columns; ++c) {
      const auto i = static_cast<std::size_t>(r * columns + c);
      const auto j = static_cast<std::size_t>(r * columns + (c + 1) % columns);
      m.triangles.push_back({i, j, i + columns});
      m.triangles.push_back({j, j + columns, i + columns});
    }
  return m;
}

}  // namespace

TEST(Unwrap, FrontVertexMapsToCenter) {
  const auto atlas = cylindrical_unwrap(two_triangle_mesh());
  EXPECT_DOUBLE_EQ(atlas.uv[2].h, 0.5);
  EXPECT_DOUBLE_EQ(atlas.uv[2].v, 0.5);
}

TEST(Unwrap, SideVertex) {
  const auto atlas = cylindrical_unwrap(two_triangle_mesh());
  EXPECT_DOUBLE_EQ(atlas.uv[1].h, 0.75);
  EXPECT_DOUBLE_EQ(atlas.uv[1].v, 1.0);
}

TEST(Unwrap, CylinderMatchesScalarFormula) {
  const auto mesh = cylinder(6, 2);
  ASSERT_EQ(mesh.vertices.size(), 12u);
  const auto atlas = cylindrical_unwrap(mesh);
  double ymin = 1e300, ymax = -1e300;
  for (const auto& p : mesh.vertices) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& p = mesh.vertices[i];
    const double h = (std::atan2(p.x, p.z) + std::numbers::pi) / (2.0 * std::numbers::pi);
    const double v = (p.y - ymin) / (ymax - ymin);
    worst = std::max({worst, std::abs(h - atlas.uv[i].h), std::abs(v - atlas.uv[i].v)});
  }
  EXPECT_EQ(worst, 0.0);
}

TEST(Unwrap, SeamTrianglesAreCorrected) {
  const auto mesh = cylinder(8, 3);
  const auto atlas = cylindrical_unwrap(mesh);
  int corrected = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    double lo = 1e9, hi = -1e9;
    for (int k = 0; k < 3; ++k) {
      const double h = atlas.corner_uv(mesh, t, k).h;
      lo = std::min(lo, h);
      hi = std::max(hi, h);
    }
    EXPECT_LE(hi - lo, 0.5) << "triangle " << t;
    if (atlas.seam_duplicates[t]) ++corrected;
  }
  EXPECT_GT(corrected, 0);
}

TEST(Unwrap, DeterministicAndInRange) {
  const auto a = cylindrical_unwrap(face());
  const auto b = cylindrical_unwrap(face());
  ASSERT_EQ(a.uv.size(), b.uv.size());
  for (std::size_t i = 0; i < a.uv.size(); ++i) {
    EXPECT_EQ(a.uv[i], b.uv[i]);
    EXPECT_GE(a.uv[i].h, 0.0);
    EXPECT_LE(a.uv[i].h, 1.0);
    EXPECT_GE(a.uv[i].v, 0.0);
    EXPECT_LE(a.uv[i].v, 1.0);
  }
}

TEST(Unwrap, RejectsFlatHeight) {
  TemplateMesh m = two_triangle_mesh();
  m.vertices = {{0, 0, 1}, {1, 0, 0}, {-1, 0, 0}, {0, 0, -1}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  try {
    cylindrical_unwrap(m);
    FAIL() << "expected an error";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate height"), std::string::npos) << e.what();
  }
}

TEST(Unwrap, RejectsNonInjective) {
  TemplateMesh m = two_triangle_mesh();
  m.vertices.push_back({0, 0, 2});  // same azimuth and height as vertex 2
  m.part_labels.push_back(0);
  m.triangles.push_back({1, 3, 4});
  EXPECT_THROW(cylindrical_unwrap(m), InvalidInput);
}

TEST(Mesh, BundledAssetContract) {
  const auto& m = face();
  EXPECT_GT(m.vertex_count(), 0u);
  std::set<int> labels(m.part_labels.begin(), m.part_labels.end());
  EXPECT_EQ(labels.size(), 8u);
  EXPECT_EQ(*labels.begin(), 0);
  EXPECT_EQ(*labels.rbegin(), 7);
  EXPECT_NE(m.find_landmark("left_eye_outer"), nullptr);
  EXPECT_NE(m.find_landmark("right_eye_outer"), nullptr);
}

TEST(Mesh, IndexOutOfRangeRejected) {
  auto m = two_triangle_mesh();
  m.triangles[1][2] = m.vertices.size();
  try {
    parse_mesh(serialize_mesh(m));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("index out of range"), std::string::npos) << e.what();
  }
}

TEST(Mesh, EmptyTrianglesRejected) {
  auto m = two_triangle_mesh();
  m.triangles.clear();
  try {
    parse_mesh(serialize_mesh(m));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no triangles"), std::string::npos) << e.what();
  }
}

TEST(Mesh, OtherInvariantsRejected) {
  auto repeated = two_triangle_mesh();
  repeated.triangles[0] = {0, 0, 1};
  EXPECT_THROW(validate_mesh(repeated), InvalidInput);
  auto flat = two_triangle_mesh();
  flat.vertices[2] = {0.5, 0, 0.5};
  flat.vertices[0] = {0, 0, 1};
  flat.vertices[1] = {1, 0, 0};
  EXPECT_THROW(validate_mesh(flat), InvalidInput);
  auto bad_label = two_triangle_mesh();
  bad_label.part_labels[0] = 8;
  EXPECT_THROW(validate_mesh(bad_label), InvalidInput);
  auto short_labels = two_triangle_mesh();
  short_labels.part_labels.pop_back();
  EXPECT_THROW(validate_mesh(short_labels), InvalidInput);
  auto bad_landmark = two_triangle_mesh();
  bad_landmark.landmarks[0].vertex = 17;
  EXPECT_THROW(validate_mesh(bad_landmark), InvalidInput);
  EXPECT_THROW(parse_mesh("{\"vertices\": [1, 2"), Error);
}

TEST(Mesh, SerializeRoundTrip) {
  const auto back = parse_mesh(serialize_mesh(face()));
  EXPECT_EQ(back.vertices.size(), face().vertices.size());
  for (std::size_t i = 0; i < back.vertices.size(); ++i) {
    EXPECT_EQ(back.vertices[i].x, face().vertices[i].x);
    EXPECT_EQ(back.vertices[i].y, face().vertices[i].y);
    EXPECT_EQ(back.vertices[i].z, face().vertices[i].z);
  }
  EXPECT_EQ(back.triangles, face().triangles);
  EXPECT_EQ(back.part_labels, face().part_labels);
  ASSERT_EQ(back.landmarks.size(), face().landmarks.size());
  for (std::size_t i = 0; i < back.landmarks.size(); ++i) {
    EXPECT_EQ(back.landmarks[i].name, face().landmarks[i].name);
    EXPECT_EQ(back.landmarks[i].vertex, face().landmarks[i].vertex);
  }
}

TEST(LandmarkUv, IsAtlasEntry) {
  const auto atlas = cylindrical_unwrap(face());
  for (const auto& lm : face().landmarks) EXPECT_EQ(landmark_uv(face(), atlas, lm.name), atlas.uv[lm.vertex]);
  EXPECT_THROW(landmark_uv(face(), atlas, "chin99"), InvalidInput);
}

TEST(LandmarkUv, BundledLandmarksDistinct) {
  const auto atlas = cylindrical_unwrap(face());
  const auto& lms = face().landmarks;
  for (std::size_t i = 0; i < lms.size(); ++i)
    for (std::size_t j = i + 1; j < lms.size(); ++j)
      EXPECT_FALSE(atlas.uv[lms[i].vertex] == atlas.uv[lms[j].vertex]) << lms[i].name << " vs " << lms[j].name;
}
