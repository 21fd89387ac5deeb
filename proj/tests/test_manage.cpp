#include <gtest/gtest.h>

#include "fbopt/geometry.hpp"
#include "fbopt/manage.hpp"

using namespace fbopt;

namespace {

int nearest_interior(const PointCloud& c, Vec2 p) {
  int best = -1;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.is_boundary(i)) continue;
    if (best < 0 || norm(c.positions[i] - p) < norm(c.positions[best] - p)) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

TEST(ManagePoints, UniformCloudUnchanged) {
  const PointCloud c = seed_cloud(Square{1.0, {0.0, 0.0}}, 0.1);
  const Managed m = manage_points(c);
  EXPECT_TRUE(m.map.identity());
  EXPECT_EQ(m.cloud.positions, c.positions);
}

TEST(ManagePoints, CloseInteriorPairMerged) {
  const double h = 0.1;
  PointCloud c = seed_cloud(Square{1.0, {0.0, 0.0}}, h);
  const double h_min = default_h_min * h;
  const int i = nearest_interior(c, {0.0, 0.0});
  const Vec2 a = c.positions[i];
  const Vec2 b = a + Vec2{0.3 * h_min, 0.0};
  c.positions.push_back(b);
  c.kind.push_back(interior_kind);
  c.normals.push_back({});
  c.weights.push_back(c.weights[i]);
  c.strip.push_back(0.0);
  c.mobility.push_back(Mobility::free);
  c.slide_dir.push_back({});
  const Managed m = manage_points(c, h_min, default_h_max * h);
  EXPECT_EQ(m.cloud.size(), c.size() - 1);
  const Vec2 mid = 0.5 * (a + b);
  bool found = false;
  for (Vec2 p : m.cloud.positions) found = found || norm(p - mid) < 1e-12;
  EXPECT_TRUE(found);
  EXPECT_GE(min_pairwise_distance(m.cloud), h_min);
}

TEST(ManagePoints, InteriorGapFilled) {
  const double h = 0.1;
  const PointCloud full = seed_cloud(Square{1.0, {0.0, 0.0}}, h);
  const double h_max = default_h_max * h;
  PointCloud c;
  c.segments = full.segments;
  c.spacing = full.spacing;
  // drop interior points within h_max of the centre: a gap of width 2 h_max
  std::vector<int> remap(full.size(), -1);
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (!full.is_boundary(i) && norm(full.positions[i]) < h_max) continue;
    remap[i] = static_cast<int>(c.positions.size());
    c.positions.push_back(full.positions[i]);
    c.kind.push_back(full.kind[i]);
    c.normals.push_back(full.normals[i]);
    c.weights.push_back(full.weights[i]);
    c.strip.push_back(full.strip[i]);
    c.mobility.push_back(full.mobility[i]);
    c.slide_dir.push_back(full.slide_dir[i]);
  }
  for (int r : full.ring) c.ring.push_back(remap[r]);
  const Managed m = manage_points(c, default_h_min * h, h_max);
  EXPECT_GT(m.cloud.size(), c.size());
  bool inside_gap = false;
  for (Vec2 p : m.cloud.positions) inside_gap = inside_gap || norm(p) < h_max;
  EXPECT_TRUE(inside_gap);
}

TEST(ResampleMap, ApplyTransposeIsAdjoint) {
  const double h = 0.1;
  PointCloud c = seed_cloud(Square{1.0, {0.0, 0.0}}, h);
  const int i = nearest_interior(c, {0.1, 0.1});
  c.positions[i] += Vec2{0.07, 0.0};
  const Managed m = manage_points(c);
  ASSERT_FALSE(m.map.identity());
  Field x(c.size()), ybar(m.cloud.size());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::sin(0.7 * k);
  for (std::size_t k = 0; k < ybar.size(); ++k) ybar[k] = std::cos(0.3 * k);
  const Field y = m.map.apply(x);
  const Field xbar = m.map.apply_transpose(ybar);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) lhs += y[k] * ybar[k];
  for (std::size_t k = 0; k < x.size(); ++k) rhs += x[k] * xbar[k];
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST(ManagePoints, BoundaryStaysOnOutline) {
  const double h = 0.1;
  PointCloud c = seed_cloud(Square{1.0, {0.0, 0.0}}, h);
  // stretch the ring: move one boundary point along the bottom edge to open a long chord
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.is_boundary(i) && std::abs(c.positions[i].y + 0.5) < 1e-12 && std::abs(c.positions[i].x - 0.1) < 1e-9) {
      c.positions[i].x = 0.04;
    }
  }
  const Managed m = manage_points(c);
  for (std::size_t i = 0; i < m.cloud.size(); ++i) {
    if (!m.cloud.is_boundary(i)) continue;
    const Vec2 p = m.cloud.positions[i];
    const double off = std::min({std::abs(p.x - 0.5), std::abs(p.x + 0.5), std::abs(p.y - 0.5), std::abs(p.y + 0.5)});
    EXPECT_LE(off, 0.1 * h);
  }
}
