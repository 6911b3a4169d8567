#include <gtest/gtest.h>

#include <cmath>

#include "rtd/geometry.hpp"

using namespace rtd;

namespace {

ObstaclePolygon unit_square() {
  ObstaclePolygon p;
  p.vertices = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  return p;
}

// Distance from q to a polygon's region (0 inside).
double region_distance(const Polygon& poly, const Vec2& q) {
  if (point_in_polygon(poly, q)) return 0.0;
  double d = 1e300;
  for (std::size_t i = 0; i < poly.size(); ++i)
    d = std::min(d, point_segment_distance(q, poly[i], poly[(i + 1) % poly.size()]));
  return d;
}

}  // namespace

TEST(BufferPolygon, UnitSquareAreaAndPieces) {
  const auto bb = buffer_polygon(unit_square(), 0.05, 2.0);
  ASSERT_EQ(bb.segments.size(), 4u);
  ASSERT_EQ(bb.arcs.size(), 4u);
  for (const auto& s : bb.segments) EXPECT_NEAR(s.length(), 1.0, 1e-12);
  for (const auto& a : bb.arcs) EXPECT_NEAR(a.sweep, kPi / 2, 1e-12);
  EXPECT_NEAR(enclosed_area(bb), 1.0 + 4 * 0.05 + kPi * 0.05 * 0.05, 1e-12);
}

TEST(BufferPolygon, SmallBufferCollapsesToEdges) {
  const auto bb = buffer_polygon(unit_square(), 1e-9, 2.0);
  for (const auto& a : bb.arcs) EXPECT_LT(a.chord(), 1e-8);
  EXPECT_NEAR(enclosed_area(bb), 1.0, 1e-8);
}

TEST(BufferPolygon, RejectsBadBuffer) {
  EXPECT_THROW(buffer_polygon(unit_square(), 0.0, 2.0), Error);
  EXPECT_THROW(buffer_polygon(unit_square(), 1.0, 2.0), Error);
}

TEST(BufferPolygon, MembershipMatchesDistanceOracle) {
  Rng rng(4);
  for (int shape = 0; shape < 5; ++shape) {
    ObstaclePolygon p;
    // random convex polygon
    std::vector<Vec2> pts;
    for (int i = 0; i < 12; ++i) pts.push_back({rng.uniform(-2, 2), rng.uniform(-1, 1)});
    p.vertices = convex_hull(pts);
    const double b = 0.05;
    const auto bb = buffer_polygon(p, b, 2.0);
    int mismatches = 0;
    for (int i = 0; i < 2000; ++i) {
      const Vec2 q{rng.uniform(-2.3, 2.3), rng.uniform(-1.3, 1.3)};
      const double d = region_distance(p.vertices, q);
      if (std::abs(d - b) < 1e-9) continue;  // exactly on the boundary
      if (inside_boundary(bb, q) != (d <= b)) ++mismatches;
    }
    EXPECT_EQ(mismatches, 0);
  }
}

TEST(SampleCurve, Counts) {
  EXPECT_EQ(sample_curve(LineSegment{{0, 0}, {1, 0}}, 0.1).size(), 11u);
  EXPECT_EQ(sample_curve(LineSegment{{2, 3}, {2, 3}}, 0.1).size(), 1u);
  const CircularArc quarter{{0, 0}, 0.05, 0.0, kPi / 2};
  const auto pts = sample_curve(quarter, 2 * 0.05 * std::sin(kPi / 4));
  EXPECT_EQ(pts.size(), 2u);
  EXPECT_LE(distance(pts[0], pts[1]), 2 * 0.05 * std::sin(kPi / 4) + 1e-12);
}

TEST(Discretize, SpacingConstants) {
  const auto sp = lemma2_spacings(0.05);
  EXPECT_DOUBLE_EQ(sp.line, 0.1);
  EXPECT_NEAR(sp.arc, 0.0707107, 1e-6);
}

TEST(Discretize, UnitSquareCount) {
  const auto bb = buffer_polygon(unit_square(), 0.05, 2.0);
  const auto raw = discretize(bb, lemma2_spacings(0.05), 0, false);
  EXPECT_EQ(raw.points.size(), 4u * 11u + 4u * 2u);
  const auto dd = discretize(bb, lemma2_spacings(0.05), 0, true);
  EXPECT_EQ(dd.points.size(), 4u * 11u);  // arc end points coincide with segment end points
  EXPECT_TRUE(discretize_all({}, 0.05, 0.0, 0.0, 2.0).empty());
}

TEST(Discretize, GapsRespectSpacing) {
  Rng rng(8);
  const auto poly = random_polygon(rng, 7, 1.0, 3.0);
  const auto d = discretize_obstacle(poly, 0.05, 0.02, 0.04, 2.0);
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    const Vec2 a = d.points[i], b = d.points[(i + 1) % d.points.size()];
    EXPECT_LE(distance(a, b), 0.1 + 1e-9);
  }
}

TEST(Conservativeness, DerivedSpacingHasNoViolations) {
  Rng rng(17);
  for (int i = 0; i < 3; ++i) {
    const auto poly = random_polygon(rng, 6, 0.5, 3.0);
    const auto bb = buffer_polygon(poly, 0.05, 2.0);
    const auto xp = discretize(bb, lemma2_spacings(0.05)).points;
    EXPECT_EQ(conservativeness_oracle(poly, xp, 2.0, 4.8, 3000, 100 + i), 0u);
  }
}

TEST(Conservativeness, CoarseSpacingIsCaught) {
  Rng rng(17);
  std::size_t total = 0;
  for (int i = 0; i < 3; ++i) {
    const auto poly = random_polygon(rng, 6, 0.5, 3.0);
    const auto bb = buffer_polygon(poly, 0.05, 2.0);
    const auto sp = lemma2_spacings(0.05);
    const auto xp = discretize(bb, {10 * sp.line, 10 * sp.arc}).points;
    total += conservativeness_oracle(poly, xp, 2.0, 4.8, 3000, 100 + i);
  }
  EXPECT_GE(total, 1u);
}

TEST(Polygons, IntersectionAndContainment) {
  const Polygon a = oriented_rectangle({0, 0, 0}, 2, 2);
  const Polygon b = oriented_rectangle({1.5, 0, 0.3}, 2, 2);
  const Polygon c = oriented_rectangle({5, 0, 0}, 2, 2);
  EXPECT_TRUE(polygons_intersect(a, b));
  EXPECT_FALSE(polygons_intersect(a, c));
  EXPECT_TRUE(polygons_intersect(a, oriented_rectangle({0, 0, 0}, 0.5, 0.5)));  // nested
  EXPECT_TRUE(point_in_polygon(a, {0.5, 0.5}));
  EXPECT_FALSE(point_in_polygon(a, {1.5, 0.5}));
}
