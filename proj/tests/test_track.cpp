#include <gtest/gtest.h>

#include <cmath>

#include "rtd/track.hpp"

using namespace rtd;

TEST(GenerateTrack, DeterministicPerSeed) {
  const auto a = generate_track(3);
  const auto b = generate_track(3);
  ASSERT_EQ(a.obstacles.size(), b.obstacles.size());
  EXPECT_EQ(a.track.primitives(), b.track.primitives());
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) EXPECT_EQ(a.obstacles[i], b.obstacles[i]);
  const auto c = generate_track(4);
  EXPECT_NE(a.track.primitives(), c.track.primitives());
}

TEST(GenerateTrack, BandsHold) {
  const TrackConfig cfg;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto spec = generate_track(seed);
    const double L = spec.track.length();
    EXPECT_GE(L, 1015.0);
    EXPECT_LE(L, 1057.0);
    const auto err = spec.track.closure_error();
    EXPECT_LT(std::hypot(err.x, err.y), 1e-6);
    EXPECT_LT(std::abs(err.heading), 1e-9);
    ASSERT_EQ(spec.obstacles.size(), 20u);
    EXPECT_GE(spec.obstacles.front().s, cfg.first_obstacle_min);
    EXPECT_LE(spec.obstacles.front().s, cfg.first_obstacle_max);
    for (std::size_t i = 0; i < spec.obstacles.size(); ++i) {
      const auto& o = spec.obstacles[i];
      EXPECT_TRUE(o.lane == 1 || o.lane == -1);
      EXPECT_TRUE(cfg.obstacle_length.contains(o.length));
      EXPECT_TRUE(cfg.obstacle_width.contains(o.width));
      if (i > 0) {
        const double gap = o.s - spec.obstacles[i - 1].s;
        EXPECT_GE(gap, cfg.obstacle_spacing.lo - 1e-9);
        EXPECT_LE(gap, cfg.obstacle_spacing.hi + 1e-9);
      }
      // centered in its lane
      const auto pr = spec.track.project(o.pose.position());
      EXPECT_NEAR(pr.d, spec.track.lane_offset(o.lane), 1e-6);
    }
    EXPECT_LE(spec.obstacles.back().s + 0.5 * spec.obstacles.back().length, L - cfg.end_clearance);
  }
}

TEST(GenerateTrack, InfeasibleSpacingRejected) {
  TrackConfig cfg;
  cfg.obstacle_spacing = {60.0, 70.0};
  EXPECT_THROW(generate_track(1, cfg), Error);
}

TEST(Track, ProjectRoundTrip) {
  const auto spec = generate_track(5);
  const auto& t = spec.track;
  for (double s = 1.0; s < t.length() - 1.0; s += 37.3) {
    for (double d : {-3.0, 0.0, 1.5}) {
      const auto pr = t.project(t.point(s, d));
      EXPECT_NEAR(pr.s, s, 1e-6);
      EXPECT_NEAR(pr.d, d, 1e-6);
    }
  }
}

TEST(RoadBoundary, StripsStayOffTheRoad) {
  const auto spec = generate_track(2);
  const auto& t = spec.track;
  const auto strips = road_boundary_obstacles(t, 0.5);
  ASSERT_FALSE(strips.empty());
  for (const auto& p : strips) {
    EXPECT_NO_THROW(p.validate());
    for (const auto& v : p.vertices) EXPECT_GE(std::abs(t.project(v).d), t.half_width() - 1e-6);
  }
  // points just inside the road edge are free, points beyond the edge are covered
  int covered = 0, probes = 0;
  for (double s = 0.5; s < t.length(); s += 13.1) {
    const Vec2 in = t.point(s, t.half_width() - 0.05);
    const Vec2 out = t.point(s, -(t.half_width() + 0.25));
    bool hit_in = false, hit_out = false;
    for (const auto& p : strips) {
      hit_in = hit_in || point_in_polygon(p.vertices, in);
      hit_out = hit_out || point_in_polygon(p.vertices, out);
    }
    EXPECT_FALSE(hit_in);
    covered += hit_out ? 1 : 0;
    ++probes;
  }
  EXPECT_EQ(covered, probes);
}

TEST(SensorScan, MemoryOnlyGrows) {
  const auto spec = generate_track(1);
  ObstacleMemory mem;
  const Pose2 start = spec.track.pose(0.0, spec.track.lane_offset(1));
  auto seen = sensor_scan(spec, start, 10.0, mem);
  EXPECT_TRUE(seen.empty());
  const Pose2 near = spec.track.pose(spec.obstacles[0].s - 20.0);
  seen = sensor_scan(spec, near, 30.0, mem);
  ASSERT_FALSE(seen.empty());
  EXPECT_EQ(seen.front(), 0u);
  const auto again = sensor_scan(spec, start, 1.0, mem);
  EXPECT_EQ(again, seen);
}
