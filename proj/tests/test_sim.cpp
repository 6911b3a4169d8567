#include <gtest/gtest.h>

#include <cmath>

#include "rtd/sim.hpp"
#include "support.hpp"

using namespace rtd;
using rtd::testing::shared_offline;

namespace {

Track straight(double length = 300.0) { return Track({{length, 0.0}}, 4.0); }

VehicleState moving(double x, double y, double vx, double heading = 0.0) {
  VehicleState s;
  s.x = x;
  s.y = y;
  s.heading = heading;
  s.vx = vx;
  return s;
}

}  // namespace

TEST(Waypoint, ClearLaneAndFloor) {
  const Track t = straight();
  const auto a = high_level_waypoint(t, 20.0, 10.0, 1, {});
  EXPECT_NEAR(a.s, 35.0, 1e-12);
  EXPECT_EQ(a.lane, 1);
  EXPECT_FALSE(a.switched);
  EXPECT_NEAR(a.waypoint.position.x, 35.0, 1e-9);
  EXPECT_NEAR(a.waypoint.position.y, 2.0, 1e-9);
  EXPECT_NEAR(a.waypoint.speed, 11.0, 1e-12);
  EXPECT_NEAR(high_level_waypoint(t, 20.0, 0.0, 1, {}).s, 30.0, 1e-12);
}

TEST(Waypoint, SwitchesAroundBlockingObstacle) {
  const Track t = straight();
  const Polygon obs = oriented_rectangle({28.0, 2.0, 0.0}, 4.0, 2.0);  // 8 m ahead on the lane center
  const auto r = high_level_waypoint(t, 20.0, 10.0, 1, {obs});
  EXPECT_TRUE(r.switched);
  EXPECT_EQ(r.lane, -1);
  EXPECT_NEAR(r.waypoint.position.y, -2.0, 1e-9);
  // both lanes blocked: keep the lane
  const Polygon other = oriented_rectangle({30.0, -2.0, 0.0}, 4.0, 2.0);
  EXPECT_EQ(high_level_waypoint(t, 20.0, 10.0, 1, {obs, other}).lane, 1);
}

TEST(Waypoint, SlowsForCurves) {
  const Track t({{50.0, 0.0}, {60.0, 0.05}, {200.0, 0.0}}, 4.0);
  const auto r = high_level_waypoint(t, 45.0, 10.0, 1, {});
  EXPECT_LT(r.waypoint.speed, 11.0);
  EXPECT_GE(r.waypoint.speed, 4.0);
}

TEST(Rrt, EmptyFieldMovesTowardWaypoint) {
  const auto& a = shared_offline();
  const Track t = straight();
  RrtConfig cfg;
  cfg.expansions = 300;
  const RrtWorld w = make_rrt_world(t, {}, a.nominal, cfg);
  const VehicleState start = moving(10.0, 2.0, 8.0);
  const Waypoint wp{{25.0, 2.0}, 0.0, 8.0};
  int closer = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = rrt_plan(cfg, start, w, wp, a.nominal, a.actuators, seed, 0.0);
    if (!r.brake && distance(r.path.back().position(), wp.position) < distance(start.position(), wp.position)) ++closer;
  }
  EXPECT_GE(closer, 95);
}

TEST(Rrt, NodesStayValidAndDeterministic) {
  const auto& a = shared_offline();
  const Track t = straight();
  RrtConfig cfg;
  cfg.expansions = 400;
  ObstaclePolygon o;
  o.vertices = oriented_rectangle({30.0, 2.0, 0.0}, 4.0, 2.0);
  const RrtWorld w = make_rrt_world(t, {o}, a.nominal, cfg);
  const VehicleState start = moving(10.0, 2.0, 8.0);
  const Waypoint wp{{40.0, 2.0}, 0.0, 8.0};
  const auto r = rrt_plan(cfg, start, w, wp, a.nominal, a.actuators, 5, 0.0);
  for (const auto& tree : r.trees)
    for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
      ASSERT_EQ(tree.nodes[i].edge.size(), 50u);
      for (const auto& s : tree.nodes[i].edge) {
        EXPECT_LE(std::abs(t.project(s.position()).d), w.road_limit);
        for (const auto& b : w.buffered) EXPECT_FALSE(point_in_polygon(b, s.position()));
      }
    }
  const auto again = rrt_plan(cfg, start, w, wp, a.nominal, a.actuators, 5, 0.0);
  ASSERT_EQ(r.path.size(), again.path.size());
  for (std::size_t i = 0; i < r.path.size(); ++i) EXPECT_EQ(r.path[i].x, again.path[i].x);
}

TEST(Rrt, BoxedInStartBrakes) {
  const auto& a = shared_offline();
  const Track t = straight();
  RrtConfig cfg;
  cfg.expansions = 200;
  ObstaclePolygon o;
  o.vertices = oriented_rectangle({14.0, 0.0, 0.0}, 1.0, 8.0);
  const RrtWorld w = make_rrt_world(t, {o}, a.nominal, cfg);
  EXPECT_TRUE(rrt_plan(cfg, moving(10.0, 0.0, 12.0), w, {{40.0, 0.0}, 0.0, 8.0}, a.nominal, a.actuators, 1, 0.0).brake);
}

TEST(Adjudicate, SyntheticLogs) {
  const Track t = straight(100.0);
  const VehicleParams p;
  SimLog lap;
  lap.track_length = 100.0;
  for (int i = 0; i <= 100; ++i) lap.states.push_back({i * 0.1, moving(i, 2.0, 10.0), false, double(i), double(i)});
  lap.plans.push_back({0.0, true, 0.0, 10.0, 0.2});
  lap.plans.push_back({0.5, true, 0.0, 10.0, 0.4});
  auto m = adjudicate(lap, t, 2.5, {}, p);
  EXPECT_EQ(m.percent_complete, 100.0);
  EXPECT_EQ(m.crashes, 0);
  EXPECT_EQ(m.safe_stops, 0);
  EXPECT_NEAR(m.planning_time_avg, 0.3, 1e-12);
  EXPECT_NEAR(m.planning_time_max, 0.4, 1e-12);

  ObstaclePolygon o;
  o.vertices = oriented_rectangle({50.0, 2.0, 0.0}, 2.0, 2.0);
  EXPECT_EQ(adjudicate(lap, t, 2.5, {o}, p).crashes, 1);

  SimLog stop;
  stop.track_length = 100.0;
  stop.states.push_back({0.0, moving(0.0, 2.0, 5.0), false, 0.0, 0.0});
  stop.states.push_back({5.0, moving(31.0, 2.0, 0.0), true, 31.0, 31.0});
  m = adjudicate(stop, t, 2.5, {}, p);
  EXPECT_EQ(m.safe_stops, 1);
  EXPECT_EQ(m.crashes, 0);
  EXPECT_NEAR(m.percent_complete, 31.0, 1e-9);

  SimLog off;
  off.states.push_back({0.0, moving(10.0, 7.0, 5.0), false, 10.0, 10.0});
  EXPECT_EQ(adjudicate(off, t, 2.5, {}, p).crashes, 1);
}

TEST(Scenario, RoadBlockEndsInSafeStop) {
  const auto& a = shared_offline();
  ScenarioConfig cfg;
  cfg.initial_speed = 11.0;
  const auto r = run_scenario(cfg, road_block_track(), a.sim_context());
  EXPECT_EQ(r.metrics.crashes, 0);
  EXPECT_EQ(r.metrics.safe_stops, 1);
  EXPECT_EQ(r.metrics.end, EndReason::SafeStop);
  EXPECT_LE(r.metrics.planning_time_max, cfg.tau_plan);
  for (const auto& pl : r.log.plans) {
    if (pl.new_plan) {
      EXPECT_LE(pl.max_w, 1.0 - 1e-6);
    }
  }
}

TEST(Scenario, ObstacleFreeLap) {
  const auto& a = shared_offline();
  TrackConfig tc;
  tc.n_obstacles = 0;
  const auto spec = generate_track(6, tc);
  ScenarioConfig cfg;
  const auto r = run_scenario(cfg, spec, a.sim_context());
  EXPECT_EQ(r.metrics.percent_complete, 100.0);
  EXPECT_EQ(r.metrics.crashes, 0);
  EXPECT_EQ(r.metrics.end, EndReason::LapComplete);
}

TEST(Scenario, DeterministicInCountedMode) {
  const auto& a = shared_offline();
  const auto spec = generate_track(2);
  for (const PlannerKind kind : {PlannerKind::Rtd, PlannerKind::Rrt}) {
    ScenarioConfig cfg;
    cfg.planner = kind;
    cfg.max_time = 20.0;
    cfg.planner_eval_budget = 2000;
    cfg.rrt.expansions = 300;
    const auto x = run_scenario(cfg, spec, a.sim_context());
    const auto y = run_scenario(cfg, spec, a.sim_context());
    ASSERT_EQ(x.log.states.size(), y.log.states.size());
    EXPECT_EQ(x.log.states.back().state.x, y.log.states.back().state.x);
    EXPECT_EQ(x.metrics.percent_complete, y.metrics.percent_complete);
    EXPECT_EQ(x.metrics.end, y.metrics.end);
  }
}

TEST(Scenario, RejectsMissingLibrary) {
  const auto& a = shared_offline();
  SimContext ctx = a.sim_context();
  ctx.library = nullptr;
  EXPECT_THROW(run_scenario(ScenarioConfig{}, road_block_track(), ctx), Error);
}

TEST(Csv, RowsAndSummary) {
  SimMetrics m;
  m.percent_complete = 50.0;
  m.end = EndReason::SafeStop;
  m.safe_stops = 1;
  const std::string row = metrics_csv_row(3, "rtd", "realtime", m);
  EXPECT_NE(row.find("safe_stop"), std::string::npos);
  SimMetrics lap;
  lap.percent_complete = 100.0;
  lap.planning_time_max = 0.3;
  const auto s = summarize({m, lap});
  EXPECT_NEAR(s.percent_avg, 75.0, 1e-12);
  EXPECT_EQ(s.safe_stops, 1);
  EXPECT_NEAR(s.planning_time_max, 0.3, 1e-12);
}
