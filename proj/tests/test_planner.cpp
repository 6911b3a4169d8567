#include <gtest/gtest.h>

#include <cmath>

#include "rtd/planner.hpp"
#include "support.hpp"

using namespace rtd;
using rtd::testing::entry_for;
using rtd::testing::shared_offline;

namespace {

PlanningContext context_at(double speed, double yaw_rate = 0.0) {
  PlanningContext ctx;
  ctx.frs = &entry_for(speed);
  ctx.speed = speed;
  ctx.yaw_rate = yaw_rate;
  ctx.params = shared_offline().nominal;
  ctx.k_prev = {yaw_rate, speed};
  return ctx;
}

std::vector<Vec2> discretized(const std::vector<ObstaclePolygon>& obs) {
  const auto& a = shared_offline();
  return discretize_all(obs, 0.05, a.eps.eps_x, a.eps.eps_y, a.nominal.footprint_width);
}

ObstaclePolygon box(double x, double y, double l, double w, double heading = 0.0) {
  ObstaclePolygon p;
  p.vertices = oriented_rectangle({x, y, heading}, l, w);
  return p;
}

}  // namespace

TEST(Horizon, FormulaExamples) {
  EXPECT_NEAR(compute_horizon(0.5, 15.4, 11.0), 1.9, 1e-12);
  EXPECT_EQ(compute_horizon(0.5, 0.0, 11.0), 0.5);
  const auto& a = shared_offline();
  const auto& top = a.ranges.back();
  EXPECT_NEAR(compute_horizon(0.5, top.d_stop, 15.0), top.T, 1e-12);
  EXPECT_THROW(compute_horizon(0.0, 1.0, 1.0), Error);
}

TEST(SensorHorizon, FormulaExamples) {
  EXPECT_NEAR(compute_sensor_horizon(1.9, 0.5, 11.0, 0.12, 0.15), 2.4 * 11.0 + 2.0 * std::hypot(0.12, 0.15), 1e-12);
  EXPECT_NEAR(compute_sensor_horizon(1.9, 0.5, 11.0, 0.12, 0.15), 26.784, 1e-3);
  EXPECT_NEAR(compute_sensor_horizon(0.5, 0.5, 11.0, 0.0, 0.0), 11.0, 1e-12);
  const auto& a = shared_offline();
  const auto fp = feasibility_params(a.library, a.eps.eps_x, a.eps.eps_y);
  EXPECT_GT(fp.d_sense, 0.0);
  EXPECT_EQ(fp.ranges.size(), a.library.entries.size());
}

TEST(CostJ, ZeroAtEndpointAndQuadratic) {
  const auto ctx = context_at(8.0);
  const TrajectoryParam k{0.1, 8.2};
  Waypoint wp{trajectory_endpoint(k, ctx.frs->T, ctx.params), 0.0, 8.2};
  EXPECT_NEAR(cost_J(k, wp, *ctx.frs, ctx.params), 0.0, 1e-20);
  double prev = 0.0;
  for (double dy : {1.0, 2.0, 3.0}) {
    Waypoint moved = wp;
    moved.position.y += dy;
    const double J = cost_J(k, moved, *ctx.frs, ctx.params);
    EXPECT_GT(J, prev);
    EXPECT_NEAR(J, dy * dy, 1e-9);
    prev = J;
  }
}

TEST(Solve, EmptyObstaclesMatchesGrid) {
  auto ctx = context_at(8.0, 0.02);
  ctx.waypoint = {{14.0, 2.5}, 0.0, 8.5};
  const auto r = solve(ctx);
  ASSERT_EQ(r.outcome, PlanOutcome::NewPlan);
  const auto g = grid_solve(ctx, 101, 101);
  EXPECT_LE(r.cost, g.cost + 1e-9);
  const KBox b = feasible_box(*ctx.frs, ctx.speed, ctx.yaw_rate, PlannerConfig{});
  EXPECT_NEAR(r.k.k1, g.k.k1, b.k1.width() / 100.0 + 1e-9);
  EXPECT_NEAR(r.k.k2, g.k.k2, b.k2.width() / 100.0 + 1e-9);
}

TEST(Solve, WallAheadBrakes) {
  auto ctx = context_at(8.0);
  ctx.waypoint = {{20.0, 0.0}, 0.0, 8.0};
  ctx.obstacles = discretized({box(10.0, 0.0, 0.5, 12.0)});
  const auto r = solve(ctx);
  EXPECT_EQ(r.outcome, PlanOutcome::Brake);
  EXPECT_EQ(grid_solve(ctx, 51, 51).outcome, PlanOutcome::Brake);
}

TEST(Solve, TwoObstacleScenario) {
  // obstacles ahead-left and ahead-right, gap in the middle
  auto ctx = context_at(11.1, 0.027);
  ctx.waypoint = {{24.0, 0.0}, 0.0, 11.0};
  ctx.obstacles = discretized({box(16.0, 4.5, 4.5, 2.0), box(18.0, -4.5, 4.5, 2.0)});
  const auto r = solve(ctx);
  ASSERT_EQ(r.outcome, PlanOutcome::NewPlan);
  EXPECT_LE(r.max_w, 1.0 - 1e-6);
  const auto g = grid_solve(ctx, 201, 201);
  ASSERT_EQ(g.outcome, PlanOutcome::NewPlan);
  EXPECT_LE(r.cost, 1.01 * g.cost + 1e-9);
  EXPECT_LE(r.solve_time, ctx.tau_plan);
}

TEST(Solve, RandomContextsNearGridOptimum) {
  const auto& a = shared_offline();
  Rng rng(77);
  int feasible = 0;
  for (int t = 0; t < 25; ++t) {
    const auto& f = a.library.entries[rng.index(a.library.entries.size())];
    PlanningContext ctx;
    ctx.frs = &f;
    ctx.params = a.nominal;
    ctx.speed = rng.uniform(f.speed_range);
    ctx.yaw_rate = rng.uniform(-0.1, 0.1);
    const double reach = f.speed_range.hi * f.T;
    std::vector<ObstaclePolygon> obs;
    for (std::size_t i = 0, n = 1 + rng.index(2); i < n; ++i)
      obs.push_back(box(rng.uniform(4.0, 1.2 * reach), rng.uniform(-8.0, 8.0), rng.uniform(1, 4), rng.uniform(1, 2.5),
                        rng.uniform(-0.5, 0.5)));
    ctx.obstacles = discretized(obs);
    ctx.waypoint = {{rng.uniform(0.5, 1.5) * reach, rng.uniform(-4, 4)}, 0.0, rng.uniform(f.speed_range)};
    const auto r = solve(ctx);
    const auto g = grid_solve(ctx, 101, 101);
    if (r.outcome == PlanOutcome::NewPlan) {
      EXPECT_LE(r.max_w, 1.0 - 1e-6);
    }
    if (g.outcome != PlanOutcome::NewPlan) continue;
    ++feasible;
    ASSERT_EQ(r.outcome, PlanOutcome::NewPlan) << "context " << t;
    EXPECT_LE(r.cost, 1.01 * g.cost + 1e-9) << "context " << t;
  }
  EXPECT_GT(feasible, 10);
}

TEST(Solve, DeterministicWithEvalBudget) {
  auto ctx = context_at(11.1, 0.027);
  ctx.waypoint = {{24.0, 1.0}, 0.0, 11.0};
  ctx.obstacles = discretized({box(16.0, 3.6, 4.5, 2.0)});
  PlannerConfig cfg;
  cfg.eval_budget = 200;
  const auto a = solve(ctx, cfg);
  const auto b = solve(ctx, cfg);
  EXPECT_EQ(a.outcome, b.outcome);
  EXPECT_EQ(a.k.k1, b.k.k1);
  EXPECT_EQ(a.k.k2, b.k.k2);
  EXPECT_EQ(a.evaluations, b.evaluations);
  EXPECT_LE(a.evaluations, 200u + cfg.max_inner);
}

TEST(Solve, ExhaustedBudgetWithoutIncumbentBrakes) {
  auto ctx = context_at(8.0);
  ctx.waypoint = {{20.0, 0.0}, 0.0, 8.0};
  PlannerConfig cfg;
  cfg.eval_budget = 1;
  ctx.obstacles = discretized({box(10.0, 0.0, 0.5, 12.0)});
  EXPECT_EQ(solve(ctx, cfg).outcome, PlanOutcome::Brake);
  PlanningContext bad = ctx;
  bad.frs = nullptr;
  EXPECT_THROW(solve(bad), Error);
}

TEST(PlanFrame, RoundTripAndOrientation) {
  EXPECT_EQ(to_plan_frame({0, 0, 0}).to_local(Vec2{3.0, -2.0}).x, 3.0);
  Rng rng(2);
  const Pose2 pose{12.5, -40.0, 2.3};
  const auto fr = to_plan_frame(pose);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec2 q{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    worst = std::max(worst, distance(fr.to_world(fr.to_local(q)), q));
  }
  EXPECT_LT(worst, 1e-12);
  // ahead-left of a heading-aligned vehicle
  const Vec2 ahead_left = pose.position() + Vec2{std::cos(2.3), std::sin(2.3)} * 10.0 + Vec2{-std::sin(2.3), std::cos(2.3)} * 2.0;
  const Vec2 l = fr.to_local(ahead_left);
  EXPECT_NEAR(l.x, 10.0, 1e-9);
  EXPECT_NEAR(l.y, 2.0, 1e-9);
}
