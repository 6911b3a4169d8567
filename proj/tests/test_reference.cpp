#include <gtest/gtest.h>

#include <cmath>

#include "rtd/error_function.hpp"
#include "rtd/reference.hpp"
#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_measurements.hpp"

using namespace rtd;

namespace {

// Constant-rate error function for the tracking-model tests.
struct ConstG {
  double gx = 0.0, gy = 0.0, T = 3.0;
  double rate_x(double) const { return gx; }
  double rate_y(double) const { return gy; }
  double horizon() const { return T; }
};

}  // namespace

TEST(SteadyStateVy, ZeroYawRateAndRoot) {
  const VehicleParams p;
  EXPECT_EQ(steady_state_vy({0.0, 12.0}, p), 0.0);
  const double root = std::sqrt(p.lr * p.cornering_rear * (p.lr + p.lf) / (p.mass * p.lf));
  for (double k1 : {-0.2, 0.05, 0.28}) EXPECT_NEAR(steady_state_vy({k1, root}, p), 0.0, 1e-12);
}

TEST(SteadyStateVy, HandEvaluation) {
  const VehicleParams p;
  // 0.28 * (1.4 - 1500 * 1.2 * 100 / (90000 * 2.6))
  const double expected = 0.28 * (1.4 - 1500.0 * 1.2 * 100.0 / (90000.0 * 2.6));
  EXPECT_NEAR(steady_state_vy({0.28, 10.0}, p), expected, 1e-12);
}

TEST(DesiredTrajectory, StraightLine) {
  const VehicleParams p;
  const auto traj = desired_trajectory({0.0, 12.0}, {}, {}, 2.1, 0.01, p);
  EXPECT_NEAR(traj.back().x, 25.2, 1e-9);
  EXPECT_NEAR(traj.back().y, 0.0, 1e-12);
  for (const auto& z : traj) EXPECT_NEAR(z.y, 0.0, 1e-12);
}

TEST(DesiredTrajectory, StaysOnCircle) {
  const VehicleParams p;
  const TrajectoryParam k{0.1, 10.0};
  const Vec2 com{0.0, 0.0};
  const Vec2 c = rotation_center(k, com, p);
  for (const Vec2 z0 : {Vec2{0, 0}, Vec2{2.4, 1.0}, Vec2{-2.4, -1.0}}) {
    const double r = distance(z0, c);
    for (const auto& z : desired_trajectory(k, z0, com, 3.0, 0.01, p)) EXPECT_NEAR(distance(z, c), r, 1e-9);
  }
}

TEST(DesiredTrajectory, MatchesFineRk4) {
  const VehicleParams p;
  const TrajectoryParam k{0.28, 10.0};
  const Vec2 z0{2.4, 1.0};
  Vec2 z = z0;
  const double h = 1e-4;
  auto f = [&](const Vec2& q) { return desired_velocity(k, q, {}, p); };
  for (int i = 0; i < 20000; ++i) {
    const Vec2 a = f(z), b = f(z + a * (h / 2)), c = f(z + b * (h / 2)), d = f(z + c * h);
    z = z + (a + b * 2.0 + c * 2.0 + d) * (h / 6);
  }
  const Vec2 exact = desired_point(k, z0, {}, 2.0, p);
  EXPECT_NEAR(z.x, exact.x, 1e-6);
  EXPECT_NEAR(z.y, exact.y, 1e-6);
}

TEST(TrackingModel, ZeroErrorReducesToDesired) {
  const VehicleParams p;
  const TrajectoryParam k{0.1, 8.0};
  Rng rng(3);
  const auto d = DisturbanceSignal::bang_bang(rng, 2.0);
  Vec2 z{1.0, 0.5};
  for (int i = 0; i < 200; ++i) z = tracking_model_step(z, k, d, ConstG{}, i * 0.01, 0.01, {}, p);
  const Vec2 exact = desired_point(k, {1.0, 0.5}, {}, 2.0, p);
  EXPECT_NEAR(z.x, exact.x, 1e-9);
  EXPECT_NEAR(z.y, exact.y, 1e-9);
}

TEST(TrackingModel, SignSymmetryForEqualRates) {
  const VehicleParams p;
  const TrajectoryParam k{0.0, 10.0};
  const ConstG g{0.3, 0.3, 3.0};
  const auto up = DisturbanceSignal::constant({1, 1}, 2.0);
  const auto down = DisturbanceSignal::constant({-1, -1}, 2.0);
  Vec2 a{}, b{};
  for (int i = 0; i < 200; ++i) {
    a = tracking_model_step(a, k, up, g, i * 0.01, 0.01, {}, p);
    b = tracking_model_step(b, k, down, g, i * 0.01, 0.01, {}, p);
  }
  const Vec2 mid = desired_point(k, {}, {}, 2.0, p);
  EXPECT_NEAR((a + b).x / 2, mid.x, 1e-9);
  EXPECT_NEAR((a + b).y / 2, mid.y, 1e-9);
}

TEST(TrackingModel, StraightBangBangWithinIntegral) {
  // With k1 = 0 the flow is a pure translation, so the error is exactly the
  // integral of g * d and must stay inside the integral of g.
  const VehicleParams p;
  const TrajectoryParam k{0.0, 10.0};
  ErrorFunction g;
  g.coeffs_x = {0.2, 0.1, 0.0};
  g.coeffs_y = {0.1, 0.05, 0.02};
  g.T = 2.0;
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = DisturbanceSignal::bang_bang(rng, 2.0);
    Vec2 z{};
    for (int i = 0; i < 200; ++i) z = tracking_model_step(z, k, d, g, i * 0.01, 0.01, {}, p);
    const Vec2 des = desired_point(k, {}, {}, 2.0, p);
    EXPECT_LE(std::abs(z.x - des.x), g.integral_x(2.0) + 1e-9);
    EXPECT_LE(std::abs(z.y - des.y), g.integral_y(2.0) + 1e-9);
  }
}

TEST(TrackingModel, RejectsBeyondHorizon) {
  const VehicleParams p;
  const auto d = DisturbanceSignal::constant({1, 1}, 2.0);
  EXPECT_THROW(tracking_model_step({}, {0.0, 10.0}, d, ConstG{0, 0, 1.0}, 0.995, 0.01, {}, p), Error);
}

TEST(BrakingReference, ArcLengthOfBrakingSegment) {
  const VehicleParams p;
  const auto ref = braking_reference({0.0, 11.0}, 0.5, {}, p);
  EXPECT_NEAR(reference_arc_length(ref, 0.5), 11.0 * 11.0 / 8.0, 0.02);
  EXPECT_NEAR(reference_arc_length(ref), 5.5 + 15.125, 0.02);
  EXPECT_TRUE(ref.braking_at(0.5));
  EXPECT_FALSE(ref.braking_at(0.49));
}

TEST(BrakingReference, LateStartHasNoExtraTail) {
  // Braking starting after the reference has already ended adds nothing past
  // the stop: the speed profile after the stop is zero.
  const VehicleParams p;
  const auto ref = braking_profile({0.0, 5.0}, 1.0, {}, p, {});
  EXPECT_EQ(ref.points.back().speed, 0.0);
  const double stop_t = 1.0 + 5.0 / 4.0;
  EXPECT_NEAR(reference_arc_length(ref, stop_t), 0.0, 1e-9);
}

TEST(BrakingReference, PlantStopsWithinStoppingDistance) {
  const VehicleParams p;
  const ActuatorMap a;
  const LqTracker tr(p, a);
  const double d_stop = measure_stopping_distance(11.0, p, tr);
  const auto ref = braking_profile({0.0, 11.0}, 0.0, {}, p, {});
  PlantState s = steady_plant_state(11.0, 0.0, {}, p, a);
  double t = 0.0;
  while (s.vehicle.vx >= 0.1 && t < 10.0) {
    s = plant_step(s, tr.command(s.vehicle, ref, t), p, a, 0.01);
    t += 0.01;
  }
  EXPECT_LT(s.vehicle.vx, 0.1);
  EXPECT_NEAR(s.vehicle.x, d_stop, 0.01 * d_stop);
}
