#include <gtest/gtest.h>

#include <cmath>

#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_measurements.hpp"
#include "rtd/vehicle_model.hpp"

using namespace rtd;

namespace {

// Independent evaluation of the bicycle model, written out term by term.
std::array<double, 6> model_oracle(const VehicleState& s, const ControlInput& u, const VehicleParams& p,
                                   const ActuatorMap& a) {
  const double v = std::max(s.vx, p.slip_speed_floor);
  const double delta = u.steering_wheel * a.steer_ratio;
  const double alpha_f = delta - std::atan((s.vy + p.lf * s.yaw_rate) / v);
  const double alpha_r = std::atan((p.lr * s.yaw_rate - s.vy) / v);
  const double Bf = p.cornering_front / (p.pacejka_shape * p.peak_front);
  const double Br = p.cornering_rear / (p.pacejka_shape * p.peak_rear);
  const double Ff = p.peak_front * std::sin(p.pacejka_shape * std::atan(Bf * alpha_f));
  const double Fr = p.peak_rear * std::sin(p.pacejka_shape * std::atan(Br * alpha_r));
  const double vx = std::max(s.vx, 0.0);
  const auto& c = a.throttle_poly;
  const double drive = c[0] + c[1] * u.throttle + c[2] * vx + c[3] * u.throttle * u.throttle + c[4] * u.throttle * vx +
                       c[5] * vx * vx;
  const auto& b = a.brake_poly;
  const double brake = (b[0] + b[1] * u.brake + b[2] * u.brake * u.brake) * std::min(1.0, vx / a.brake_fade_speed);
  const double fx = drive - brake;
  return {s.vx * std::cos(s.heading) - s.vy * std::sin(s.heading),
          s.vx * std::sin(s.heading) + s.vy * std::cos(s.heading),
          s.yaw_rate,
          (fx - Ff * std::sin(delta)) / p.mass + s.vy * s.yaw_rate,
          (Ff * std::cos(delta) + Fr) / p.mass - s.vx * s.yaw_rate,
          (p.lf * Ff * std::cos(delta) - p.lr * Fr) / p.yaw_inertia};
}

}  // namespace

TEST(Derivative, RestWithZeroInputIsEquilibrium) {
  const auto d = derivative({}, {}, VehicleParams{}, ActuatorMap{});
  for (double v : d) EXPECT_EQ(v, 0.0);
}

TEST(Derivative, KinematicRowsRotate) {
  VehicleState s;
  s.heading = kPi / 2;
  s.vx = 10.0;
  const auto d = derivative(s, {}, VehicleParams{}, ActuatorMap{});
  EXPECT_NEAR(d[0], 0.0, 1e-12);
  EXPECT_NEAR(d[1], 10.0, 1e-12);
}

TEST(Derivative, MatchesTermByTermOracle) {
  const VehicleParams p;
  const ActuatorMap a;
  const VehicleState s{0.0, 0.0, 0.1, 12.0, 0.3, 0.05};
  for (const ControlInput u : {ControlInput{0.3, 0.0, 0.5}, ControlInput{0.0, 0.4, -1.2}, ControlInput{1.0, 0.0, 8.0}}) {
    const auto d = derivative(s, u, p, a);
    const auto o = model_oracle(s, u, p, a);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(d[i], o[i], 1e-9 * (1.0 + std::abs(o[i]))) << i;
  }
}

TEST(Derivative, RejectsNonFinite) {
  VehicleState s;
  s.vx = std::nan("");
  EXPECT_THROW(derivative(s, {}, VehicleParams{}, ActuatorMap{}), Error);
  VehicleParams p;
  p.mass = std::numeric_limits<double>::infinity();
  EXPECT_THROW(derivative({}, {}, p, ActuatorMap{}), Error);
}

TEST(Integrate, ZeroDurationAndRest) {
  const VehicleParams p;
  const ActuatorMap a;
  const VehicleState s0{1.0, 2.0, 0.3, 0.0, 0.0, 0.0};
  auto traj = integrate(s0, [](double) { return ControlInput{}; }, p, a, 0.01, 0.0);
  ASSERT_EQ(traj.size(), 1u);
  EXPECT_EQ(traj[0].state, s0);
  traj = integrate(s0, [](double) { return ControlInput{}; }, p, a, 0.01, 1.0);
  ASSERT_EQ(traj.size(), 101u);
  for (const auto& ts : traj) EXPECT_EQ(ts.state, s0);
  EXPECT_THROW(integrate(s0, [](double) { return ControlInput{}; }, p, a, 0.0, 1.0), Error);
  EXPECT_THROW(integrate(s0, [](double) { return ControlInput{}; }, p, a, 0.01, -1.0), Error);
}

TEST(Integrate, ConstantThrottleConvergesUnderStepRefinement) {
  const VehicleParams p;
  const ActuatorMap a;
  const VehicleState s0{0.0, 0.0, 0.0, 5.0, 0.0, 0.0};
  auto in = [](double) { return ControlInput{0.5, 0.0, 0.0}; };
  const double coarse = integrate(s0, in, p, a, 0.01, 2.0).back().state.vx;
  const double fine = integrate(s0, in, p, a, 0.01 / 16, 2.0).back().state.vx;
  EXPECT_NEAR(coarse, fine, 1e-6 * fine);
  EXPECT_GT(coarse, 5.0);
}

TEST(Footprint, AxisAlignedAndRotated) {
  const VehicleParams p;
  auto fp = footprint_polygon({}, p);
  for (const auto& v : fp) {
    EXPECT_NEAR(std::abs(v.x), p.footprint_length / 2, 1e-12);
    EXPECT_NEAR(std::abs(v.y), p.footprint_width / 2, 1e-12);
  }
  VehicleState s;
  s.heading = kPi / 2;
  fp = footprint_polygon(s, p);
  for (const auto& v : fp) {
    EXPECT_NEAR(std::abs(v.y), p.footprint_length / 2, 1e-12);
    EXPECT_NEAR(std::abs(v.x), p.footprint_width / 2, 1e-12);
  }
}

TEST(Footprint, VertexVelocityMatchesFiniteDifference) {
  const VehicleParams p;
  const ActuatorMap a;
  const VehicleState s0{0.0, 0.0, 0.2, 10.0, 0.0, 0.0};
  const double h = 1e-5;
  const VehicleState s1 = rk4_step(s0, {0.2, 0.0, 2.0}, p, a, 0.5);  // some turning state
  const VehicleState s2 = rk4_step(s1, {0.2, 0.0, 2.0}, p, a, h);
  const auto f1 = footprint_polygon(s1, p);
  const auto f2 = footprint_polygon(s2, p);
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec2 fd = (f2[i] - f1[i]) / h;
    const Vec2 an = body_point_velocity(s1, f1[i]);
    EXPECT_NEAR(fd.x, an.x, 1e-3);
    EXPECT_NEAR(fd.y, an.y, 1e-3);
  }
}

TEST(Plant, ZeroLagMatchesModel) {
  const VehicleParams p;
  ActuatorMap a;
  a.lag_tau = 0.0;
  PlantState s;
  s.vehicle = {0, 0, 0, 8.0, 0.0, 0.0};
  const ControlInput u{0.3, 0.0, 1.0};
  const auto next = plant_step(s, u, p, a, 0.01, {4, false});
  const auto ref = integrate(s.vehicle, [&](double) { return u; }, p, a, 0.0025, 0.01).back().state;
  EXPECT_NEAR(next.vehicle.x, ref.x, 1e-12);
  EXPECT_NEAR(next.vehicle.vy, ref.vy, 1e-12);
  EXPECT_NEAR(next.vehicle.yaw_rate, ref.yaw_rate, 1e-12);
}

TEST(Plant, SteeringLagReaches63PercentAtTau) {
  const VehicleParams p;
  const ActuatorMap a;  // lag 0.05
  PlantState s;
  s.vehicle.vx = 5.0;
  for (int i = 0; i < 5; ++i) s = plant_step(s, {0.0, 0.0, 4.0}, p, a, 0.01);
  EXPECT_NEAR(s.realized.steering_wheel / 4.0, 1.0 - std::exp(-1.0), 0.02 * 0.632);
}

TEST(Plant, HeavierCarIsSlower) {
  const VehicleParams p;
  VehicleParams heavy = p;
  heavy.mass *= 1.05;
  const ActuatorMap a;
  PlantState s0;
  s0.vehicle.vx = 5.0;
  PlantState s1 = s0, s2 = s0;
  for (int i = 0; i < 200; ++i) {
    s1 = plant_step(s1, {0.5, 0.0, 0.0}, p, a, 0.01);
    s2 = plant_step(s2, {0.5, 0.0, 0.0}, heavy, a, 0.01);
  }
  EXPECT_LT(s2.vehicle.vx, s1.vehicle.vx);
}

TEST(Plant, DeterministicPerSeed) {
  const VehicleParams p;
  Rng r1(42), r2(42);
  EXPECT_EQ(perturb(p, {}, r1).mass, perturb(p, {}, r2).mass);
}

TEST(Tracker, OnReferenceGivesTrim) {
  const VehicleParams p;
  const ActuatorMap a;
  const LqTracker tr(p, a);
  const ReferenceTrajectory ref = k_reference({0.0, 10.0}, {}, 2.0, p);
  const ControlInput u = tr.command({0, 0, 0, 10.0, 0.0, 0.0}, ref, 0.0);
  EXPECT_LT(std::abs(a.wheel_angle(u.steering_wheel)), 1e-3);
  const double force = a.longitudinal_force(u, 10.0);
  EXPECT_NEAR(force, 0.0, 1.0);
}

TEST(Tracker, LateralOffsetSteersBack) {
  const VehicleParams p;
  const ActuatorMap a;
  const LqTracker tr(p, a);
  const ReferenceTrajectory ref = k_reference({0.0, 10.0}, {}, 2.0, p);
  EXPECT_LT(tr.command({0, 0.5, 0, 10.0, 0, 0}, ref, 0.0).steering_wheel, 0.0);
  EXPECT_GT(tr.command({0, -0.5, 0, 10.0, 0, 0}, ref, 0.0).steering_wheel, 0.0);
}

TEST(Tracker, SpeedErrorShrinks) {
  const VehicleParams p;
  const ActuatorMap a;
  const LqTracker tr(p, a);
  const ReferenceTrajectory ref = k_reference({0.0, 12.0}, {}, 2.1, p);
  const PlantState s0 = steady_plant_state(11.0, 0.0, {}, p, a);
  const auto traj = rollout(s0, ref, tr, p, 0.01, 2.1);
  EXPECT_LT(std::abs(traj.back().state.vx - 12.0), 0.5);
}

TEST(PredictionError, ZeroPerturbationIsZero) {
  const VehicleParams p;
  const ActuatorMap a;
  const LqTracker tr(p, a);
  PredictionErrorConfig cfg;
  cfg.ranges = {0.0, 0.0, 0.0};
  const auto b = measure_prediction_error(20, 0.5, 1, p, tr, cfg);
  for (double e : b.eps) EXPECT_LT(e, 1e-9);
}

TEST(PredictionError, DeterministicAndHeldOutCoverage) {
  const VehicleParams p;
  const ActuatorMap a;
  const LqTracker tr(p, a);
  const auto b1 = measure_prediction_error(200, 0.5, 1, p, tr);
  const auto b2 = measure_prediction_error(200, 0.5, 1, p, tr);
  EXPECT_EQ(b1, b2);
  EXPECT_TRUE(std::isfinite(b1.eps_x) && std::isfinite(b1.eps_y));
  EXPECT_GT(b1.eps_x, 0.0);
  const auto held = prediction_error_trials(200, 0.5, 2, p, tr, {});
  for (std::size_t j = 0; j < 8; ++j) {
    std::size_t in = 0;
    for (const auto& t : held)
      if (t[j] <= b1.eps[j]) ++in;
    EXPECT_GE(in, 198u) << "entry " << j;
  }
}

TEST(StoppingDistance, ZeroMonotoneAndPlausible) {
  const VehicleParams p;
  const ActuatorMap a;
  const LqTracker tr(p, a);
  EXPECT_EQ(measure_stopping_distance(0.0, p, tr), 0.0);
  const double d11 = measure_stopping_distance(11.0, p, tr);
  const double d15 = measure_stopping_distance(15.0, p, tr);
  EXPECT_GE(d15, d11);
  // 4 m/s^2 braking from 11 m/s is 15.1 m; lag adds a little.
  EXPECT_GT(d11, 10.0);
  EXPECT_LT(d11, 25.0);
}
