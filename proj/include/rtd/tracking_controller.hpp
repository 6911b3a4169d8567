#pragma once

// Gain-scheduled LQ tracking controller. The error dynamics are linearized
// about straight driving at a grid of speeds; each grid point gets the gain of
// a finite-horizon Riccati recursion whose terminal weight is the stationary
// cost-to-go, and the controller interpolates gains in the measured speed.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/reference.hpp"
#include "rtd/vehicle_model.hpp"

namespace rtd {

struct LqTrackerConfig {
  int horizon_steps = 20;
  double dt = 0.01;
  // Error state: longitudinal, lateral, heading, speed, lateral speed, yaw rate.
  std::array<double, 6> state_weights{4.0, 60.0, 300.0, 4.0, 2.0, 30.0};
  // Inputs: net longitudinal force (kN), wheel angle (rad).
  std::array<double, 2> input_weights{0.5, 400.0};
  // Terminal weight: stationary Riccati solution when <= 0, else this multiple of Q.
  double terminal_scale = 0.0;
  double min_speed = 0.5;
  double max_speed = 24.0;
  double speed_step = 0.5;
};

struct Feedforward {
  double wheel_angle = 0.0;
  double lateral_speed = 0.0;
  double force = 0.0;
};

// Steady-state wheel angle and lateral speed holding yaw rate `w` at speed `v`.
inline Feedforward steady_state_feedforward(double v, double w, double accel, const VehicleParams& p) {
  const double vs = std::max(v, p.slip_speed_floor);
  // Linear-tire initial guess, refined by Newton on the Pacejka model.
  double vy = steady_state_vy(w, vs, p);
  const double slip_rear = (p.lr * w - vy) / vs;
  const double f_rear = p.cornering_rear * slip_rear;
  const double f_front = (p.mass * vs * w - f_rear);
  double delta = f_front / p.cornering_front + (vy + p.lf * w) / vs;
  for (int it = 0; it < 6; ++it) {
    auto residual = [&](double vy_, double d_) {
      const auto a = body_accelerations(vs, vy_, w, 0.0, d_, p);
      return std::array<double, 2>{a[1], a[2]};
    };
    const auto r = residual(vy, delta);
    if (std::abs(r[0]) + std::abs(r[1]) < 1e-12) break;
    const double h1 = 1e-6, h2 = 1e-7;
    const auto rv = residual(vy + h1, delta);
    const auto rd = residual(vy, delta + h2);
    const double j00 = (rv[0] - r[0]) / h1, j01 = (rd[0] - r[0]) / h2;
    const double j10 = (rv[1] - r[1]) / h1, j11 = (rd[1] - r[1]) / h2;
    const double det = j00 * j11 - j01 * j10;
    if (std::abs(det) < 1e-14) break;
    vy -= (j11 * r[0] - j01 * r[1]) / det;
    delta -= (-j10 * r[0] + j00 * r[1]) / det;
  }
  const TireForces f = lateral_tire_forces(vs, vy, w, delta, p);
  Feedforward ff;
  ff.wheel_angle = delta;
  ff.lateral_speed = vy;
  ff.force = p.mass * (accel - vy * w) + f.front * std::sin(delta);
  return ff;
}

class LqTracker {
 public:
  using Gain = Eigen::Matrix<double, 2, 6>;

  LqTracker(const VehicleParams& nominal, const ActuatorMap& act, LqTrackerConfig cfg = {})
      : params_(nominal), act_(act), cfg_(cfg) {
    nominal.validate();
    act.validate();
    require(cfg.horizon_steps > 0 && cfg.dt > 0.0, "invalid LQ horizon");
    for (double v = cfg.min_speed; v <= cfg.max_speed + 1e-9; v += cfg.speed_step) gains_.push_back(design_gain(v));
  }

  [[nodiscard]] const VehicleParams& params() const { return params_; }
  [[nodiscard]] const ActuatorMap& actuators() const { return act_; }
  [[nodiscard]] const LqTrackerConfig& config() const { return cfg_; }

  [[nodiscard]] Gain gain_at(double speed) const {
    const double u = (std::clamp(speed, cfg_.min_speed, cfg_.max_speed) - cfg_.min_speed) / cfg_.speed_step;
    const auto i = std::min(static_cast<std::size_t>(u), gains_.size() - 2);
    const double w = std::clamp(u - static_cast<double>(i), 0.0, 1.0);
    return (1.0 - w) * gains_[i] + w * gains_[i + 1];
  }

  // Input that tracks `ref` at time t; saturated to actuator limits.
  [[nodiscard]] ControlInput command(const VehicleState& s, const ReferenceTrajectory& ref, double t) const {
    require(!ref.empty(), "empty reference");
    const ReferencePoint r = ref.at(t);
    const Feedforward ff = steady_state_feedforward(r.speed, r.yaw_rate, r.accel, params_);
    const Vec2 d = rotate(Vec2{s.x - r.x, s.y - r.y}, -r.heading);
    Eigen::Matrix<double, 6, 1> err;
    err << d.x, d.y, wrap_angle(s.heading - r.heading), s.vx - r.speed, s.vy - ff.lateral_speed, s.yaw_rate - r.yaw_rate;
    const Eigen::Vector2d du = -gain_at(s.vx) * err;
    const double force = ff.force + 1000.0 * du(0);
    const double wheel = ff.wheel_angle + du(1);
    ControlInput u = act_.pedals_for_force(force, s.vx);
    u.steering_wheel = std::clamp(wheel / act_.steer_ratio, -act_.steering_wheel_limit, act_.steering_wheel_limit);
    if (ref.braking_at(t) && r.speed <= 0.0) {
      // Hold the car once the braking reference has stopped.
      u.throttle = 0.0;
      u.brake = 1.0;
    }
    return u;
  }

 private:
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Mat62 = Eigen::Matrix<double, 6, 2>;

  Gain design_gain(double v) const {
    // Continuous error dynamics about straight driving at speed v.
    Mat6 a = Mat6::Zero();
    Mat62 b = Mat62::Zero();
    a(0, 3) = 1.0;
    a(1, 2) = v;
    a(1, 4) = 1.0;
    a(2, 5) = 1.0;
    const double h = 1e-6;
    const auto base = body_accelerations(v, 0.0, 0.0, 0.0, 0.0, params_);
    const auto dvy = body_accelerations(v, h, 0.0, 0.0, 0.0, params_);
    const auto dw = body_accelerations(v, 0.0, h, 0.0, 0.0, params_);
    const auto dd = body_accelerations(v, 0.0, 0.0, 0.0, h, params_);
    for (int row = 0; row < 2; ++row) {
      a(4 + row, 4) = (dvy[row + 1] - base[row + 1]) / h;
      a(4 + row, 5) = (dw[row + 1] - base[row + 1]) / h;
      b(4 + row, 1) = (dd[row + 1] - base[row + 1]) / h;
    }
    b(3, 0) = 1000.0 / params_.mass;  // force input in kN

    const double dt = cfg_.dt;
    const Mat6 ad = Mat6::Identity() + a * dt + a * a * (0.5 * dt * dt);
    const Mat62 bd = b * dt + a * b * (0.5 * dt * dt);
    Mat6 q = Mat6::Zero();
    for (int i = 0; i < 6; ++i) q(i, i) = cfg_.state_weights[static_cast<std::size_t>(i)] * dt;
    Eigen::Matrix2d r = Eigen::Matrix2d::Zero();
    r(0, 0) = cfg_.input_weights[0] * dt;
    r(1, 1) = cfg_.input_weights[1] * dt;

    auto riccati = [&](const Mat6& p) -> std::pair<Mat6, Gain> {
      const Eigen::Matrix2d s = r + bd.transpose() * p * bd;
      const Gain k = s.ldlt().solve(bd.transpose() * p * ad);
      Mat6 next = q + ad.transpose() * p * (ad - bd * k);
      next = 0.5 * (next + next.transpose()).eval();
      return {next, k};
    };

    Mat6 p = q;
    if (cfg_.terminal_scale > 0.0) {
      p = cfg_.terminal_scale * q;
    } else {
      for (int it = 0; it < 20000; ++it) {
        const auto [next, k] = riccati(p);
        const double delta = (next - p).cwiseAbs().maxCoeff();
        p = next;
        if (delta < 1e-10 * (1.0 + p.cwiseAbs().maxCoeff())) break;
      }
    }
    Gain k = Gain::Zero();
    for (int step = 0; step < cfg_.horizon_steps; ++step) {
      auto [next, kk] = riccati(p);
      p = next;
      k = kk;
    }
    return k;
  }

  VehicleParams params_;
  ActuatorMap act_;
  LqTrackerConfig cfg_;
  std::vector<Gain> gains_;
};

inline ControlInput track_reference(const VehicleState& s, const ReferenceTrajectory& ref, double t,
                                   const LqTracker& tracker) {
  return tracker.command(s, ref, t);
}

// Plant state in steady cornering at speed v and yaw rate w, actuators at trim.
inline PlantState steady_plant_state(double v, double w, const Pose2& pose, const VehicleParams& p,
                                     const ActuatorMap& act) {
  const Feedforward ff = steady_state_feedforward(v, w, 0.0, p);
  PlantState s;
  s.vehicle = {pose.x, pose.y, pose.heading, v, v > 0.0 ? ff.lateral_speed : 0.0, v > 0.0 ? w : 0.0};
  s.realized = act.pedals_for_force(ff.force, v);
  s.realized.steering_wheel =
      std::clamp(ff.wheel_angle / act.steer_ratio, -act.steering_wheel_limit, act.steering_wheel_limit);
  return s;
}

// Closed-loop rollout of the plant tracking `ref` for `duration` seconds.
// Returns states at every dt (including t = 0).
inline Trajectory rollout(const PlantState& initial, const ReferenceTrajectory& ref, const LqTracker& tracker,
                          const VehicleParams& plant_params, double dt, double duration,
                          std::vector<ControlInput>* commands = nullptr, PlantState* final_state = nullptr) {
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  Trajectory traj;
  traj.reserve(steps + 1);
  PlantState s = initial;
  traj.push_back({0.0, s.vehicle});
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    const ControlInput u = tracker.command(s.vehicle, ref, t);
    if (commands) commands->push_back(u);
    s = plant_step(s, u, plant_params, tracker.actuators(), dt);
    traj.push_back({static_cast<double>(i + 1) * dt, s.vehicle});
  }
  if (final_state) *final_state = s;
  return traj;
}

}  // namespace rtd
