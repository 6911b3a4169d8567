#pragma once

// Bicycle-model vehicle dynamics with a simplified Pacejka lateral tire model,
// polynomial actuator maps, and a parameter-perturbed "virtual plant" with
// first-order actuator lag.

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "rtd/common.hpp"

namespace rtd {

struct VehicleParams {
  double mass = 1500.0;         // kg
  double yaw_inertia = 2500.0;  // kg m^2
  double lf = 1.2;              // m, center of mass to front axle
  double lr = 1.4;              // m, center of mass to rear axle
  // Linear cornering stiffness of each axle (N/rad). The Pacejka stiffness
  // factor B is derived so that B*C*D equals this slope at zero slip.
  double cornering_front = 80000.0;
  double cornering_rear = 90000.0;
  double peak_front = 7100.0;  // Pacejka D, N
  double peak_rear = 6200.0;
  double pacejka_shape = 1.3;  // Pacejka C
  double footprint_length = 4.8;
  double footprint_width = 2.0;
  double v_max = 16.0;  // m/s
  // Slip angles use max(v_x, slip_speed_floor) to avoid the v_x -> 0 singularity.
  double slip_speed_floor = 0.5;

  [[nodiscard]] double stiffness_factor_front() const { return cornering_front / (pacejka_shape * peak_front); }
  [[nodiscard]] double stiffness_factor_rear() const { return cornering_rear / (pacejka_shape * peak_rear); }
  [[nodiscard]] double wheelbase() const { return lf + lr; }

  void validate() const {
    const std::array<double, 11> positive{mass,           yaw_inertia,     lf,
                                          lr,             cornering_front, cornering_rear,
                                          peak_front,     peak_rear,       pacejka_shape,
                                          footprint_length, footprint_width};
    for (double v : positive) require(std::isfinite(v) && v > 0.0, "vehicle parameter must be finite and positive");
    require(std::isfinite(v_max) && v_max > 0.0, "v_max must be positive");
    require(slip_speed_floor > 0.0, "slip_speed_floor must be positive");
  }
};

struct VehicleState {
  double x = 0.0;  // center of mass, m
  double y = 0.0;
  double heading = 0.0;  // rad
  double vx = 0.0;       // body-frame longitudinal speed, m/s
  double vy = 0.0;       // body-frame lateral speed, m/s
  double yaw_rate = 0.0;

  static constexpr std::size_t kSize = 6;

  [[nodiscard]] std::array<double, kSize> to_array() const { return {x, y, heading, vx, vy, yaw_rate}; }
  static VehicleState from_array(const std::array<double, kSize>& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
  [[nodiscard]] Vec2 position() const { return {x, y}; }
  [[nodiscard]] bool finite() const {
    for (double v : to_array())
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool operator==(const VehicleState&) const = default;
};

using StateDerivative = std::array<double, VehicleState::kSize>;

struct ControlInput {
  double throttle = 0.0;        // [0, 1]
  double brake = 0.0;           // normalized master-cylinder pressure, [0, 1]
  double steering_wheel = 0.0;  // rad
  bool operator==(const ControlInput&) const = default;
};

struct ActuatorMap {
  // Drive force F(thr, v) = c[0] + c[1] thr + c[2] v + c[3] thr^2 + c[4] thr v + c[5] v^2.
  // The v-only terms model rolling and aerodynamic resistance.
  std::array<double, 6> throttle_poly{0.0, 5200.0, -12.0, 800.0, -140.0, -0.45};
  // Brake force magnitude B(p) = c[0] + c[1] p + c[2] p^2, opposing motion.
  std::array<double, 3> brake_poly{0.0, 9000.0, 3000.0};
  double steer_ratio = 1.0 / 16.0;  // wheel angle per steering-wheel angle
  double lag_tau = 0.05;            // s
  double steering_wheel_limit = 8.0;  // rad
  // Brake force fades linearly to zero below this speed so braking never reverses the car.
  double brake_fade_speed = 0.2;

  [[nodiscard]] double drive_force(double throttle, double vx) const {
    const auto& c = throttle_poly;
    return c[0] + c[1] * throttle + c[2] * vx + c[3] * throttle * throttle + c[4] * throttle * vx + c[5] * vx * vx;
  }
  [[nodiscard]] double brake_force(double pressure) const {
    const auto& c = brake_poly;
    return c[0] + c[1] * pressure + c[2] * pressure * pressure;
  }
  [[nodiscard]] double brake_fade(double vx) const { return std::clamp(vx / brake_fade_speed, 0.0, 1.0); }

  // Net longitudinal force for realized actuator positions.
  [[nodiscard]] double longitudinal_force(const ControlInput& u, double vx) const {
    const double v = std::max(vx, 0.0);
    return drive_force(u.throttle, v) - brake_force(u.brake) * brake_fade(v);
  }

  [[nodiscard]] double wheel_angle(double steering_wheel) const { return steer_ratio * steering_wheel; }

  // Throttle/brake pair that realizes net force `force` at speed vx (nominal map).
  [[nodiscard]] ControlInput pedals_for_force(double force, double vx) const {
    ControlInput u;
    const double v = std::max(vx, 0.0);
    const double coast = drive_force(0.0, v);
    if (force >= coast) {
      // Solve a t^2 + b t + c = 0 for the throttle.
      const double a = throttle_poly[3];
      const double b = throttle_poly[1] + throttle_poly[4] * v;
      const double c = coast - force;
      double t = 1.0;
      if (std::abs(a) < 1e-12) {
        t = b > 0 ? -c / b : 1.0;
      } else {
        const double disc = b * b - 4.0 * a * c;
        t = disc < 0 ? 1.0 : (-b + std::sqrt(disc)) / (2.0 * a);
      }
      u.throttle = std::clamp(t, 0.0, 1.0);
    } else {
      const double need = (coast - force) / std::max(brake_fade(v), 1e-3);
      const double a = brake_poly[2];
      const double b = brake_poly[1];
      const double c = brake_poly[0] - need;
      double p = 1.0;
      if (std::abs(a) < 1e-12) {
        p = b > 0 ? -c / b : 1.0;
      } else {
        const double disc = b * b - 4.0 * a * c;
        p = disc < 0 ? 1.0 : (-b + std::sqrt(disc)) / (2.0 * a);
      }
      u.brake = std::clamp(p, 0.0, 1.0);
    }
    return u;
  }

  void validate() const {
    require(steer_ratio > 0.0, "steer_ratio must be positive");
    require(lag_tau >= 0.0, "lag_tau must be nonnegative");
    require(steering_wheel_limit > 0.0, "steering_wheel_limit must be positive");
    require(brake_fade_speed > 0.0, "brake_fade_speed must be positive");
    // Monotonicity on the operating envelope: thr in [0,1], v in [0, 30].
    for (double v : {0.0, 10.0, 20.0, 30.0}) {
      const double slope0 = throttle_poly[1] + throttle_poly[4] * v;
      const double slope1 = slope0 + 2.0 * throttle_poly[3];
      require(slope0 >= 0.0 && slope1 >= 0.0, "drive force must be nondecreasing in throttle");
    }
    require(brake_poly[1] >= 0.0 && brake_poly[1] + 2.0 * brake_poly[2] >= 0.0,
            "brake force must be nondecreasing in pressure");
  }
};

inline void validate_input(const ControlInput& u, const ActuatorMap& act) {
  require(u.throttle >= 0.0 && u.throttle <= 1.0, "throttle outside [0,1]");
  require(u.brake >= 0.0 && u.brake <= 1.0, "brake pressure outside [0,1]");
  require(std::abs(u.steering_wheel) <= act.steering_wheel_limit + 1e-12, "steering wheel angle beyond limit");
}

struct TireForces {
  double front = 0.0;
  double rear = 0.0;
};

inline double pacejka(double slip, double stiffness_factor, double shape, double peak) {
  return peak * std::sin(shape * std::atan(stiffness_factor * slip));
}

inline TireForces lateral_tire_forces(double vx, double vy, double yaw_rate, double wheel_angle, const VehicleParams& p) {
  const double v = std::max(vx, p.slip_speed_floor);
  const double slip_front = wheel_angle - std::atan2(vy + p.lf * yaw_rate, v);
  const double slip_rear = std::atan2(p.lr * yaw_rate - vy, v);
  return {pacejka(slip_front, p.stiffness_factor_front(), p.pacejka_shape, p.peak_front),
          pacejka(slip_rear, p.stiffness_factor_rear(), p.pacejka_shape, p.peak_rear)};
}

// Body-frame accelerations (v_x', v_y', omega') for a given net longitudinal
// force and wheel angle.
inline std::array<double, 3> body_accelerations(double vx, double vy, double yaw_rate, double force_x,
                                                double wheel_angle, const VehicleParams& p) {
  const TireForces f = lateral_tire_forces(vx, vy, yaw_rate, wheel_angle, p);
  const double cd = std::cos(wheel_angle);
  const double sd = std::sin(wheel_angle);
  return {force_x / p.mass - f.front * sd / p.mass + vy * yaw_rate,
          f.front * cd / p.mass + f.rear / p.mass - vx * yaw_rate,
          (p.lf * f.front * cd - p.lr * f.rear) / p.yaw_inertia};
}

// Right-hand side of the center-of-mass dynamics.
inline StateDerivative derivative(const VehicleState& s, const ControlInput& u, const VehicleParams& p,
                                  const ActuatorMap& act) {
  require(s.finite(), "non-finite vehicle state");
  require(std::isfinite(p.mass + p.yaw_inertia + p.lf + p.lr + p.cornering_front + p.cornering_rear + p.peak_front +
                        p.peak_rear + p.pacejka_shape),
          "non-finite vehicle parameter");
  const double c = std::cos(s.heading);
  const double sn = std::sin(s.heading);
  const auto acc = body_accelerations(s.vx, s.vy, s.yaw_rate, act.longitudinal_force(u, s.vx),
                                      act.wheel_angle(u.steering_wheel), p);
  return {s.vx * c - s.vy * sn, s.vx * sn + s.vy * c, s.yaw_rate, acc[0], acc[1], acc[2]};
}

// Velocity of a body point under rigid-body motion: the (x, y) rows.
inline Vec2 body_point_velocity(const VehicleState& s, const Vec2& point) {
  const double c = std::cos(s.heading);
  const double sn = std::sin(s.heading);
  return {s.vx * c - s.vy * sn - s.yaw_rate * (point.y - s.y), s.vx * sn + s.vy * c + s.yaw_rate * (point.x - s.x)};
}

inline VehicleState rk4_step(const VehicleState& s, const ControlInput& u, const VehicleParams& p,
                             const ActuatorMap& act, double h) {
  auto add = [](const VehicleState& base, const StateDerivative& d, double scale) {
    auto a = base.to_array();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * d[i];
    return VehicleState::from_array(a);
  };
  const StateDerivative k1 = derivative(s, u, p, act);
  const StateDerivative k2 = derivative(add(s, k1, 0.5 * h), u, p, act);
  const StateDerivative k3 = derivative(add(s, k2, 0.5 * h), u, p, act);
  const StateDerivative k4 = derivative(add(s, k3, h), u, p, act);
  auto a = s.to_array();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  VehicleState out = VehicleState::from_array(a);
  out.vx = std::max(out.vx, 0.0);
  require(out.finite() && std::abs(out.vx) < 1e3 && std::abs(out.vy) < 1e3 && std::abs(out.yaw_rate) < 1e3,
          "integration left the finite state range");
  return out;
}

struct TimedState {
  double t = 0.0;
  VehicleState state;
};

using Trajectory = std::vector<TimedState>;
using InputSchedule = std::function<ControlInput(double)>;

// Fixed-step RK4 over [0, duration]; the input is sampled at the start of each step.
inline Trajectory integrate(const VehicleState& initial, const InputSchedule& schedule, const VehicleParams& p,
                            const ActuatorMap& act, double dt, double duration) {
  require(dt > 0.0, "dt must be positive");
  require(duration >= 0.0, "duration must be nonnegative");
  p.validate();
  const auto steps = static_cast<std::size_t>(std::llround(std::floor(duration / dt + 1e-9)));
  Trajectory traj;
  traj.reserve(steps + 1);
  traj.push_back({0.0, initial});
  VehicleState s = initial;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    s = rk4_step(s, schedule(t), p, act, dt);
    traj.push_back({static_cast<double>(i + 1) * dt, s});
  }
  return traj;
}

// Footprint corners relative to the center of mass, counter-clockwise from rear-right.
inline std::array<Vec2, 4> footprint_offsets(const VehicleParams& p) {
  const double hl = 0.5 * p.footprint_length;
  const double hw = 0.5 * p.footprint_width;
  return {Vec2{-hl, -hw}, Vec2{hl, -hw}, Vec2{hl, hw}, Vec2{-hl, hw}};
}

inline std::array<Vec2, 4> footprint_polygon(const VehicleState& s, const VehicleParams& p) {
  require(s.finite(), "non-finite vehicle state");
  auto corners = footprint_offsets(p);
  for (auto& c : corners) c = s.position() + rotate(c, s.heading);
  return corners;
}

// ---------------------------------------------------------------------------
// Virtual plant

struct PerturbationRanges {
  double mass = 0.05;  // relative half-widths
  double yaw_inertia = 0.05;
  double cornering = 0.10;

  [[nodiscard]] bool zero() const { return mass == 0.0 && yaw_inertia == 0.0 && cornering == 0.0; }
};

// Draws one perturbed parameter set; called once per scenario or rollout.
inline VehicleParams perturb(const VehicleParams& nominal, const PerturbationRanges& r, Rng& rng) {
  VehicleParams p = nominal;
  p.mass *= 1.0 + rng.uniform(-r.mass, r.mass);
  p.yaw_inertia *= 1.0 + rng.uniform(-r.yaw_inertia, r.yaw_inertia);
  p.cornering_front *= 1.0 + rng.uniform(-r.cornering, r.cornering);
  p.cornering_rear *= 1.0 + rng.uniform(-r.cornering, r.cornering);
  return p;
}

struct PlantState {
  VehicleState vehicle;
  ControlInput realized;  // actuator positions after lag
  bool operator==(const PlantState&) const = default;
};

struct PlantConfig {
  int substeps = 4;  // RK4 substeps per plant step
  // A stopped car with no net drive force is held by static friction; without
  // this the slip-speed floor lets tire forces spin a parked car.
  bool standstill_hold = true;
  double standstill_speed = 0.05;  // m/s
};

// First-order lag factor over an interval h.
inline double lag_blend(double h, double tau) { return tau <= 0.0 ? 1.0 : 1.0 - std::exp(-h / tau); }

inline PlantState plant_step(const PlantState& s, const ControlInput& command, const VehicleParams& params,
                             const ActuatorMap& act, double dt, const PlantConfig& cfg = {}) {
  require(dt > 0.0, "dt must be positive");
  validate_input(command, act);
  PlantState out = s;
  const double h = dt / cfg.substeps;
  const double blend = lag_blend(h, act.lag_tau);
  for (int i = 0; i < cfg.substeps; ++i) {
    out.realized.throttle += blend * (command.throttle - out.realized.throttle);
    out.realized.brake += blend * (command.brake - out.realized.brake);
    out.realized.steering_wheel += blend * (command.steering_wheel - out.realized.steering_wheel);
    out.vehicle = rk4_step(out.vehicle, out.realized, params, act, h);
    if (cfg.standstill_hold && out.vehicle.vx <= cfg.standstill_speed && out.realized.brake > 0.0 &&
        act.drive_force(out.realized.throttle, 0.0) <= act.brake_force(out.realized.brake)) {
      out.vehicle.vx = 0.0;
      out.vehicle.vy = 0.0;
      out.vehicle.yaw_rate = 0.0;
    }
  }
  return out;
}

}  // namespace rtd
