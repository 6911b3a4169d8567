#pragma once

// Trajectory-producing model (constant yaw rate / speed arcs), the
// disturbance-augmented trajectory-tracking model, and the braking reference.

#include <cmath>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/vehicle_model.hpp"

namespace rtd {

struct TrajectoryParam {
  double k1 = 0.0;  // desired yaw rate, rad/s
  double k2 = 0.0;  // desired longitudinal speed, m/s
  bool operator==(const TrajectoryParam&) const = default;
};

struct ParamBox {
  Interval k1{-0.25, 0.25};
  Interval k2{3.0, 5.0};
  double dk2_limit = 1.0;  // max commanded speed change per planning iteration
  double k1_limit = 0.25;  // max commanded yaw-rate magnitude

  [[nodiscard]] bool contains(const TrajectoryParam& k) const { return k1.contains(k.k1) && k2.contains(k.k2); }

  void validate() const {
    require(std::isfinite(k1.lo) && std::isfinite(k1.hi) && k1.lo <= k1.hi, "invalid k1 interval");
    require(std::isfinite(k2.lo) && std::isfinite(k2.hi) && k2.lo <= k2.hi, "invalid k2 interval");
    require(k2.lo > 0.0, "k2 must be positive");
    require(dk2_limit > 0.0 && k1_limit > 0.0, "change limits must be positive");
  }
  bool operator==(const ParamBox&) const = default;
};

// Steady-state lateral speed from linear tire forces.
inline double steady_state_vy(double yaw_rate, double speed, const VehicleParams& p) {
  return yaw_rate * (p.lr - p.mass * p.lf * speed * speed / (p.cornering_rear * (p.lr + p.lf)));
}

inline double steady_state_vy(const TrajectoryParam& k, const VehicleParams& p) { return steady_state_vy(k.k1, k.k2, p); }

namespace detail {
// sin(a)/a and (1 - cos a)/a with series near zero.
inline double sinc(double a) { return std::abs(a) < 1e-6 ? 1.0 - a * a / 6.0 : std::sin(a) / a; }
inline double cosc(double a) {
  if (std::abs(a) < 1e-6) return a / 2.0 - a * a * a / 24.0;
  const double s = std::sin(0.5 * a);
  return 2.0 * s * s / a;
}
}  // namespace detail

// Rotation center implied by the producing-model field for k1 != 0.
inline Vec2 rotation_center(const TrajectoryParam& k, const Vec2& com0, const VehicleParams& p) {
  require(k.k1 != 0.0, "rotation center undefined for zero yaw rate");
  const double vy = steady_state_vy(k, p);
  return com0 + Vec2{-vy / k.k1, k.k2 / k.k1};
}

// Exact flow of the producing model: z' = (k2 - k1 (y - yc0), vy* + k1 (x - xc0)).
inline Vec2 desired_point(const TrajectoryParam& k, const Vec2& z0, const Vec2& com0, double t, const VehicleParams& p) {
  const double vy = steady_state_vy(k, p);
  const double a = k.k1 * t;
  const double s = t * detail::sinc(a);
  const double c = t * detail::cosc(a);
  const Vec2 rel = rotate(z0 - com0, a);
  return com0 + rel + Vec2{s * k.k2 - c * vy, c * k.k2 + s * vy};
}

// Producing-model velocity field evaluated at an arbitrary point.
inline Vec2 desired_velocity(const TrajectoryParam& k, const Vec2& z, const Vec2& com0, const VehicleParams& p) {
  const double vy = steady_state_vy(k, p);
  return {k.k2 - k.k1 * (z.y - com0.y), vy + k.k1 * (z.x - com0.x)};
}

// Points at t = i*dt for i = 0..round(T/dt).
inline std::vector<Vec2> desired_trajectory(const TrajectoryParam& k, const Vec2& z0, const Vec2& com0, double T,
                                            double dt, const VehicleParams& p) {
  require(T > 0.0 && dt > 0.0, "T and dt must be positive");
  const auto n = static_cast<std::size_t>(std::llround(T / dt));
  std::vector<Vec2> out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out.push_back(desired_point(k, z0, com0, static_cast<double>(i) * dt, p));
  return out;
}

// Piecewise-constant disturbance d: [0, T] -> [-1, 1]^2 on a uniform switch grid.
struct DisturbanceSignal {
  double switch_dt = 0.05;
  std::vector<Vec2> levels;

  [[nodiscard]] Vec2 at(double t) const {
    require(!levels.empty(), "empty disturbance signal");
    const auto i = static_cast<std::size_t>(std::max(0.0, std::floor(t / switch_dt + 1e-9)));
    return levels[std::min(i, levels.size() - 1)];
  }

  static DisturbanceSignal constant(Vec2 d, double T, double switch_dt = 0.05) {
    DisturbanceSignal s;
    s.switch_dt = switch_dt;
    s.levels.assign(static_cast<std::size_t>(std::ceil(T / switch_dt - 1e-9)) + 1, d);
    return s;
  }

  static DisturbanceSignal bang_bang(Rng& rng, double T, double switch_dt = 0.05) {
    DisturbanceSignal s;
    s.switch_dt = switch_dt;
    const auto n = static_cast<std::size_t>(std::ceil(T / switch_dt - 1e-9)) + 1;
    s.levels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.levels.push_back({rng.sign(), rng.sign()});
    return s;
  }

  static DisturbanceSignal uniform(Rng& rng, double T, double switch_dt = 0.05) {
    DisturbanceSignal s;
    s.switch_dt = switch_dt;
    const auto n = static_cast<std::size_t>(std::ceil(T / switch_dt - 1e-9)) + 1;
    s.levels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.levels.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    return s;
  }

  [[nodiscard]] bool bounded() const {
    for (const auto& l : levels)
      if (std::abs(l.x) > 1.0 || std::abs(l.y) > 1.0) return false;
    return true;
  }
};

// One RK4 step of the trajectory-tracking model z' = f_des(z, k) + g(t) * d(t).
// The disturbance is sampled at the step start, so steps should align with its grid.
// G must provide rate_x(t), rate_y(t) and horizon().
template <typename G>
Vec2 tracking_model_step(const Vec2& z, const TrajectoryParam& k, const DisturbanceSignal& d, const G& g, double t,
                         double dt, const Vec2& com0, const VehicleParams& p) {
  require(t >= -1e-12 && t + dt <= g.horizon() + 1e-9, "error function undefined beyond its horizon");
  const Vec2 dv = d.at(t);
  auto f = [&](const Vec2& zz, double tt) {
    return desired_velocity(k, zz, com0, p) + Vec2{g.rate_x(tt) * dv.x, g.rate_y(tt) * dv.y};
  };
  const Vec2 a = f(z, t);
  const Vec2 b = f(z + a * (0.5 * dt), t + 0.5 * dt);
  const Vec2 c = f(z + b * (0.5 * dt), t + 0.5 * dt);
  const Vec2 e = f(z + c * dt, t + dt);
  return z + (a + b * 2.0 + c * 2.0 + e) * (dt / 6.0);
}

// ---------------------------------------------------------------------------
// Time-indexed references consumed by the tracking controller.

struct ReferencePoint {
  double t = 0.0;
  double x = 0.0;  // center of mass
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;          // longitudinal
  double lateral_speed = 0.0;  // body-frame
  double yaw_rate = 0.0;
  double accel = 0.0;  // longitudinal acceleration command
};

struct ReferenceTrajectory {
  double dt = 0.01;
  std::vector<ReferencePoint> points;
  double brake_start = -1.0;  // < 0 when the reference never brakes

  [[nodiscard]] bool empty() const { return points.empty(); }
  [[nodiscard]] double duration() const { return points.empty() ? 0.0 : points.back().t; }

  // Linear interpolation; holds the end points outside the covered span.
  [[nodiscard]] ReferencePoint at(double t) const {
    require(!points.empty(), "empty reference");
    if (t <= points.front().t) return points.front();
    if (t >= points.back().t) {
      ReferencePoint r = points.back();
      r.t = t;
      return r;
    }
    const double u = (t - points.front().t) / dt;
    const auto i = std::min(static_cast<std::size_t>(u), points.size() - 2);
    const double w = u - static_cast<double>(i);
    const ReferencePoint& a = points[i];
    const ReferencePoint& b = points[i + 1];
    auto mix = [w](double p, double q) { return p + w * (q - p); };
    return {t,
            mix(a.x, b.x),
            mix(a.y, b.y),
            a.heading + w * wrap_angle(b.heading - a.heading),
            mix(a.speed, b.speed),
            mix(a.lateral_speed, b.lateral_speed),
            mix(a.yaw_rate, b.yaw_rate),
            w < 0.5 ? a.accel : b.accel};
  }

  [[nodiscard]] bool braking_at(double t) const { return brake_start >= 0.0 && t >= brake_start - 1e-12; }
};

struct BrakingConfig {
  double max_decel = 4.0;  // m/s^2
  double dt = 0.01;        // reference sample spacing
  int substeps = 10;       // integration substeps per sample
};

// Reference that tracks k from `start` until t_start, then ramps the commanded
// speed to zero at the configured deceleration while holding the path
// curvature k1/k2. Covers [0, t_start + k2/max_decel] plus one sample.
// t_start < 0 gives a reference that never brakes, covering [0, horizon].
inline ReferenceTrajectory braking_profile(const TrajectoryParam& k, double t_start, const Pose2& start,
                                           const VehicleParams& p, const BrakingConfig& cfg, double horizon = 0.0) {
  require(k.k2 > 0.0, "k2 must be positive");
  ReferenceTrajectory ref;
  ref.dt = cfg.dt;
  ref.brake_start = t_start;
  const double curvature = k.k1 / k.k2;
  const double end = t_start >= 0.0 ? t_start + k.k2 / cfg.max_decel : horizon;
  const auto n = static_cast<std::size_t>(std::ceil(end / cfg.dt - 1e-9)) + 1;
  ref.points.reserve(n + 1);

  auto speed_at = [&](double t) {
    if (t_start < 0.0 || t <= t_start) return k.k2;
    return std::max(0.0, k.k2 - cfg.max_decel * (t - t_start));
  };

  // Body pose evolves as heading' = curvature * v, position' = R(heading) (v, vy*(v)).
  Vec2 pos = start.position();
  double heading = start.heading;
  const double h = cfg.dt / cfg.substeps;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * cfg.dt;
    const double v = speed_at(t);
    const double w = curvature * v;
    const bool braking = t_start >= 0.0 && t >= t_start - 1e-12 && v > 0.0;
    ref.points.push_back({t, pos.x, pos.y, heading, v, steady_state_vy(w, v, p), w, braking ? -cfg.max_decel : 0.0});
    for (int j = 0; j < cfg.substeps; ++j) {
      // midpoint rule on the closed-form speed ramp
      const double tm = t + (j + 0.5) * h;
      const double vm = speed_at(tm);
      const double wm = curvature * vm;
      const double hm = heading + 0.5 * h * wm;
      pos += rotate(Vec2{vm, steady_state_vy(wm, vm, p)}, hm) * h;
      heading += h * wm;
    }
  }
  return ref;
}

// Pure tracking reference for k starting at `start` over [0, horizon].
inline ReferenceTrajectory k_reference(const TrajectoryParam& k, const Pose2& start, double horizon,
                                       const VehicleParams& p, double dt = 0.01) {
  require(horizon > 0.0, "horizon must be positive");
  ReferenceTrajectory ref;
  ref.dt = dt;
  const auto n = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  ref.points.reserve(n + 1);
  const double vy = steady_state_vy(k, p);
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const Vec2 local = desired_point(k, {0.0, 0.0}, {0.0, 0.0}, t, p);
    const Vec2 w = start.to_world(local);
    ref.points.push_back({t, w.x, w.y, start.heading + k.k1 * t, k.k2, vy, k.k1, 0.0});
  }
  return ref;
}

// Braking reference for a plan that starts at `start`; braking begins at t_start.
inline ReferenceTrajectory braking_reference(const TrajectoryParam& k, double t_start, const Pose2& start,
                                             const VehicleParams& p, const BrakingConfig& cfg = {}) {
  require(t_start > 0.0, "braking start must be positive");
  return braking_profile(k, t_start, start, p, cfg);
}

// Arc length travelled by the reference center of mass after `from`.
inline double reference_arc_length(const ReferenceTrajectory& ref, double from = 0.0) {
  double len = 0.0;
  for (std::size_t i = 1; i < ref.points.size(); ++i) {
    if (ref.points[i].t <= from + 1e-12) continue;
    len += std::hypot(ref.points[i].x - ref.points[i - 1].x, ref.points[i].y - ref.points[i - 1].y);
  }
  return len;
}

}  // namespace rtd
