#pragma once

// Empirical measurements on the virtual plant: model prediction error bounds
// and stopping distance under the braking profile.

#include <array>
#include <cmath>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/reference.hpp"
#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_model.hpp"

namespace rtd {

// Ordered as x_c, y_c, x, y (worst footprint corner), heading, v_x, v_y, yaw rate.
struct PredictionErrorBound {
  std::array<double, 8> eps{};
  double eps_x = 0.0;
  double eps_y = 0.0;

  [[nodiscard]] double radius() const { return std::hypot(eps_x, eps_y); }
  bool operator==(const PredictionErrorBound&) const = default;
};

struct PredictionErrorConfig {
  PerturbationRanges ranges;
  double inflation = 0.10;
  Interval speed{3.0, 15.0};
  double yaw_rate_limit = 0.25;
  double dt = 0.01;
};

namespace detail {

// Elementwise |a - b| over the 8 model states.
inline std::array<double, 8> state_deviation(const VehicleState& a, const VehicleState& b, const VehicleParams& p) {
  std::array<double, 8> d{};
  d[0] = std::abs(a.x - b.x);
  d[1] = std::abs(a.y - b.y);
  const auto ca = footprint_polygon(a, p);
  const auto cb = footprint_polygon(b, p);
  for (std::size_t i = 0; i < 4; ++i) {
    d[2] = std::max(d[2], std::abs(ca[i].x - cb[i].x));
    d[3] = std::max(d[3], std::abs(ca[i].y - cb[i].y));
  }
  d[4] = std::abs(wrap_angle(a.heading - b.heading));
  d[5] = std::abs(a.vx - b.vx);
  d[6] = std::abs(a.vy - b.vy);
  d[7] = std::abs(a.yaw_rate - b.yaw_rate);
  return d;
}

// One paired trial: the perturbed plant is driven by the tracking controller
// and its command sequence is replayed open loop on the nominal model.
inline std::array<double, 8> prediction_trial(std::uint64_t seed, double duration, const VehicleParams& nominal,
                                              const LqTracker& tracker, const PredictionErrorConfig& cfg) {
  Rng rng(seed);
  const VehicleParams plant = perturb(nominal, cfg.ranges, rng);
  const double v0 = rng.uniform(cfg.speed);
  const double w0 = rng.uniform(-cfg.yaw_rate_limit, cfg.yaw_rate_limit);
  const TrajectoryParam k{rng.uniform(-cfg.yaw_rate_limit, cfg.yaw_rate_limit),
                          std::clamp(v0 + rng.uniform(-1.0, 1.0), cfg.speed.lo, cfg.speed.hi)};
  const PlantState start = steady_plant_state(v0, w0, {}, nominal, tracker.actuators());
  const ReferenceTrajectory ref = k_reference(k, {}, duration + cfg.dt, nominal);
  std::vector<ControlInput> commands;
  const Trajectory truth = rollout(start, ref, tracker, plant, cfg.dt, duration, &commands);

  std::array<double, 8> worst{};
  PlantState model = start;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    model = plant_step(model, commands[i], nominal, tracker.actuators(), cfg.dt);
    const auto d = state_deviation(model.vehicle, truth[i + 1].state, nominal);
    for (std::size_t j = 0; j < 8; ++j) worst[j] = std::max(worst[j], d[j]);
  }
  return worst;
}

}  // namespace detail

inline PredictionErrorBound bound_from_maxima(const std::array<double, 8>& worst, double inflation) {
  PredictionErrorBound b;
  for (std::size_t j = 0; j < 8; ++j) b.eps[j] = worst[j] * (1.0 + inflation);
  b.eps_x = std::max(b.eps[0], b.eps[2]);
  b.eps_y = std::max(b.eps[1], b.eps[3]);
  return b;
}

// Per-trial maxima, in trial order. Trials use stream split_seed(seed, i).
inline std::vector<std::array<double, 8>> prediction_error_trials(std::size_t n_trials, double duration,
                                                                  std::uint64_t seed, const VehicleParams& nominal,
                                                                  const LqTracker& tracker,
                                                                  const PredictionErrorConfig& cfg = {}) {
  require(n_trials > 0, "n_trials must be positive");
  require(duration > 0.0, "duration must be positive");
  std::vector<std::array<double, 8>> out(n_trials);
  parallel_for(n_trials, [&](std::size_t i) {
    out[i] = detail::prediction_trial(split_seed(seed, i), duration, nominal, tracker, cfg);
  });
  return out;
}

inline PredictionErrorBound measure_prediction_error(std::size_t n_trials, double duration, std::uint64_t seed,
                                                     const VehicleParams& nominal, const LqTracker& tracker,
                                                     const PredictionErrorConfig& cfg = {}) {
  std::array<double, 8> worst{};
  for (const auto& t : prediction_error_trials(n_trials, duration, seed, nominal, tracker, cfg))
    for (std::size_t j = 0; j < 8; ++j) worst[j] = std::max(worst[j], t[j]);
  return bound_from_maxima(worst, cfg.inflation);
}

struct StoppingResult {
  double distance = 0.0;
  double time = 0.0;
  Trajectory path;
};

// Plant tracks the braking profile from steady straight driving at speed v,
// braking from t = 0, until v_x < stop_speed.
inline StoppingResult stopping_run(double v, const VehicleParams& plant_params, const LqTracker& tracker,
                                   const BrakingConfig& braking = {}, double dt = 0.01, double stop_speed = 0.1) {
  require(v >= 0.0, "speed must be nonnegative");
  StoppingResult r;
  PlantState s = steady_plant_state(v, 0.0, {}, tracker.params(), tracker.actuators());
  r.path.push_back({0.0, s.vehicle});
  if (v < stop_speed) return r;
  const ReferenceTrajectory ref = braking_profile({0.0, v}, 0.0, {}, tracker.params(), braking);
  const double limit = 4.0 * ref.duration() + 5.0;
  double t = 0.0;
  while (s.vehicle.vx >= stop_speed) {
    require(t < limit, "vehicle failed to stop");
    const ControlInput u = tracker.command(s.vehicle, ref, t);
    const Vec2 before = s.vehicle.position();
    s = plant_step(s, u, plant_params, tracker.actuators(), dt);
    t += dt;
    r.distance += distance(before, s.vehicle.position());
    r.path.push_back({t, s.vehicle});
  }
  r.time = t;
  return r;
}

inline double measure_stopping_distance(double v, const VehicleParams& params, const LqTracker& tracker,
                                        const BrakingConfig& braking = {}) {
  require(v <= params.v_max + 1e-9, "speed above v_max");
  return stopping_run(v, params, tracker, braking).distance;
}

}  // namespace rtd
