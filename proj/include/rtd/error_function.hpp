#pragma once

// Tracking-error functions: time polynomials of degree 2 that bound the rate
// at which the plant's body points drift from the desired trajectory, fitted
// per speed range from closed-loop rollouts.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/lp.hpp"
#include "rtd/reference.hpp"
#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_measurements.hpp"
#include "rtd/vehicle_model.hpp"

namespace rtd {

struct ErrorFunction {
  std::array<double, 3> coeffs_x{};  // g(t) = c0 + c1 t + c2 t^2
  std::array<double, 3> coeffs_y{};
  Interval speed_range{};
  double T = 0.0;
  double margin = 0.1;   // relative inflation applied after the fit
  double floor = 1e-3;   // additive floor, m/s
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  std::size_t n_rollouts = 0;

  [[nodiscard]] double horizon() const { return T; }
  [[nodiscard]] static double poly(const std::array<double, 3>& c, double t) { return c[0] + t * (c[1] + t * c[2]); }
  [[nodiscard]] static double poly_integral(const std::array<double, 3>& c, double t) {
    return t * (c[0] + t * (c[1] / 2.0 + t * c[2] / 3.0));
  }
  [[nodiscard]] double rate_x(double t) const { return poly(coeffs_x, t); }
  [[nodiscard]] double rate_y(double t) const { return poly(coeffs_y, t); }
  [[nodiscard]] double integral_x(double t) const { return poly_integral(coeffs_x, t); }
  [[nodiscard]] double integral_y(double t) const { return poly_integral(coeffs_y, t); }

  // Scaled copy (used for conservatism experiments).
  [[nodiscard]] ErrorFunction scaled(double s) const {
    ErrorFunction g = *this;
    for (auto& c : g.coeffs_x) c *= s;
    for (auto& c : g.coeffs_y) c *= s;
    return g;
  }

  [[nodiscard]] bool nonnegative(std::size_t grid = 1000) const {
    for (std::size_t i = 0; i <= grid; ++i) {
      const double t = T * static_cast<double>(i) / static_cast<double>(grid);
      if (rate_x(t) < 0.0 || rate_y(t) < 0.0) return false;
    }
    return true;
  }
  bool operator==(const ErrorFunction&) const = default;
};

struct ErrorSample {
  double t = 0.0;
  double rate_x = 0.0;
  double rate_y = 0.0;
};

struct ErrorSampleSet {
  std::vector<ErrorSample> samples;
  std::string description;
};

// Everything a closed-loop error rollout needs.
struct ErrorModel {
  VehicleParams nominal;
  const LqTracker* tracker = nullptr;
  PerturbationRanges perturbation;
  PredictionErrorBound eps;
  BrakingConfig braking;
  double dk2_limit = 1.0;
  double k1_limit = 0.25;
  // Max |k1 - yaw rate| at plan start; <= 0 disables the limit.
  double dk1_limit = 0.0;
  double preroll = 0.5;              // s of tracking before the plan starts
  double braking_preroll_fraction = 0.2;
  double dt = 0.01;
  bool estimation_error = true;
  bool perturb_plant = true;

  void validate() const {
    require(tracker != nullptr, "error model needs a tracker");
    nominal.validate();
    require(dk2_limit > 0.0 && k1_limit > 0.0 && dt > 0.0 && preroll >= 0.0, "invalid error model");
  }
};

// Initial condition of one plan: plant state in plan-local coordinates
// (true center of mass at the origin, heading 0) plus the estimated start pose
// the controller believes in.
struct PlanStart {
  PlantState plant;
  Pose2 estimate;
  VehicleParams plant_params;
  TrajectoryParam k;
};

namespace detail {

inline PlanStart draw_plan_start(const Interval& range, const ErrorModel& em, Rng& rng,
                                 std::optional<TrajectoryParam> k = std::nullopt) {
  PlanStart ps;
  ps.plant_params = em.perturb_plant ? perturb(em.nominal, em.perturbation, rng) : em.nominal;
  ps.k = {rng.uniform(-em.k1_limit, em.k1_limit), rng.uniform(range)};
  if (k) ps.k = *k;
  const double v0 = std::max(0.5, ps.k.k2 + rng.uniform(-em.dk2_limit, em.dk2_limit));
  const LqTracker& tr = *em.tracker;

  PlantState s;
  if (em.preroll > 0.0) {
    auto near_k1 = [&] {
      if (em.dk1_limit <= 0.0) return rng.uniform(-em.k1_limit, em.k1_limit);
      return rng.uniform(std::max(-em.k1_limit, ps.k.k1 - em.dk1_limit), std::min(em.k1_limit, ps.k.k1 + em.dk1_limit));
    };
    const double w_prev = near_k1();
    const bool braking = rng.uniform() < em.braking_preroll_fraction;
    ReferenceTrajectory ref;
    if (braking) {
      const double v_start = v0 + em.braking.max_decel * em.preroll;
      s = steady_plant_state(v_start, w_prev, {}, em.nominal, tr.actuators());
      ref = braking_profile({w_prev, v_start}, 0.0, {}, em.nominal, em.braking);
    } else {
      const double v_start = std::max(0.5, v0 + rng.uniform(-em.dk2_limit, em.dk2_limit));
      const TrajectoryParam kp{near_k1(), v0};
      s = steady_plant_state(v_start, w_prev, {}, em.nominal, tr.actuators());
      ref = k_reference(kp, {}, em.preroll + em.dt, em.nominal, em.dt);
    }
    rollout(s, ref, tr, ps.plant_params, em.dt, em.preroll, nullptr, &s);
    if (em.dk1_limit > 0.0 && !k) {
      ps.k.k1 = std::clamp(ps.k.k1, std::max(-em.k1_limit, s.vehicle.yaw_rate - em.dk1_limit),
                           std::min(em.k1_limit, s.vehicle.yaw_rate + em.dk1_limit));
    }
  } else {
    s = steady_plant_state(v0, rng.uniform(-em.k1_limit, em.k1_limit), {}, em.nominal, tr.actuators());
  }
  // Re-express in the plan-local frame.
  s.vehicle.x = 0.0;
  s.vehicle.y = 0.0;
  s.vehicle.heading = 0.0;
  ps.plant = s;
  if (em.estimation_error) {
    ps.estimate = {rng.uniform(-em.eps.eps_x, em.eps.eps_x), rng.uniform(-em.eps.eps_y, em.eps.eps_y),
                   rng.uniform(-em.eps.eps[4], em.eps.eps[4])};
  }
  return ps;
}

// Body points used for the max over the footprint: 4 corners and the center.
inline std::array<Vec2, 5> body_points(const VehicleParams& p) {
  const auto c = footprint_offsets(p);
  return {c[0], c[1], c[2], c[3], Vec2{0.0, 0.0}};
}

struct RolloutErrors {
  std::vector<double> t;
  std::vector<std::array<double, 2>> rate;        // worst |error rate| per axis
  std::vector<std::array<double, 2>> field_rate;  // worst |z_hi' - f_des(z_hi)| per axis
  std::vector<std::array<double, 2>> abs_error;   // worst |z_hi - z_des| per axis
};

// Rolls the plant tracking ps.k over [0, T] and measures body-point errors.
inline RolloutErrors error_rollout(const PlanStart& ps, double T, const ErrorModel& em) {
  const LqTracker& tr = *em.tracker;
  const ReferenceTrajectory ref = k_reference(ps.k, ps.estimate, T + em.dt, em.nominal, em.dt);
  const auto steps = static_cast<std::size_t>(std::floor(T / em.dt + 1e-9));
  const auto pts = body_points(em.nominal);
  const Vec2 com0{0.0, 0.0};

  RolloutErrors out;
  out.t.reserve(steps + 1);
  PlantState s = ps.plant;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) * em.dt;
    std::array<double, 2> rate{}, field{}, err{};
    for (const Vec2& off : pts) {
      const Vec2 z0 = off;  // true body point at t = 0 (center of mass at origin, heading 0)
      const Vec2 z = s.vehicle.position() + rotate(off, s.vehicle.heading);
      const Vec2 zdot = body_point_velocity(s.vehicle, z);
      const Vec2 zdes = desired_point(ps.k, z0, com0, t, em.nominal);
      const Vec2 zdes_dot = desired_velocity(ps.k, zdes, com0, em.nominal);
      const Vec2 fz = desired_velocity(ps.k, z, com0, em.nominal);
      rate[0] = std::max(rate[0], std::abs(zdot.x - zdes_dot.x));
      rate[1] = std::max(rate[1], std::abs(zdot.y - zdes_dot.y));
      field[0] = std::max(field[0], std::abs(zdot.x - fz.x));
      field[1] = std::max(field[1], std::abs(zdot.y - fz.y));
      err[0] = std::max(err[0], std::abs(z.x - zdes.x));
      err[1] = std::max(err[1], std::abs(z.y - zdes.y));
    }
    out.t.push_back(t);
    out.rate.push_back(rate);
    out.field_rate.push_back(field);
    out.abs_error.push_back(err);
    if (i == steps) break;
    const ControlInput u = tr.command(s.vehicle, ref, t);
    s = plant_step(s, u, ps.plant_params, tr.actuators(), em.dt);
  }
  return out;
}

}  // namespace detail

// n_k parameters x n_ic initial conditions; rollout r uses stream split_seed(seed, r).
// Each sample's rate is the larger of |z_hi' - z_des'(t)| and |z_hi' - f_des(z_hi)|
// so both the integrated bound and the pointwise disturbance reconstruction hold.
inline ErrorSampleSet collect_error_samples(const Interval& speed_range, double T, std::size_t n_k, std::size_t n_ic,
                                            std::uint64_t seed, const ErrorModel& em) {
  require(n_k > 0 && n_ic > 0, "sample counts must be positive");
  require(speed_range.hi >= speed_range.lo && speed_range.lo > 0.0, "empty speed band");
  require(T > 0.0, "T must be positive");
  em.validate();
  const std::size_t n = n_k * n_ic;
  std::vector<detail::RolloutErrors> runs(n);
  // k is shared across the n_ic initial conditions of one parameter draw.
  std::vector<TrajectoryParam> ks(n_k);
  {
    Rng krng(split_seed(seed, 0xC0FFEEULL));
    for (auto& k : ks) k = {krng.uniform(-em.k1_limit, em.k1_limit), krng.uniform(speed_range)};
  }
  parallel_for(n, [&](std::size_t r) {
    Rng rng(split_seed(seed, r));
    const PlanStart ps = detail::draw_plan_start(speed_range, em, rng, ks[r / n_ic]);
    runs[r] = detail::error_rollout(ps, T, em);
  });
  ErrorSampleSet set;
  for (const auto& run : runs)
    for (std::size_t i = 0; i < run.t.size(); ++i)
      set.samples.push_back({run.t[i], std::max(run.rate[i][0], run.field_rate[i][0]),
                             std::max(run.rate[i][1], run.field_rate[i][1])});
  set.description = "speed " + std::to_string(speed_range.lo) + ".." + std::to_string(speed_range.hi) +
                    " m/s, initial speed within +-" + std::to_string(em.dk2_limit) + ", yaw rate within +-" +
                    std::to_string(em.k1_limit) + ", estimation error (" + std::to_string(em.eps.eps_x) + ", " +
                    std::to_string(em.eps.eps_y) + ") m";
  return set;
}

// Least integral quadratic upper envelope of (t_j, r_j), nonnegative on a grid.
inline std::array<double, 3> fit_envelope(const std::vector<std::pair<double, double>>& pts, double T,
                                          std::size_t nonneg_grid = 200) {
  // Keep the largest rate per distinct time.
  std::vector<std::pair<double, double>> binned;
  {
    std::vector<std::pair<double, double>> sorted = pts;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& p : sorted) {
      if (!binned.empty() && std::abs(binned.back().first - p.first) < 1e-9)
        binned.back().second = std::max(binned.back().second, p.second);
      else
        binned.push_back(p);
    }
  }
  const std::size_t m = binned.size() + nonneg_grid + 1;
  Eigen::MatrixXd g(static_cast<Eigen::Index>(m), 3);
  Eigen::VectorXd h(static_cast<Eigen::Index>(m));
  Eigen::Index r = 0;
  for (const auto& [t, rate] : binned) {
    g.row(r) << 1.0, t, t * t;
    h(r++) = rate;
  }
  for (std::size_t i = 0; i <= nonneg_grid; ++i) {
    const double t = T * static_cast<double>(i) / static_cast<double>(nonneg_grid);
    g.row(r) << 1.0, t, t * t;
    h(r++) = 0.0;
  }
  Eigen::VectorXd f(3);
  f << T, T * T / 2.0, T * T * T / 3.0;
  const InequalityLpResult lp = minimize_inequality_lp(f, g, h);
  require(lp.status == LpStatus::Optimal, "error-function LP failed");
  return {lp.x(0), lp.x(1), lp.x(2)};
}

inline ErrorFunction fit_error_function(const ErrorSampleSet& set, double T, double margin_frac = 0.1,
                                        double floor = 1e-3) {
  require(set.samples.size() >= 10, "need at least 10 error samples");
  require(T > 0.0 && margin_frac >= 0.0 && floor >= 0.0, "invalid fit settings");
  ErrorFunction g;
  g.T = T;
  g.margin = margin_frac;
  g.floor = floor;
  g.n_samples = set.samples.size();
  std::vector<std::pair<double, double>> px, py;
  bool all_zero = true;
  for (const auto& s : set.samples) {
    require(s.rate_x >= 0.0 && s.rate_y >= 0.0 && s.t >= -1e-12 && s.t <= T + 1e-9, "invalid error sample");
    px.emplace_back(s.t, s.rate_x);
    py.emplace_back(s.t, s.rate_y);
    if (s.rate_x > 0.0 || s.rate_y > 0.0) all_zero = false;
  }
  std::array<double, 3> cx{}, cy{};
  if (!all_zero) {
    cx = fit_envelope(px, T);
    cy = fit_envelope(py, T);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    g.coeffs_x[i] = (1.0 + margin_frac) * cx[i];
    g.coeffs_y[i] = (1.0 + margin_frac) * cy[i];
  }
  g.coeffs_x[0] += floor;
  g.coeffs_y[0] += floor;
  return g;
}

// Fraction of samples with g(t) >= rate on both axes.
inline double dominance_fraction(const ErrorFunction& g, const ErrorSampleSet& set) {
  if (set.samples.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto& s : set.samples)
    if (g.rate_x(s.t) >= s.rate_x && g.rate_y(s.t) >= s.rate_y) ++ok;
  return static_cast<double>(ok) / static_cast<double>(set.samples.size());
}

struct Lemma1Report {
  std::size_t n_rollouts = 0;
  std::size_t covered = 0;            // rollouts with |z_hi - z_des| <= int g at every sample time
  std::size_t d_bounded = 0;          // covered rollouts whose reconstructed d has sup-norm <= 1
  double worst_violation = 0.0;       // m, max over rollouts of |error| - int g (<= 0 when covered)
  double worst_d = 0.0;               // sup |d| over covered rollouts
  [[nodiscard]] bool defined() const { return n_rollouts > 0; }
  [[nodiscard]] std::optional<double> coverage() const {
    if (!defined()) return std::nullopt;
    return static_cast<double>(covered) / static_cast<double>(n_rollouts);
  }
};

// Fresh rollouts from the fitting distribution; the disturbance is
// reconstructed pointwise as d = (z_hi' - f_des(z_hi)) / g.
inline Lemma1Report validate_lemma1(const ErrorFunction& g, std::size_t n_rollouts, std::uint64_t seed,
                                    const ErrorModel& em) {
  Lemma1Report rep;
  rep.n_rollouts = n_rollouts;
  rep.worst_violation = -std::numeric_limits<double>::infinity();
  if (n_rollouts == 0) return rep;
  em.validate();
  std::vector<detail::RolloutErrors> runs(n_rollouts);
  parallel_for(n_rollouts, [&](std::size_t r) {
    Rng rng(split_seed(seed, r));
    const PlanStart ps = detail::draw_plan_start(g.speed_range, em, rng);
    runs[r] = detail::error_rollout(ps, g.T, em);
  });
  for (const auto& run : runs) {
    double viol = -std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t i = 0; i < run.t.size(); ++i) {
      const double t = run.t[i];
      viol = std::max(viol, run.abs_error[i][0] - g.integral_x(t));
      viol = std::max(viol, run.abs_error[i][1] - g.integral_y(t));
      dmax = std::max(dmax, run.field_rate[i][0] / g.rate_x(t));
      dmax = std::max(dmax, run.field_rate[i][1] / g.rate_y(t));
    }
    // Both sides start from the same point, so allow round-off at t = 0.
    const bool covered = viol <= 1e-9;
    rep.worst_violation = std::max(rep.worst_violation, viol);
    if (covered) {
      ++rep.covered;
      rep.worst_d = std::max(rep.worst_d, dmax);
      if (dmax <= 1.0) ++rep.d_bounded;
    }
  }
  return rep;
}

}  // namespace rtd
