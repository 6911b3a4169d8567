#pragma once

// Online trajectory optimization over k = (k1, k2): minimize a waypoint cost
// subject to w(z, k) <= 1 - delta_safe for every discretized obstacle point.
// Coarse grid scan, then barrier quasi-Newton refinement.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "rtd/common.hpp"
#include "rtd/frs.hpp"
#include "rtd/reference.hpp"

namespace rtd {

// Minimal horizon such that trajectories cover the stopping distance.
inline double compute_horizon(double tau_plan, double d_stop, double v_max) {
  require(tau_plan > 0.0 && d_stop >= 0.0 && v_max > 0.0, "invalid horizon inputs");
  return tau_plan + d_stop / v_max;
}

inline double compute_sensor_horizon(double T, double tau_plan, double v_max, double eps_x, double eps_y) {
  require(T > 0.0 && tau_plan > 0.0 && v_max > 0.0 && eps_x >= 0.0 && eps_y >= 0.0, "invalid sensor horizon inputs");
  return (T + tau_plan) * v_max + 2.0 * std::sqrt(eps_x * eps_x + eps_y * eps_y);
}

struct FeasibilityParams {
  std::vector<Interval> ranges;
  std::vector<double> T;
  std::vector<double> d_stop;
  double d_sense = 0.0;
  double eps = 0.0;
};

inline FeasibilityParams feasibility_params(const FrsLibrary& lib, double eps_x, double eps_y) {
  FeasibilityParams f;
  f.eps = std::sqrt(eps_x * eps_x + eps_y * eps_y);
  for (const auto& e : lib.entries) {
    f.ranges.push_back(e.speed_range);
    f.T.push_back(e.T);
    f.d_stop.push_back(e.d_stop);
    f.d_sense = std::max(f.d_sense, compute_sensor_horizon(e.T, e.tau_plan, e.speed_range.hi, eps_x, eps_y));
  }
  return f;
}

struct Waypoint {
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
};

struct PlannerConfig {
  double weight_position = 1.0;
  double weight_speed = 4.0;
  double delta_safe = 1e-6;
  std::size_t grid_k1 = 21;
  std::size_t grid_k2 = 21;
  double dk1_limit = 0.15;  // max |k1 - current yaw rate|
  std::size_t refine_starts = 3;
  std::size_t max_inner = 40;
  double mu_start = 1e-2;
  double mu_end = 1e-6;
  // Budget: wall clock (fraction of tau_plan) unless eval_budget > 0, in
  // which case constraint evaluations are counted instead (reproducible).
  double wall_fraction = 0.9;
  std::size_t eval_budget = 0;
};

struct PlanningContext {
  const FrsPolynomial* frs = nullptr;
  std::vector<Vec2> obstacles;  // X_p in the plan-local frame
  Waypoint waypoint;            // plan-local
  TrajectoryParam k_prev;
  double speed = 0.0;     // current longitudinal speed
  double yaw_rate = 0.0;  // current yaw rate
  double tau_plan = 0.5;
  double budget_seconds = 0.0;  // > 0 overrides wall_fraction * tau_plan
  VehicleParams params;

  void validate() const {
    require(frs != nullptr, "planning context needs an FRS");
    require(tau_plan > 0.0, "tau_plan must be positive");
    require(std::isfinite(waypoint.position.x) && std::isfinite(waypoint.position.y) && std::isfinite(waypoint.speed),
            "waypoint must be finite");
    require(std::isfinite(speed) && std::isfinite(yaw_rate), "state must be finite");
    for (const auto& z : obstacles) require(std::isfinite(z.x) && std::isfinite(z.y), "obstacle points must be finite");
  }
};

enum class PlanOutcome { NewPlan, Brake };

struct PlanResult {
  PlanOutcome outcome = PlanOutcome::Brake;
  TrajectoryParam k;
  double solve_time = 0.0;
  double max_w = -std::numeric_limits<double>::infinity();
  double cost = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
  bool budget_expired = false;
};

// Center-of-mass position of the desired trajectory at time T.
inline Vec2 trajectory_endpoint(const TrajectoryParam& k, double T, const VehicleParams& p) {
  return desired_point(k, {0.0, 0.0}, {0.0, 0.0}, T, p);
}

inline double cost_J(const TrajectoryParam& k, const Waypoint& wp, const FrsPolynomial& frs, const VehicleParams& p,
                     const PlannerConfig& cfg = {}) {
  const Vec2 e = trajectory_endpoint(k, frs.T, p) - wp.position;
  return cfg.weight_position * dot(e, e) + cfg.weight_speed * sq(k.k2 - wp.speed);
}

// Admissible parameters given the current state; empty intervals mean no plan.
struct KBox {
  Interval k1, k2;
  [[nodiscard]] bool empty() const { return k1.lo > k1.hi || k2.lo > k2.hi; }
  [[nodiscard]] TrajectoryParam clamp(const TrajectoryParam& k) const {
    return {std::clamp(k.k1, k1.lo, k1.hi), std::clamp(k.k2, k2.lo, k2.hi)};
  }
};

inline KBox feasible_box(const FrsPolynomial& frs, double speed, double yaw_rate, const PlannerConfig& cfg) {
  KBox b;
  const double k1_lim = frs.param_box.k1_limit;
  b.k1 = {std::max({frs.param_box.k1.lo, -k1_lim, yaw_rate - cfg.dk1_limit}),
          std::min({frs.param_box.k1.hi, k1_lim, yaw_rate + cfg.dk1_limit})};
  b.k2 = {std::max(frs.param_box.k2.lo, speed - frs.param_box.dk2_limit),
          std::min(frs.param_box.k2.hi, speed + frs.param_box.dk2_limit)};
  return b;
}

namespace detail {

class Budget {
 public:
  Budget(double seconds, std::size_t evals) : seconds_(seconds), evals_(evals), start_(std::chrono::steady_clock::now()) {}
  void count(std::size_t n = 1) { used_ += n; }
  [[nodiscard]] std::size_t used() const { return used_; }
  [[nodiscard]] double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  [[nodiscard]] bool expired() const { return evals_ > 0 ? used_ >= evals_ : elapsed() >= seconds_; }

 private:
  double seconds_;
  std::size_t evals_;
  std::size_t used_ = 0;
  std::chrono::steady_clock::time_point start_;
};

struct Objective {
  const PlanningContext& ctx;
  const PlannerConfig& cfg;
  const KConstraints& kc;

  [[nodiscard]] double J(const TrajectoryParam& k) const { return cost_J(k, ctx.waypoint, *ctx.frs, ctx.params, cfg); }

  // Central-difference gradient of J (closed form is messy near k1 = 0).
  [[nodiscard]] Eigen::Vector2d grad_J(const TrajectoryParam& k) const {
    const double h1 = 1e-6, h2 = 1e-5;
    return {(J({k.k1 + h1, k.k2}) - J({k.k1 - h1, k.k2})) / (2 * h1),
            (J({k.k1, k.k2 + h2}) - J({k.k1, k.k2 - h2})) / (2 * h2)};
  }

  // Barrier objective; +inf when any constraint is violated.
  [[nodiscard]] double phi(const TrajectoryParam& k, double mu, Eigen::Vector2d* grad) const {
    const double cap = 1.0 - cfg.delta_safe;
    double value = J(k);
    Eigen::Vector2d g = grad ? grad_J(k) : Eigen::Vector2d::Zero();
    if (kc.size() > 0) {
      const Eigen::VectorXd m = kc.basis(k);
      const Eigen::VectorXd w = kc.matrix() * m;
      if (w.maxCoeff() > cap) return std::numeric_limits<double>::infinity();
      const Eigen::ArrayXd slack = cap - w.array();
      value -= mu * slack.log().sum();
      if (grad) {
        const auto [d1, d2] = kc.basis_gradient(k);
        const Eigen::VectorXd inv = slack.inverse().matrix();
        const Eigen::VectorXd gw = kc.matrix().transpose() * inv;
        g(0) += mu * gw.dot(d1);
        g(1) += mu * gw.dot(d2);
      }
    }
    if (grad) *grad = g;
    return value;
  }
};

}  // namespace detail

// Projected BFGS with backtracking on the barrier objective, mu decreasing.
inline TrajectoryParam refine(const detail::Objective& obj, TrajectoryParam k, const KBox& box, const PlannerConfig& cfg,
                              detail::Budget& budget) {
  const Eigen::Vector2d scale{box.k1.width() > 0 ? box.k1.width() : 1.0, box.k2.width() > 0 ? box.k2.width() : 1.0};
  for (double mu = cfg.mu_start; mu >= cfg.mu_end * 0.999; mu *= 0.1) {
    Eigen::Matrix2d H = Eigen::Matrix2d::Identity();
    Eigen::Vector2d g;
    double f = obj.phi(k, mu, &g);
    budget.count();
    if (!std::isfinite(f)) return k;
    for (std::size_t it = 0; it < cfg.max_inner; ++it) {
      if (budget.expired()) return k;
      // work in box-normalized coordinates
      const Eigen::Vector2d gs = g.cwiseProduct(scale);
      Eigen::Vector2d dir = -H * gs;
      if (dir.dot(gs) >= 0.0) {
        H.setIdentity();
        dir = -gs;
      }
      // zero components that push against an active bound
      const double xs[2] = {k.k1, k.k2};
      const Interval bounds[2] = {box.k1, box.k2};
      for (int i = 0; i < 2; ++i) {
        if (xs[i] <= bounds[i].lo + 1e-12 && dir(i) < 0.0) dir(i) = 0.0;
        if (xs[i] >= bounds[i].hi - 1e-12 && dir(i) > 0.0) dir(i) = 0.0;
      }
      if (dir.norm() < 1e-12) break;
      double step = 1.0;
      bool moved = false;
      TrajectoryParam next;
      double fn = f;
      Eigen::Vector2d gn;
      for (int ls = 0; ls < 30; ++ls) {
        const Eigen::Vector2d d = dir.cwiseProduct(scale) * step;
        next = box.clamp({k.k1 + d(0), k.k2 + d(1)});
        fn = obj.phi(next, mu, &gn);
        budget.count();
        if (fn < f - 1e-4 * step * std::abs(gs.dot(dir)) || (fn < f && ls > 10)) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      const Eigen::Vector2d s{(next.k1 - k.k1) / scale(0), (next.k2 - k.k2) / scale(1)};
      const Eigen::Vector2d y = gn.cwiseProduct(scale) - gs;
      const double sy = s.dot(y);
      if (sy > 1e-14) {
        const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
        const double rho = 1.0 / sy;
        H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
      }
      const bool small = std::abs(f - fn) < 1e-12 * (1.0 + std::abs(f));
      k = next;
      f = fn;
      g = gn;
      if (small) break;
    }
  }
  return k;
}

inline PlanResult solve(const PlanningContext& ctx, const PlannerConfig& cfg = {}) {
  ctx.validate();
  require(cfg.grid_k1 >= 2 && cfg.grid_k2 >= 2, "grid must be at least 2x2");
  const auto t0 = std::chrono::steady_clock::now();
  detail::Budget budget(ctx.budget_seconds > 0.0 ? ctx.budget_seconds : cfg.wall_fraction * ctx.tau_plan, cfg.eval_budget);
  PlanResult res;
  const FrsPolynomial& frs = *ctx.frs;
  const KBox box = feasible_box(frs, ctx.speed, ctx.yaw_rate, cfg);
  auto finish = [&]() {
    res.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.evaluations = budget.used();
    return res;
  };
  if (box.empty()) return finish();
  const KConstraints kc(frs, ctx.obstacles);
  const double cap = 1.0 - cfg.delta_safe;
  const detail::Objective obj{ctx, cfg, kc};

  // (i) grid scan in order of increasing cost, with early exit per point.
  struct Cand {
    double J;
    TrajectoryParam k;
  };
  std::vector<Cand> grid;
  for (std::size_t j = 0; j < cfg.grid_k2; ++j)
    for (std::size_t i = 0; i < cfg.grid_k1; ++i) {
      const TrajectoryParam k{box.k1.lo + box.k1.width() * static_cast<double>(i) / static_cast<double>(cfg.grid_k1 - 1),
                              box.k2.lo + box.k2.width() * static_cast<double>(j) / static_cast<double>(cfg.grid_k2 - 1)};
      grid.push_back({obj.J(k), k});
    }
  std::stable_sort(grid.begin(), grid.end(), [](const Cand& a, const Cand& b) { return a.J < b.J; });
  std::vector<Cand> starts;
  for (const auto& c : grid) {
    if (budget.expired()) {
      res.budget_expired = true;
      break;
    }
    budget.count();
    if (kc.size() > 0 && kc.any_above(c.k, cap)) continue;
    starts.push_back(c);
    if (starts.size() >= cfg.refine_starts) break;
  }
  if (starts.empty()) return finish();

  // Incumbent: best feasible grid point.
  res.outcome = PlanOutcome::NewPlan;
  res.k = starts.front().k;
  res.cost = starts.front().J;

  // (ii) refinement from each start.
  for (const auto& s : starts) {
    if (budget.expired()) {
      res.budget_expired = true;
      break;
    }
    const TrajectoryParam k = refine(obj, s.k, box, cfg, budget);
    const double J = obj.J(k);
    if (J < res.cost && (kc.size() == 0 || kc.max_value(k) <= cap)) {
      res.k = k;
      res.cost = J;
    }
  }
  res.max_w = kc.max_value(res.k);
  // Never hand back a parameter that fails the constraint.
  if (kc.size() > 0 && res.max_w > cap) {
    res.outcome = PlanOutcome::Brake;
    res.cost = std::numeric_limits<double>::infinity();
  }
  return finish();
}

// Brute-force constrained grid minimum (oracle for tests).
inline PlanResult grid_solve(const PlanningContext& ctx, std::size_t n1, std::size_t n2, const PlannerConfig& cfg = {}) {
  ctx.validate();
  PlanResult res;
  const KBox box = feasible_box(*ctx.frs, ctx.speed, ctx.yaw_rate, cfg);
  if (box.empty()) return res;
  const KConstraints kc(*ctx.frs, ctx.obstacles);
  for (std::size_t j = 0; j < n2; ++j)
    for (std::size_t i = 0; i < n1; ++i) {
      const TrajectoryParam k{box.k1.lo + box.k1.width() * static_cast<double>(i) / static_cast<double>(n1 - 1),
                              box.k2.lo + box.k2.width() * static_cast<double>(j) / static_cast<double>(n2 - 1)};
      const double J = cost_J(k, ctx.waypoint, *ctx.frs, ctx.params, cfg);
      if (J >= res.cost) continue;
      const double mw = kc.max_value(k);
      if (kc.size() > 0 && mw > 1.0 - cfg.delta_safe) continue;
      res.outcome = PlanOutcome::NewPlan;
      res.k = k;
      res.cost = J;
      res.max_w = mw;
    }
  return res;
}

// Rigid transform to the plan-local frame (plan-start pose at the origin).
struct PlanFrame {
  Pose2 origin;
  [[nodiscard]] Vec2 to_local(const Vec2& w) const { return origin.to_local(w); }
  [[nodiscard]] Vec2 to_world(const Vec2& l) const { return origin.to_world(l); }
  [[nodiscard]] std::vector<Vec2> to_local(const std::vector<Vec2>& pts) const {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(to_local(p));
    return out;
  }
  [[nodiscard]] Waypoint to_local(const Waypoint& w) const {
    return {to_local(w.position), wrap_angle(w.heading - origin.heading), w.speed};
  }
};

inline PlanFrame to_plan_frame(const Pose2& vehicle) { return {vehicle}; }

}  // namespace rtd
