#pragma once

// Closed-loop receding-horizon simulation on a test track: high-level
// waypoints, the RTD planner or an RRT baseline, the plant under the tracking
// controller, and crash / safe-stop adjudication.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "rtd/common.hpp"
#include "rtd/frs.hpp"
#include "rtd/geometry.hpp"
#include "rtd/planner.hpp"
#include "rtd/reference.hpp"
#include "rtd/track.hpp"
#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_measurements.hpp"
#include "rtd/vehicle_model.hpp"

namespace rtd {

// ---------------------------------------------------------------------------
// High-level planner.

struct WaypointConfig {
  double lookahead_time = 1.5;  // s
  double lookahead_floor = 10.0;
  double cruise = 11.0;          // m/s
  double min_speed = 4.0;
  double yaw_rate_margin = 0.8;  // fraction of the yaw-rate limit used in curves
  double yaw_rate_limit = 0.25;
  double decel = 1.5;            // m/s^2 used to slow down ahead of curves
  double preview = 60.0;         // m of track checked for curvature
  double switch_time = 3.0;      // s of travel checked for blocking obstacles
  double switch_floor = 30.0;
};

struct WaypointResult {
  Waypoint waypoint;  // world frame
  int lane = 1;
  double s = 0.0;     // arc length of the waypoint
  bool switched = false;
};

namespace detail {

inline bool polyline_hits(const std::vector<Vec2>& line, const Polygon& poly) {
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    if (point_in_polygon(poly, line[i])) return true;
    for (std::size_t j = 0; j < poly.size(); ++j)
      if (segments_intersect(line[i], line[i + 1], poly[j], poly[(j + 1) % poly.size()])) return true;
  }
  return !line.empty() && point_in_polygon(poly, line.back());
}

inline bool lane_blocked(const Track& track, double s0, double s1, int lane, const std::vector<Polygon>& obstacles) {
  if (obstacles.empty()) return false;
  const auto line = track.offset_polyline(s0, s1, track.lane_offset(lane), 1.0);
  for (const auto& o : obstacles)
    if (polyline_hits(line, o)) return true;
  return false;
}

}  // namespace detail

// Waypoint d_look ahead on the current lane's centerline; switches lanes
// when that lane is blocked by a remembered obstacle. `lane` is the lane
// the high-level planner is currently following.
inline WaypointResult high_level_waypoint(const Track& track, double s, double speed, int lane,
                                          const std::vector<Polygon>& memory, const WaypointConfig& cfg = {}) {
  WaypointResult r;
  const double d_look = std::max(cfg.lookahead_time * std::max(speed, 0.0), cfg.lookahead_floor);
  const double check = std::max({d_look, cfg.switch_time * speed, cfg.switch_floor});
  r.lane = lane;
  if (detail::lane_blocked(track, s, s + check, lane, memory) && !detail::lane_blocked(track, s, s + check, -lane, memory)) {
    r.lane = -lane;
    r.switched = true;
  }
  r.s = s + d_look;
  const Pose2 p = track.pose(r.s, track.lane_offset(r.lane));
  r.waypoint.position = p.position();
  r.waypoint.heading = p.heading;
  // Speed: cruise, capped by the yaw-rate limit in curves ahead with room to slow down.
  double v = cfg.cruise;
  for (double ds = 0.0; ds <= cfg.preview; ds += 2.0) {
    const double kappa = std::abs(track.at(s + ds).curvature);
    if (kappa <= 0.0) continue;
    const double v_curve = cfg.yaw_rate_margin * cfg.yaw_rate_limit / kappa;
    v = std::min(v, std::sqrt(v_curve * v_curve + 2.0 * cfg.decel * ds));
  }
  r.waypoint.speed = std::max(cfg.min_speed, v);
  return r;
}

// ---------------------------------------------------------------------------
// Progress and crash checks.

struct ProgressTracker {
  double s_prev = 0.0;
  double progress = 0.0;
  double max_progress = 0.0;

  void update(const Track& track, double s) {
    double ds = s - s_prev;
    const double L = track.length();
    if (ds > 0.5 * L) ds -= L;
    if (ds < -0.5 * L) ds += L;
    progress += ds;
    max_progress = std::max(max_progress, progress);
    s_prev = s;
  }
};

struct CrashCheck {
  bool crashed = false;
  bool off_road = false;
  int obstacle = -1;
};

inline CrashCheck check_crash(const VehicleState& s, const VehicleParams& p, const Track& track, double boundary_buffer,
                              const std::vector<ObstaclePolygon>& obstacles) {
  CrashCheck c;
  const auto fp = footprint_polygon(s, p);
  const Polygon poly(fp.begin(), fp.end());
  for (const auto& o : obstacles) {
    if (distance(o.vertices.front(), s.position()) > 20.0) continue;
    if (polygons_intersect(poly, o.vertices)) {
      c.crashed = true;
      c.obstacle = o.id;
      return c;
    }
  }
  const double limit = track.half_width() + boundary_buffer;
  for (const auto& v : fp)
    if (std::abs(track.project(v).d) > limit) {
      c.crashed = true;
      c.off_road = true;
      return c;
    }
  return c;
}

// ---------------------------------------------------------------------------
// RRT baseline.

struct RrtConfig {
  double buffer_length = 4.0;  // total growth of obstacle length, m
  double buffer_width = 1.5;
  double hold = 0.5;           // s per expansion
  std::size_t samples = 50;    // integration points per expansion
  double dt = 0.01;
  std::size_t trees = 2;       // throttle tree and braking tree
  std::size_t expansions = 4000;  // per call; wall clock may cut this short
  double goal_bias = 0.3;      // chance of expanding the node closest to the waypoint
  double w_obstacle = 2.0;
  double w_road = 1.0;
  double w_input = 0.5;
  double max_depth_time = 2.0;  // s; nodes deeper than this are not expanded
};

struct RrtNode {
  VehicleState state;
  ControlInput input;  // held on the edge into this node
  int parent = -1;
  double time = 0.0;
  double cost = 0.0;
  std::vector<VehicleState> edge;  // 50 integration points
};

struct RrtTree {
  std::vector<RrtNode> nodes;
  bool braking = false;
};

struct RrtResult {
  bool brake = true;
  std::vector<VehicleState> path;  // dt-spaced states, starting at the root
  std::vector<VehicleState> continuation;  // braking continuation after the path
  std::size_t expansions = 0;
  std::array<RrtTree, 2> trees;
  double solve_time = 0.0;
};

struct RrtWorld {
  const Track* track = nullptr;
  std::vector<Polygon> buffered;  // obstacles grown by the RRT buffers
  double road_limit = 3.0;        // max |lateral offset| of the center of mass
};

inline RrtWorld make_rrt_world(const Track& track, const std::vector<ObstaclePolygon>& obstacles,
                               const VehicleParams& p, const RrtConfig& cfg) {
  RrtWorld w;
  w.track = &track;
  w.road_limit = track.half_width() - 0.5 * p.footprint_width;
  for (const auto& o : obstacles) {
    // obstacles are rectangles: grow along their own axes
    const auto& v = o.vertices;
    const Vec2 c = (v[0] + v[1] + v[2] + v[3]) * 0.25;
    const Vec2 e1 = v[1] - v[0], e2 = v[3] - v[0];
    const bool first_long = e1.norm() >= e2.norm();
    const double len = std::max(e1.norm(), e2.norm()) + cfg.buffer_length;
    const double wid = std::min(e1.norm(), e2.norm()) + cfg.buffer_width;
    const Vec2 axis = first_long ? e1 : e2;
    w.buffered.push_back(oriented_rectangle({c.x, c.y, std::atan2(axis.y, axis.x)}, len, wid));
  }
  return w;
}

namespace detail {

inline bool rrt_point_ok(const RrtWorld& w, const Vec2& q) {
  if (std::abs(w.track->project(q).d) > w.road_limit) return false;
  for (const auto& b : w.buffered)
    if (point_in_polygon(b, q)) return false;
  return true;
}

inline double rrt_clearance_penalty(const RrtWorld& w, const Vec2& q) {
  double pen = 0.0;
  for (const auto& b : w.buffered) {
    const double d = polygon_distance(b, q);
    if (d < 3.0) pen += (3.0 - d) / 3.0;
  }
  const double edge = w.road_limit - std::abs(w.track->project(q).d);
  if (edge < 1.0) pen += 1.0 - edge;
  return pen;
}

// Integrates the model (no actuator lag) under a held input; false if any
// point leaves the track or enters a buffered obstacle.
inline bool rrt_integrate(const VehicleState& start, const ControlInput& u, const VehicleParams& p,
                          const ActuatorMap& act, const RrtConfig& cfg, const RrtWorld& w, std::vector<VehicleState>& out) {
  out.clear();
  VehicleState s = start;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    s = rk4_step(s, u, p, act, cfg.dt);
    if (s.vx < 0.0) {
      s.vx = 0.0;
      s.vy = 0.0;
      s.yaw_rate = 0.0;
    }
    if (!s.finite() || !rrt_point_ok(w, s.position())) return false;
    out.push_back(s);
  }
  return true;
}

// Max-brake rollout until stopped; false if it hits something.
inline bool rrt_brake_continuation(const VehicleState& start, double steering, const VehicleParams& p,
                                   const ActuatorMap& act, const RrtConfig& cfg, const RrtWorld& w,
                                   std::vector<VehicleState>& out) {
  out.clear();
  VehicleState s = start;
  const ControlInput u{0.0, 1.0, steering};
  for (int i = 0; i < 2000 && s.vx > 0.1; ++i) {
    s = rk4_step(s, u, p, act, cfg.dt);
    if (s.vx < 0.0) s.vx = 0.0;
    if (!s.finite() || !rrt_point_ok(w, s.position())) return false;
    out.push_back(s);
  }
  return true;
}

}  // namespace detail

// Two trees grown from the current state: one with throttle inputs and one
// with brake inputs. Returns the throttle-tree path ending closest (by cost)
// to the waypoint whose max-brake continuation is collision-free.
inline RrtResult rrt_plan(const RrtConfig& cfg, const VehicleState& start, const RrtWorld& world, const Waypoint& wp,
                          const VehicleParams& p, const ActuatorMap& act, std::uint64_t seed, double wall_budget) {
  require(cfg.expansions > 0 && cfg.samples > 0 && cfg.hold > 0.0, "RRT budget must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  Rng rng(seed);
  RrtResult res;
  auto node_cost = [&](const VehicleState& s, const ControlInput& u) {
    return distance(s.position(), wp.position) + cfg.w_obstacle * detail::rrt_clearance_penalty(world, s.position()) +
           cfg.w_input * (std::abs(u.steering_wheel) / act.steering_wheel_limit + u.brake);
  };
  for (std::size_t t = 0; t < 2; ++t) {
    res.trees[t].braking = t == 1;
    RrtNode root;
    root.state = start;
    root.cost = node_cost(start, {});
    res.trees[t].nodes.push_back(root);
  }
  std::vector<VehicleState> edge;
  for (std::size_t e = 0; e < cfg.expansions; ++e) {
    if (wall_budget > 0.0 && elapsed() > wall_budget) break;
    RrtTree& tree = res.trees[e % cfg.trees == 0 ? 0 : 1];
    // random existing node, biased toward the cheapest
    std::size_t pick = rng.index(tree.nodes.size());
    if (rng.uniform() < cfg.goal_bias) {
      pick = 0;
      for (std::size_t i = 1; i < tree.nodes.size(); ++i)
        if (tree.nodes[i].cost < tree.nodes[pick].cost && tree.nodes[i].time < cfg.max_depth_time) pick = i;
    }
    if (tree.nodes[pick].time >= cfg.max_depth_time) continue;
    ControlInput u;
    if (tree.braking) {
      u.brake = rng.uniform(0.1, 1.0);
    } else {
      u.throttle = rng.uniform(0.0, 0.6);
    }
    u.steering_wheel = rng.uniform(-0.5, 0.5) * act.steering_wheel_limit;
    ++res.expansions;
    if (!detail::rrt_integrate(tree.nodes[pick].state, u, p, act, cfg, world, edge)) continue;
    RrtNode n;
    n.state = edge.back();
    n.input = u;
    n.parent = static_cast<int>(pick);
    n.time = tree.nodes[pick].time + cfg.hold;
    n.cost = node_cost(n.state, u);
    n.edge = edge;
    tree.nodes.push_back(std::move(n));
  }
  // Candidates in order of cost; first with a safe braking continuation wins.
  for (std::size_t t = 0; t < 2; ++t) {
    const RrtTree& tree = res.trees[t];
    std::vector<std::size_t> order;
    for (std::size_t i = 1; i < tree.nodes.size(); ++i) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return tree.nodes[a].cost < tree.nodes[b].cost; });
    for (std::size_t i : order) {
      std::vector<VehicleState> cont;
      if (!detail::rrt_brake_continuation(tree.nodes[i].state, 0.0, p, act, cfg,
                                          world, cont))
        continue;
      std::vector<std::size_t> chain;
      for (int j = static_cast<int>(i); j > 0; j = tree.nodes[static_cast<std::size_t>(j)].parent)
        chain.push_back(static_cast<std::size_t>(j));
      res.path.push_back(start);
      for (auto it = chain.rbegin(); it != chain.rend(); ++it)
        res.path.insert(res.path.end(), tree.nodes[*it].edge.begin(), tree.nodes[*it].edge.end());
      res.continuation = std::move(cont);
      res.brake = false;
      break;
    }
    if (!res.brake) break;
  }
  res.solve_time = elapsed();
  return res;
}

// Reference through dt-spaced model states (path followed by continuation).
inline ReferenceTrajectory reference_from_states(const std::vector<VehicleState>& states, double dt, double brake_start) {
  ReferenceTrajectory ref;
  ref.dt = dt;
  ref.brake_start = brake_start;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& s = states[i];
    const double accel = i + 1 < states.size() ? (states[i + 1].vx - s.vx) / dt : 0.0;
    ref.points.push_back({static_cast<double>(i) * dt, s.x, s.y, s.heading, s.vx, s.vy, s.yaw_rate, accel});
  }
  return ref;
}

// ---------------------------------------------------------------------------
// Scenario.

enum class PlannerKind { Rtd, Rrt };
enum class TimeMode { Realtime, Extended };

struct ScenarioConfig {
  std::uint64_t track_seed = 1;
  PlannerKind planner = PlannerKind::Rtd;
  TimeMode mode = TimeMode::Realtime;
  std::uint64_t vehicle_seed = 1;
  double tau_plan = 0.5;
  double max_time = 300.0;
  double initial_speed = 5.0;
  double dt = 0.01;
  double extended_budget = 5.0;  // s per call in extended mode
  // Count-based budgets keep runs reproducible; the wall clock is a backstop.
  std::size_t planner_eval_budget = 0;  // > 0 replaces the wall clock (tests)
  bool perturb_vehicle = true;
  bool estimation_noise = true;
  double obstacle_buffer = 0.05;  // b
  WaypointConfig waypoint;
  PlannerConfig planner_cfg;
  RrtConfig rrt;
  BrakingConfig braking;
};

struct PlanLogEntry {
  double t = 0.0;
  bool new_plan = false;
  double k1 = 0.0, k2 = 0.0;
  double solve_time = 0.0;
  double max_w = 0.0;
  double cost = 0.0;
  int frs = -1;
  std::size_t n_points = 0;
};

struct StateLogEntry {
  double t = 0.0;
  VehicleState state;
  bool braking = false;
  double s = 0.0;
  double progress = 0.0;
};

enum class EndReason { LapComplete, Crash, SafeStop, Timeout };

inline const char* to_string(EndReason r) {
  switch (r) {
    case EndReason::LapComplete: return "lap";
    case EndReason::Crash: return "crash";
    case EndReason::SafeStop: return "safe_stop";
    case EndReason::Timeout: return "timeout";
  }
  return "?";
}

struct SimLog {
  std::vector<StateLogEntry> states;
  std::vector<PlanLogEntry> plans;
  EndReason end = EndReason::Timeout;
  double track_length = 0.0;
};

struct SimMetrics {
  double percent_complete = 0.0;
  int crashes = 0;
  int safe_stops = 0;
  double planning_time_avg = 0.0;
  double planning_time_max = 0.0;
  std::size_t iterations = 0;
  double sim_time = 0.0;
  EndReason end = EndReason::Timeout;
};

// Metrics from a run log. Crashes are re-derived from the states.
inline SimMetrics adjudicate(const SimLog& log, const Track& track, double boundary_buffer,
                             const std::vector<ObstaclePolygon>& obstacles, const VehicleParams& p) {
  SimMetrics m;
  m.end = log.end;
  double best = 0.0;
  bool crashed = false;
  double last_speed = 1.0;
  for (const auto& e : log.states) {
    best = std::max(best, e.progress);
    last_speed = e.state.vx;
    if (!crashed && check_crash(e.state, p, track, boundary_buffer, obstacles).crashed) crashed = true;
    if (crashed) break;
  }
  const double L = log.track_length > 0.0 ? log.track_length : track.length();
  m.percent_complete = std::clamp(100.0 * best / L, 0.0, 100.0);
  const bool lap = m.percent_complete >= 100.0 - 1e-9;
  if (lap) m.percent_complete = 100.0;
  m.crashes = crashed ? 1 : 0;
  m.safe_stops = (!crashed && !lap && last_speed < 0.1) ? 1 : 0;
  for (const auto& pl : log.plans) {
    m.planning_time_avg += pl.solve_time;
    m.planning_time_max = std::max(m.planning_time_max, pl.solve_time);
  }
  m.iterations = log.plans.size();
  if (!log.plans.empty()) m.planning_time_avg /= static_cast<double>(log.plans.size());
  if (!log.states.empty()) m.sim_time = log.states.back().t;
  return m;
}

struct SimContext {
  const FrsLibrary* library = nullptr;  // required for RTD
  VehicleParams nominal;
  ActuatorMap actuators;
  const LqTracker* tracker = nullptr;
  PredictionErrorBound eps;
  PerturbationRanges perturbation;
};

struct SimResult {
  SimMetrics metrics;
  SimLog log;
};

namespace detail {

// X_p of everything relevant: remembered obstacles and road strips, precomputed.
struct ObstaclePoints {
  std::vector<std::vector<Vec2>> per_obstacle;  // index-aligned with the track's obstacles
  std::vector<Vec2> road;

  [[nodiscard]] std::vector<Vec2> gather(const std::vector<std::size_t>& seen, const Vec2& com, double radius) const {
    std::vector<Vec2> out;
    const double r2 = radius * radius;
    for (std::size_t i : seen)
      for (const auto& q : per_obstacle[i])
        if ((q - com).squared_norm() <= r2) out.push_back(q);
    for (const auto& q : road)
      if ((q - com).squared_norm() <= r2) out.push_back(q);
    return out;
  }
};

// Order of FRS attempts: the range nearest the target speed first.
inline std::vector<std::size_t> frs_order(const FrsLibrary& lib, double speed, double target, double dk2) {
  std::vector<std::pair<double, std::size_t>> c;
  const double want = std::clamp(target, speed - dk2, speed + dk2);
  for (std::size_t i = 0; i < lib.entries.size(); ++i) {
    const auto& r = lib.entries[i].speed_range;
    if (r.hi < speed - dk2 || r.lo > speed + dk2) continue;
    const double gap = want < r.lo ? r.lo - want : (want > r.hi ? want - r.hi : 0.0);
    c.push_back({gap, i});
  }
  std::stable_sort(c.begin(), c.end());
  std::vector<std::size_t> out;
  for (const auto& [g, i] : c) out.push_back(i);
  return out;
}

}  // namespace detail

inline SimResult run_scenario(const ScenarioConfig& cfg, const TrackSpec& spec, const SimContext& ctx) {
  require(cfg.tau_plan > 0.0 && cfg.dt > 0.0 && cfg.max_time > 0.0, "invalid scenario timing");
  require(ctx.tracker != nullptr, "simulation needs a tracking controller");
  if (cfg.planner == PlannerKind::Rtd) {
    require(ctx.library != nullptr && !ctx.library->entries.empty(), "RTD needs an FRS library");
  }
  const Track& track = spec.track;
  const LqTracker& tracker = *ctx.tracker;
  Rng vrng(split_seed(cfg.vehicle_seed, 11));
  const VehicleParams plant_params = cfg.perturb_vehicle ? perturb(ctx.nominal, ctx.perturbation, vrng) : ctx.nominal;
  Rng noise(split_seed(cfg.vehicle_seed, 12));

  const auto obstacles = spec.obstacle_polygons();
  const auto strips = road_boundary_obstacles(track, spec.boundary_buffer);

  // Sensing radius from the library (or a fixed value for RRT runs).
  double d_sense = 45.0;
  if (ctx.library) d_sense = feasibility_params(*ctx.library, ctx.eps.eps_x, ctx.eps.eps_y).d_sense;

  detail::ObstaclePoints xp;
  if (cfg.planner == PlannerKind::Rtd) {
    for (const auto& o : obstacles)
      xp.per_obstacle.push_back(
          discretize_obstacle(o, cfg.obstacle_buffer, ctx.eps.eps_x, ctx.eps.eps_y, ctx.nominal.footprint_width).points);
    xp.road = discretize_all(strips, cfg.obstacle_buffer, ctx.eps.eps_x, ctx.eps.eps_y, ctx.nominal.footprint_width);
  }

  SimResult out;
  SimLog& log = out.log;
  log.track_length = track.length();
  const int start_lane = spec.start_lane;
  const Pose2 start_pose = track.pose(0.0, track.lane_offset(start_lane));
  PlantState plant = steady_plant_state(cfg.initial_speed, 0.0, start_pose, ctx.nominal, ctx.actuators);
  ObstacleMemory memory;
  ProgressTracker progress;
  progress.s_prev = track.project(plant.vehicle.position()).s;
  int lane = start_lane;

  ReferenceTrajectory ref = braking_profile({0.0, std::max(cfg.initial_speed, 0.1)}, 0.0, start_pose, ctx.nominal, cfg.braking);
  double ref_t0 = 0.0;
  double t = 0.0;
  log.states.push_back({0.0, plant.vehicle, false, progress.s_prev, 0.0});

  const double budget = cfg.mode == TimeMode::Realtime ? cfg.tau_plan : cfg.extended_budget;
  const bool counted = cfg.planner_eval_budget > 0;  // no wall clock anywhere
  std::size_t iter = 0;
  while (t < cfg.max_time - 1e-9) {
    // --- plan -----------------------------------------------------------
    const VehicleState& vs = plant.vehicle;
    Pose2 est{vs.x, vs.y, vs.heading};
    if (cfg.estimation_noise) {
      est.x += noise.uniform(-ctx.eps.eps_x, ctx.eps.eps_x);
      est.y += noise.uniform(-ctx.eps.eps_y, ctx.eps.eps_y);
      est.heading += noise.uniform(-ctx.eps.eps[4], ctx.eps.eps[4]);
    }
    const auto seen = sensor_scan(spec, est, d_sense, memory);
    std::vector<Polygon> mem_polys;
    for (std::size_t i : seen) mem_polys.push_back(obstacles[i].vertices);
    const double s_now = track.project(vs.position()).s;
    const WaypointResult wr = high_level_waypoint(track, s_now, vs.vx, lane, mem_polys, cfg.waypoint);
    lane = wr.lane;

    PlanLogEntry pl;
    pl.t = t;
    if (cfg.planner == PlannerKind::Rtd) {
      const PlanFrame frame = to_plan_frame(est);
      const auto world_pts = xp.gather(seen, est.position(), d_sense);
      PlanningContext pc;
      pc.obstacles = frame.to_local(world_pts);
      pc.waypoint = frame.to_local(wr.waypoint);
      pc.speed = vs.vx;
      pc.yaw_rate = vs.yaw_rate;
      pc.tau_plan = cfg.tau_plan;
      pc.params = ctx.nominal;
      pl.n_points = world_pts.size();
      const auto started = std::chrono::steady_clock::now();
      for (std::size_t idx : detail::frs_order(*ctx.library, vs.vx, wr.waypoint.speed, 1.0)) {
        const double used = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (!counted && used >= cfg.planner_cfg.wall_fraction * budget) break;
        pc.frs = &ctx.library->entries[idx];
        PlannerConfig pcfg = cfg.planner_cfg;
        pcfg.eval_budget = cfg.planner_eval_budget;
        pc.budget_seconds = cfg.planner_cfg.wall_fraction * budget - used;
        const PlanResult r = solve(pc, pcfg);
        if (r.outcome == PlanOutcome::NewPlan) {
          pl.new_plan = true;
          pl.k1 = r.k.k1;
          pl.k2 = r.k.k2;
          pl.max_w = r.max_w;
          pl.cost = r.cost;
          pl.frs = static_cast<int>(idx);
          break;
        }
      }
      pl.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (pl.new_plan) {
        ref = braking_reference({pl.k1, pl.k2}, cfg.tau_plan, est, ctx.nominal, cfg.braking);
        ref_t0 = t;
      }
    } else {
      std::vector<ObstaclePolygon> known;
      for (std::size_t i : seen) known.push_back(obstacles[i]);
      const RrtWorld world = make_rrt_world(track, known, ctx.nominal, cfg.rrt);
      VehicleState start = vs;
      start.x = est.x;
      start.y = est.y;
      start.heading = est.heading;
      RrtConfig rc = cfg.rrt;
      if (cfg.mode == TimeMode::Extended) rc.expansions *= 10;
      const RrtResult r =
          rrt_plan(rc, start, world, wr.waypoint, ctx.nominal, ctx.actuators, split_seed(cfg.vehicle_seed, 1000 + iter),
                   counted ? 0.0 : cfg.planner_cfg.wall_fraction * budget);
      pl.solve_time = r.solve_time;
      if (!r.brake) {
        std::vector<VehicleState> all = r.path;
        all.insert(all.end(), r.continuation.begin(), r.continuation.end());
        ref = reference_from_states(all, rc.dt, static_cast<double>(r.path.size()) * rc.dt);
        ref_t0 = t;
        pl.new_plan = true;
        pl.k2 = r.path.back().vx;
      }
    }
    log.plans.push_back(pl);
    ++iter;

    // --- execute for tau_plan ---------------------------------------------
    const auto steps = static_cast<std::size_t>(std::llround(cfg.tau_plan / cfg.dt));
    bool done = false;
    for (std::size_t i = 0; i < steps; ++i) {
      const double tr = t - ref_t0;
      const ControlInput u = tracker.command(plant.vehicle, ref, tr);
      plant = plant_step(plant, u, plant_params, ctx.actuators, cfg.dt);
      t += cfg.dt;
      const double s = track.project(plant.vehicle.position()).s;
      progress.update(track, s);
      log.states.push_back({t, plant.vehicle, ref.braking_at(t - ref_t0), s, progress.progress});
      if (check_crash(plant.vehicle, plant_params, track, spec.boundary_buffer, obstacles).crashed) {
        log.end = EndReason::Crash;
        done = true;
        break;
      }
      if (progress.progress >= track.length()) {
        log.end = EndReason::LapComplete;
        done = true;
        break;
      }
    }
    if (done) break;
    if (plant.vehicle.vx < 0.1 && (!pl.new_plan || ref.braking_at(t - ref_t0))) {
      log.end = EndReason::SafeStop;
      break;
    }
  }
  out.metrics = adjudicate(log, track, spec.boundary_buffer, obstacles, plant_params);
  return out;
}

// Straight road with a wall across both lanes.
inline TrackSpec road_block_track(double wall_s = 80.0, double length = 300.0) {
  TrackSpec spec;
  spec.seed = 0;
  spec.track = Track({{length, 0.0}}, 4.0);
  spec.obstacles.push_back(place_obstacle(spec.track, wall_s, 1, 1.0, 2.0 * spec.track.half_width()));
  spec.obstacles.back().pose = spec.track.pose(wall_s, 0.0);
  spec.obstacles.back().lane = 0;
  return spec;
}


// ---------------------------------------------------------------------------
// CSV output.

inline std::string csv_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string plan_log_csv(const SimLog& log) {
  std::string out = "t,outcome,k1,k2,solve_time,max_w,cost,frs,n_points\n";
  for (const auto& p : log.plans) {
    out += csv_num(p.t) + "," + (p.new_plan ? "new_plan" : "brake") + "," + csv_num(p.k1) + "," + csv_num(p.k2) + "," +
           csv_num(p.solve_time) + "," + (p.new_plan ? csv_num(p.max_w) : "") + "," + (p.new_plan ? csv_num(p.cost) : "") +
           "," + std::to_string(p.frs) + "," + std::to_string(p.n_points) + "\n";
  }
  return out;
}

inline std::string state_log_csv(const SimLog& log, std::size_t every = 10) {
  std::string out = "t,x,y,heading,vx,vy,yaw_rate,braking,progress\n";
  for (std::size_t i = 0; i < log.states.size(); i += std::max<std::size_t>(every, 1)) {
    const auto& e = log.states[i];
    out += csv_num(e.t) + "," + csv_num(e.state.x) + "," + csv_num(e.state.y) + "," + csv_num(e.state.heading) + "," +
           csv_num(e.state.vx) + "," + csv_num(e.state.vy) + "," + csv_num(e.state.yaw_rate) + "," +
           (e.braking ? "1" : "0") + "," + csv_num(e.progress) + "\n";
  }
  return out;
}

inline const char* metrics_csv_header() {
  return "track_seed,planner,mode,percent_complete,crashes,safe_stops,planning_time_avg,planning_time_max,iterations,"
         "sim_time,end\n";
}

inline std::string metrics_csv_row(std::uint64_t track_seed, const std::string& planner, const std::string& mode,
                                   const SimMetrics& m) {
  return std::to_string(track_seed) + "," + planner + "," + mode + "," + csv_num(m.percent_complete) + "," +
         std::to_string(m.crashes) + "," + std::to_string(m.safe_stops) + "," + csv_num(m.planning_time_avg) + "," +
         csv_num(m.planning_time_max) + "," + std::to_string(m.iterations) + "," + csv_num(m.sim_time) + "," +
         to_string(m.end) + "\n";
}

// Table-style summary over several runs of one planner and mode.
struct BenchmarkSummary {
  double planning_time_avg = 0.0;
  double planning_time_max = 0.0;
  double percent_avg = 0.0;
  double percent_max = 0.0;
  int crashes = 0;
  int safe_stops = 0;
  std::size_t runs = 0;
};

inline BenchmarkSummary summarize(const std::vector<SimMetrics>& runs) {
  BenchmarkSummary s;
  std::size_t iters = 0;
  for (const auto& m : runs) {
    s.planning_time_avg += m.planning_time_avg * static_cast<double>(m.iterations);
    iters += m.iterations;
    s.planning_time_max = std::max(s.planning_time_max, m.planning_time_max);
    s.percent_avg += m.percent_complete;
    s.percent_max = std::max(s.percent_max, m.percent_complete);
    s.crashes += m.crashes;
    s.safe_stops += m.safe_stops;
  }
  s.runs = runs.size();
  if (iters) s.planning_time_avg /= static_cast<double>(iters);
  if (!runs.empty()) s.percent_avg /= static_cast<double>(runs.size());
  return s;
}

inline const char* summary_csv_header() {
  return "planner,mode,runs,planning_time_avg,planning_time_max,percent_complete_avg,percent_complete_max,crashes,"
         "safe_stops\n";
}

inline std::string summary_csv_row(const std::string& planner, const std::string& mode, const BenchmarkSummary& s) {
  return planner + "," + mode + "," + std::to_string(s.runs) + "," + csv_num(s.planning_time_avg) + "," +
         csv_num(s.planning_time_max) + "," + csv_num(s.percent_avg) + "," + csv_num(s.percent_max) + "," +
         std::to_string(s.crashes) + "," + std::to_string(s.safe_stops) + "\n";
}

}  // namespace rtd
