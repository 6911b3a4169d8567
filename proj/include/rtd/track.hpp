#pragma once

// Randomized closed test tracks: a counter-clockwise loop of straights and
// left-turning arcs with two lanes, lane-centered static obstacles, boundary
// strips treated as obstacles, and a range sensor with memory.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "rtd/common.hpp"
#include "rtd/geometry.hpp"

namespace rtd {

struct TrackPrimitive {
  double length = 0.0;     // arc length of the centerline, m
  double curvature = 0.0;  // 1/m, 0 for straights, > 0 turns left
  bool operator==(const TrackPrimitive&) const = default;
};

struct TrackObstacle {
  double s = 0.0;      // centerline arc length of the obstacle center
  int lane = 0;        // +1 left lane, -1 right lane
  double length = 0.0;
  double width = 0.0;
  Pose2 pose;          // world pose of the center
  bool operator==(const TrackObstacle& o) const {
    return s == o.s && lane == o.lane && length == o.length && width == o.width && pose.x == o.pose.x &&
           pose.y == o.pose.y && pose.heading == o.pose.heading;
  }
};

struct TrackConfig {
  double target_length = 1036.0;
  double length_tolerance = 0.02;
  int turns = 7;
  Interval curvature{0.005, 0.04};
  Interval turn_angle{0.45, 1.5};  // rad per corner
  double min_straight = 25.0;
  double lane_width = 4.0;
  int n_obstacles = 20;
  Interval obstacle_length{3.3, 5.1};
  Interval obstacle_width{1.7, 2.5};
  Interval obstacle_spacing{40.0, 55.0};
  double first_obstacle_min = 50.0;
  double first_obstacle_max = 55.0;
  double end_clearance = 20.0;  // last obstacle at least this far before the finish
  double boundary_buffer = 2.5;
  int max_attempts = 200000;
};

struct CenterlinePoint {
  Vec2 p;
  double heading = 0.0;
  double curvature = 0.0;
};

class Track {
 public:
  Track() = default;
  Track(std::vector<TrackPrimitive> prims, double lane_width, Pose2 start = {})
      : prims_(std::move(prims)), lane_width_(lane_width), start_(start) {
    require(!prims_.empty(), "track needs primitives");
    require(lane_width_ > 0.0, "lane width must be positive");
    Pose2 pose = start_;
    double s = 0.0;
    for (const auto& pr : prims_) {
      require(pr.length > 0.0 && std::isfinite(pr.curvature), "invalid track primitive");
      starts_.push_back({s, pose});
      pose = advance(pose, pr, pr.length);
      s += pr.length;
    }
    length_ = s;
    closure_ = {pose.x - start_.x, pose.y - start_.y, wrap_angle(pose.heading - start_.heading)};
  }

  [[nodiscard]] const std::vector<TrackPrimitive>& primitives() const { return prims_; }
  [[nodiscard]] double length() const { return length_; }
  [[nodiscard]] double lane_width() const { return lane_width_; }
  [[nodiscard]] double half_width() const { return lane_width_; }  // two lanes
  [[nodiscard]] const Pose2& start() const { return start_; }
  [[nodiscard]] Pose2 closure_error() const { return closure_; }
  // Lateral offset of a lane center: +1 left, -1 right.
  [[nodiscard]] double lane_offset(int lane) const { return 0.5 * lane_width_ * (lane > 0 ? 1.0 : -1.0); }

  [[nodiscard]] CenterlinePoint at(double s) const {
    s = wrap_s(s);
    std::size_t i = index_at(s);
    const auto& pr = prims_[i];
    const Pose2 p = advance(starts_[i].pose, pr, s - starts_[i].s);
    return {p.position(), p.heading, pr.curvature};
  }

  // Point at arc length s and lateral offset d (left positive).
  [[nodiscard]] Vec2 point(double s, double d) const {
    const CenterlinePoint c = at(s);
    return c.p + Vec2{-std::sin(c.heading), std::cos(c.heading)} * d;
  }
  [[nodiscard]] Pose2 pose(double s, double d = 0.0) const {
    const Vec2 p = point(s, d);
    return {p.x, p.y, at(s).heading};
  }

  // Nearest centerline location: arc length and signed lateral offset.
  struct Projection {
    double s = 0.0;
    double d = 0.0;
  };
  [[nodiscard]] Projection project(const Vec2& q) const {
    Projection best{0.0, std::numeric_limits<double>::infinity()};
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < prims_.size(); ++i) {
      const auto& pr = prims_[i];
      const Pose2& p0 = starts_[i].pose;
      double u = 0.0;
      if (pr.curvature == 0.0) {
        u = std::clamp(dot(q - p0.position(), Vec2{std::cos(p0.heading), std::sin(p0.heading)}), 0.0, pr.length);
      } else {
        const double r = 1.0 / pr.curvature;
        const Vec2 c = p0.position() + Vec2{-std::sin(p0.heading), std::cos(p0.heading)} * r;
        const Vec2 rel0 = p0.position() - c;
        const Vec2 relq = q - c;
        double ang = std::atan2(cross(rel0, relq), dot(rel0, relq));
        if (ang < 0.0 && ang < -0.5 * (2.0 * kPi - pr.length * pr.curvature)) ang += 2.0 * kPi;
        u = std::clamp(ang * r, 0.0, pr.length);
      }
      const Pose2 p = advance(p0, pr, u);
      const Vec2 rel = q - p.position();
      const double dist = rel.norm();
      if (dist < best_dist) {
        best_dist = dist;
        best = {starts_[i].s + u, cross(Vec2{std::cos(p.heading), std::sin(p.heading)}, rel)};
      }
    }
    return best;
  }

  // Arc length wrapped into [0, L).
  [[nodiscard]] double wrap_s(double s) const {
    s = std::fmod(s, length_);
    if (s < 0.0) s += length_;
    return s;
  }

  // Polyline of a lateral offset over [s0, s1] sampled every ds.
  [[nodiscard]] std::vector<Vec2> offset_polyline(double s0, double s1, double d, double ds) const {
    std::vector<Vec2> out;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((s1 - s0) / ds)));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(point(s0 + (s1 - s0) * static_cast<double>(i) / static_cast<double>(n), d));
    return out;
  }

 private:
  struct Start {
    double s;
    Pose2 pose;
  };

  static Pose2 advance(const Pose2& p, const TrackPrimitive& pr, double u) {
    if (pr.curvature == 0.0) return {p.x + u * std::cos(p.heading), p.y + u * std::sin(p.heading), p.heading};
    const double r = 1.0 / pr.curvature;
    const double a = u * pr.curvature;
    return {p.x + r * (std::sin(p.heading + a) - std::sin(p.heading)),
            p.y - r * (std::cos(p.heading + a) - std::cos(p.heading)), p.heading + a};
  }

  [[nodiscard]] std::size_t index_at(double s) const {
    std::size_t i = 0;
    while (i + 1 < starts_.size() && starts_[i + 1].s <= s) ++i;
    return i;
  }

  std::vector<TrackPrimitive> prims_;
  std::vector<Start> starts_;
  double lane_width_ = 4.0;
  double length_ = 0.0;
  Pose2 start_;
  Pose2 closure_;
};

struct TrackSpec {
  std::uint64_t seed = 0;
  Track track;
  std::vector<TrackObstacle> obstacles;
  double boundary_buffer = 2.5;
  int start_lane = 1;  // left

  [[nodiscard]] ObstaclePolygon obstacle_polygon(std::size_t i) const {
    const auto& o = obstacles[i];
    ObstaclePolygon p;
    p.vertices = oriented_rectangle(o.pose, o.length, o.width);
    p.id = static_cast<int>(i);
    return p;
  }
  [[nodiscard]] std::vector<ObstaclePolygon> obstacle_polygons() const {
    std::vector<ObstaclePolygon> out;
    for (std::size_t i = 0; i < obstacles.size(); ++i) out.push_back(obstacle_polygon(i));
    return out;
  }
};

inline TrackObstacle place_obstacle(const Track& track, double s, int lane, double length, double width) {
  TrackObstacle o;
  o.s = s;
  o.lane = lane;
  o.length = length;
  o.width = width;
  o.pose = track.pose(s, track.lane_offset(lane));
  return o;
}

// Closed loop: straight_i then a left arc_i, i = 0..turns-1. Turn angles sum to
// 2 pi; straight lengths solve closure and total length exactly.
inline Track generate_loop(Rng& rng, const TrackConfig& cfg) {
  const int n = cfg.turns;
  require(n >= 3, "need at least 3 turns");
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::vector<double> phi(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (auto& p : phi) sum += (p = rng.uniform(cfg.turn_angle));
    for (auto& p : phi) p *= 2.0 * kPi / sum;
    bool ok = true;
    for (double p : phi) ok = ok && cfg.turn_angle.contains(p);
    if (!ok) continue;
    std::vector<double> kappa(static_cast<std::size_t>(n));
    double arc_total = 0.0;
    for (std::size_t i = 0; i < kappa.size(); ++i) {
      // log-uniform curvature
      kappa[i] = std::exp(rng.uniform(std::log(cfg.curvature.lo), std::log(cfg.curvature.hi)));
      arc_total += phi[i] / kappa[i];
    }
    const double straight_total = cfg.target_length - arc_total;
    if (straight_total < n * cfg.min_straight) continue;
    // Net displacement of the arcs and straight directions.
    Vec2 arc_disp{0.0, 0.0};
    std::vector<double> heading(static_cast<std::size_t>(n));
    double h = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      heading[i] = h;
      const double r = 1.0 / kappa[i];
      arc_disp += Vec2{r * (std::sin(h + phi[i]) - std::sin(h)), -r * (std::cos(h + phi[i]) - std::cos(h))};
      h += phi[i];
    }
    // Free straights: random; three solved from closure (2) + length (1).
    std::vector<double> L(static_cast<std::size_t>(n), 0.0);
    std::array<std::size_t, 3> solved{};
    {
      std::vector<std::size_t> idx(static_cast<std::size_t>(n));
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
      for (std::size_t k = 0; k < 3; ++k) solved[k] = idx[k];
    }
    double free_len = 0.0;
    Vec2 free_disp{0.0, 0.0};
    const double mean = straight_total / n;
    for (std::size_t i = 0; i < L.size(); ++i) {
      if (std::find(solved.begin(), solved.end(), i) != solved.end()) continue;
      L[i] = rng.uniform(cfg.min_straight, 2.0 * mean);
      free_len += L[i];
      free_disp += Vec2{std::cos(heading[i]), std::sin(heading[i])} * L[i];
    }
    Eigen::Matrix3d a;
    Eigen::Vector3d rhs;
    for (int k = 0; k < 3; ++k) {
      const double hd = heading[solved[static_cast<std::size_t>(k)]];
      a(0, k) = std::cos(hd);
      a(1, k) = std::sin(hd);
      a(2, k) = 1.0;
    }
    rhs << -(arc_disp.x + free_disp.x), -(arc_disp.y + free_disp.y), straight_total - free_len;
    if (std::abs(a.determinant()) < 1e-6) continue;
    const Eigen::Vector3d sol = a.partialPivLu().solve(rhs);
    for (int k = 0; k < 3; ++k) L[solved[static_cast<std::size_t>(k)]] = sol(k);
    if (*std::min_element(L.begin(), L.end()) < cfg.min_straight) continue;
    std::vector<TrackPrimitive> prims;
    for (std::size_t i = 0; i < L.size(); ++i) {
      prims.push_back({L[i], 0.0});
      prims.push_back({phi[i] / kappa[i], kappa[i]});
    }
    Track t(std::move(prims), cfg.lane_width);
    const Pose2 c = t.closure_error();
    if (std::hypot(c.x, c.y) > 1e-6 || std::abs(c.heading) > 1e-9) continue;
    return t;
  }
  fail("track generation failed: configuration infeasible");
}

inline TrackSpec generate_track(std::uint64_t seed, const TrackConfig& cfg = {}) {
  require(cfg.obstacle_spacing.lo > 0.0 && cfg.obstacle_spacing.hi >= cfg.obstacle_spacing.lo, "bad spacing band");
  const double min_span = cfg.first_obstacle_min + (cfg.n_obstacles - 1) * cfg.obstacle_spacing.lo;
  require(cfg.n_obstacles == 0 || min_span + cfg.end_clearance <= cfg.target_length * (1.0 - cfg.length_tolerance),
          "obstacle spacing band does not fit on the track");
  Rng rng(split_seed(seed, 1));
  TrackSpec spec;
  spec.seed = seed;
  spec.boundary_buffer = cfg.boundary_buffer;
  spec.track = generate_loop(rng, cfg);
  const double L = spec.track.length();
  Rng orng(split_seed(seed, 2));
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::vector<TrackObstacle> obs;
    double s = orng.uniform(cfg.first_obstacle_min, cfg.first_obstacle_max);
    for (int i = 0; i < cfg.n_obstacles; ++i) {
      if (i > 0) s += orng.uniform(cfg.obstacle_spacing);
      const int lane = orng.coin() ? 1 : -1;
      const double len = orng.uniform(cfg.obstacle_length);
      const double wid = orng.uniform(cfg.obstacle_width);
      obs.push_back(place_obstacle(spec.track, s, lane, len, wid));
    }
    if (!obs.empty() && obs.back().s + 0.5 * obs.back().length > L - cfg.end_clearance) continue;
    spec.obstacles = std::move(obs);
    return spec;
  }
  fail("obstacle placement failed: configuration infeasible");
}

// Strips of width `buffer` just outside both road edges, one quadrilateral per
// piece. Outer-edge chords are pushed out so strips never cut into the road.
inline std::vector<ObstaclePolygon> road_boundary_obstacles(const Track& track, double buffer, double max_piece = 5.0) {
  std::vector<ObstaclePolygon> out;
  const double hw = track.half_width();
  double s0 = 0.0;
  int id = 100000;
  for (const auto& pr : track.primitives()) {
    const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(pr.length / max_piece)));
    for (std::size_t k = 0; k < pieces; ++k) {
      const double a = s0 + pr.length * static_cast<double>(k) / static_cast<double>(pieces);
      const double b = s0 + pr.length * static_cast<double>(k + 1) / static_cast<double>(pieces);
      const double dtheta = (b - a) * pr.curvature;
      for (int side : {1, -1}) {
        // Chords on the outer edge of a turn cut inward, so push that edge
        // out to radius r/cos(dtheta/2).
        double inner = hw;
        double outer = hw + buffer;
        if (pr.curvature != 0.0 && side < 0) {
          // right edge of a left turn: the strip lies outside the circle
          const double r_edge = 1.0 / pr.curvature + hw;
          inner = r_edge / std::cos(0.5 * dtheta) - 1.0 / pr.curvature;
          outer = inner + buffer;
        }
        ObstaclePolygon p;
        p.id = id++;
        const double sd = static_cast<double>(side);
        p.vertices = {track.point(a, sd * inner), track.point(b, sd * inner), track.point(b, sd * outer),
                      track.point(a, sd * outer)};
        p.vertices = make_ccw(p.vertices);
        out.push_back(p);
      }
    }
    s0 += pr.length;
  }
  return out;
}

// Obstacles with any vertex within range of the center of mass are added to
// the memory; remembered obstacles are never dropped.
class ObstacleMemory {
 public:
  std::vector<std::size_t> scan(const TrackSpec& spec, const Vec2& com, double d_sense) {
    std::vector<std::size_t> newly;
    for (std::size_t i = 0; i < spec.obstacles.size(); ++i) {
      if (seen_.count(i)) continue;
      const ObstaclePolygon p = spec.obstacle_polygon(i);
      for (const auto& v : p.vertices)
        if (distance(v, com) < d_sense) {
          seen_.insert(i);
          newly.push_back(i);
          break;
        }
    }
    return newly;
  }
  [[nodiscard]] const std::set<std::size_t>& seen() const { return seen_; }
  [[nodiscard]] bool contains(std::size_t i) const { return seen_.count(i) > 0; }

 private:
  std::set<std::size_t> seen_;
};

inline std::vector<std::size_t> sensor_scan(const TrackSpec& spec, const Pose2& pose, double d_sense,
                                            ObstacleMemory& memory) {
  memory.scan(spec, pose.position(), d_sense);
  return {memory.seen().begin(), memory.seen().end()};
}

}  // namespace rtd
