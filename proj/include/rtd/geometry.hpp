#pragma once

// Planar polygon utilities, buffered obstacle boundaries made of segments and
// radius-b arcs, boundary sampling, and the obstacle discretization X_p.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "rtd/common.hpp"

namespace rtd {

using Polygon = std::vector<Vec2>;

inline double signed_area(const Polygon& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) a += cross(p[i], p[(i + 1) % p.size()]);
  return 0.5 * a;
}

inline double perimeter(const Polygon& p) {
  double l = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) l += distance(p[i], p[(i + 1) % p.size()]);
  return l;
}

inline Polygon make_ccw(Polygon p) {
  if (signed_area(p) < 0.0) std::reverse(p.begin(), p.end());
  return p;
}

inline bool is_convex(const Polygon& p) {
  const std::size_t n = p.size();
  if (n < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = cross(p[(i + 1) % n] - p[i], p[(i + 2) % n] - p[(i + 1) % n]);
    if (std::abs(c) < 1e-14) continue;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign) return false;
  }
  return true;
}

// Proper or touching intersection of closed segments ab and cd.
inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const double v = cross(q - p, r - p);
    return v > 0 ? 1 : (v < 0 ? -1 : 0);
  };
  auto on_seg = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_seg(a, b, c)) return true;
  if (o2 == 0 && on_seg(a, b, d)) return true;
  if (o3 == 0 && on_seg(c, d, a)) return true;
  if (o4 == 0 && on_seg(c, d, b)) return true;
  return false;
}

// No two non-adjacent edges touch.
inline bool is_simple(const Polygon& p) {
  const std::size_t n = p.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n])) return false;
    }
  return std::abs(signed_area(p)) > 0.0;
}

// Even-odd test; points on the boundary may go either way.
inline bool point_in_polygon(const Polygon& poly, const Vec2& q) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > q.y) != (b.y > q.y)) {
      const double x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (q.x < x) inside = !inside;
    }
  }
  return inside;
}

inline double point_segment_distance(const Vec2& q, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  const double t = len2 > 0.0 ? std::clamp(dot(q - a, ab) / len2, 0.0, 1.0) : 0.0;
  return distance(q, a + ab * t);
}

inline double boundary_distance(const Polygon& poly, const Vec2& q) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) d = std::min(d, point_segment_distance(q, poly[i], poly[(i + 1) % poly.size()]));
  return d;
}

// Distance from q to the closed polygonal region (0 inside).
inline double polygon_distance(const Polygon& poly, const Vec2& q) {
  if (point_in_polygon(poly, q)) return 0.0;
  return boundary_distance(poly, q);
}

// Closed regions overlap: an edge crossing or one polygon containing the other.
inline bool polygons_intersect(const Polygon& a, const Polygon& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (segments_intersect(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()])) return true;
  return point_in_polygon(a, b.front()) || point_in_polygon(b, a.front());
}

// Andrew's monotone chain, counter-clockwise, collinear points dropped.
inline Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon h(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(h[k - 1] - h[k - 2], p - h[k - 2]) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

// Region grown by ex along x and ey along y (Minkowski sum with a box). Exact
// for convex input; the hull is a superset otherwise.
inline Polygon expand_by_box(const Polygon& p, double ex, double ey) {
  if (ex == 0.0 && ey == 0.0) return p;
  std::vector<Vec2> pts;
  pts.reserve(4 * p.size());
  for (const auto& v : p)
    for (double sx : {-1.0, 1.0})
      for (double sy : {-1.0, 1.0}) pts.push_back(v + Vec2{sx * ex, sy * ey});
  return convex_hull(std::move(pts));
}

// Oriented rectangle centered at `pose` (length along the heading).
inline Polygon oriented_rectangle(const Pose2& pose, double length, double width) {
  const double hl = 0.5 * length, hw = 0.5 * width;
  return {pose.to_world({-hl, -hw}), pose.to_world({hl, -hw}), pose.to_world({hl, hw}), pose.to_world({-hl, hw})};
}

struct ObstaclePolygon {
  Polygon vertices;  // counter-clockwise
  bool is_static = true;
  int id = -1;

  void validate() const {
    require(vertices.size() >= 3, "obstacle polygon needs at least 3 vertices");
    for (const auto& v : vertices) require(std::isfinite(v.x) && std::isfinite(v.y), "non-finite obstacle vertex");
    require(is_simple(vertices), "obstacle polygon must be simple");
  }
};

// ---------------------------------------------------------------------------
// Buffered boundaries

struct LineSegment {
  Vec2 a;
  Vec2 b;
  [[nodiscard]] double length() const { return distance(a, b); }
  [[nodiscard]] Vec2 at(double u) const { return a + (b - a) * u; }
};

struct CircularArc {
  Vec2 center;
  double radius = 0.0;
  double start = 0.0;  // angle, rad
  double sweep = 0.0;  // counter-clockwise span, rad (>= 0)
  [[nodiscard]] Vec2 at(double u) const {
    const double a = start + sweep * u;
    return center + Vec2{std::cos(a), std::sin(a)} * radius;
  }
  [[nodiscard]] double length() const { return radius * sweep; }
  [[nodiscard]] double chord() const { return 2.0 * radius * std::sin(0.5 * std::min(sweep, kPi)); }
};

struct BufferedBoundary {
  std::vector<LineSegment> segments;
  std::vector<CircularArc> arcs;
  double b = 0.0;
};

// Outward offset of each edge by b, joined by radius-b arcs at convex
// vertices; at reflex vertices adjacent offset edges are cut at their
// intersection.
inline BufferedBoundary buffer_polygon(const ObstaclePolygon& poly, double b, double footprint_width) {
  require(b > 0.0 && b < 0.5 * footprint_width, "buffer must lie in (0, W/2)");
  poly.validate();
  const Polygon p = make_ccw(poly.vertices);
  const std::size_t n = p.size();
  BufferedBoundary out;
  out.b = b;
  std::vector<Vec2> normal(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = p[(i + 1) % n] - p[i];
    normal[i] = Vec2{e.y, -e.x} / e.norm();
  }
  std::vector<LineSegment> seg(n);
  for (std::size_t i = 0; i < n; ++i) seg[i] = {p[i] + normal[i] * b, p[(i + 1) % n] + normal[i] * b};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;  // vertex p[j] joins edge i and edge j
    const double turn = cross(p[j] - p[i], p[(j + 1) % n] - p[j]);
    if (turn > 1e-14) {
      const double a0 = std::atan2(normal[i].y, normal[i].x);
      double sweep = std::atan2(normal[j].y, normal[j].x) - a0;
      while (sweep < 0.0) sweep += 2.0 * kPi;
      out.arcs.push_back({p[j], b, a0, sweep});
    } else if (turn < -1e-14) {
      // Intersection of the two offset lines.
      const Vec2 d1 = seg[i].b - seg[i].a;
      const Vec2 d2 = seg[j].b - seg[j].a;
      const double den = cross(d1, d2);
      if (std::abs(den) > 1e-14) {
        const double t = cross(seg[j].a - seg[i].a, d2) / den;
        const Vec2 x = seg[i].a + d1 * t;
        seg[i].b = x;
        seg[j].a = x;
      }
    }
  }
  out.segments = std::move(seg);
  return out;
}

// Exact enclosed area of a buffered boundary (Green's theorem).
inline double enclosed_area(const BufferedBoundary& bb) {
  double twice = 0.0;
  for (const auto& s : bb.segments) twice += cross(s.a, s.b);
  for (const auto& a : bb.arcs) {
    const double t0 = a.start, t1 = a.start + a.sweep;
    twice += a.radius * a.radius * a.sweep +
             a.radius * (a.center.x * (std::sin(t1) - std::sin(t0)) - a.center.y * (std::cos(t1) - std::cos(t0)));
  }
  return 0.5 * twice;
}

// Ray-casting membership for the region bounded by segments and arcs.
inline bool inside_boundary(const BufferedBoundary& bb, const Vec2& q) {
  int crossings = 0;
  for (const auto& s : bb.segments) {
    if ((s.a.y > q.y) != (s.b.y > q.y)) {
      const double x = s.a.x + (q.y - s.a.y) * (s.b.x - s.a.x) / (s.b.y - s.a.y);
      if (q.x < x) ++crossings;
    }
  }
  for (const auto& a : bb.arcs) {
    const double dy = q.y - a.center.y;
    if (std::abs(dy) >= a.radius) continue;
    const double dx = std::sqrt(a.radius * a.radius - dy * dy);
    for (double x : {a.center.x - dx, a.center.x + dx}) {
      if (x <= q.x) continue;
      double ang = std::atan2(dy, x - a.center.x) - a.start;
      while (ang < 0.0) ang += 2.0 * kPi;
      while (ang >= 2.0 * kPi) ang -= 2.0 * kPi;
      if (ang < a.sweep) ++crossings;
    }
  }
  return crossings % 2 == 1;
}

// ---------------------------------------------------------------------------
// Sampling and discretization

// Uniform subdivision with consecutive 2-norm gaps <= s, end points included.
inline std::vector<Vec2> sample_curve(const LineSegment& seg, double s) {
  require(s > 0.0, "spacing must be positive");
  const double len = seg.length();
  if (len == 0.0) return {seg.a};
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / s - 1e-9)));
  std::vector<Vec2> out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out.push_back(i == n ? seg.b : seg.at(static_cast<double>(i) / static_cast<double>(n)));
  return out;
}

// Arc spacing is measured by chord length.
inline std::vector<Vec2> sample_curve(const CircularArc& arc, double s) {
  require(s > 0.0, "spacing must be positive");
  if (arc.sweep == 0.0 || arc.radius == 0.0) return {arc.at(0.0)};
  double n_real = 1.0;
  if (s < 2.0 * arc.radius) n_real = arc.sweep / (2.0 * std::asin(s / (2.0 * arc.radius)));
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(n_real - 1e-9)));
  std::vector<Vec2> out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out.push_back(arc.at(static_cast<double>(i) / static_cast<double>(n)));
  return out;
}

struct Spacings {
  double line = 0.0;
  double arc = 0.0;
};

// Point spacings that keep a footprint wider than 2b from slipping between
// adjacent points.
inline Spacings lemma2_spacings(double b) { return {2.0 * b, 2.0 * b * std::sin(kPi / 4.0)}; }

struct DiscretizedObstacle {
  std::vector<Vec2> points;
  double s_line = 0.0;
  double s_arc = 0.0;
  int source_id = -1;
};

inline void dedupe_points(std::vector<Vec2>& pts, double tol = 1e-9) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    bool dup = false;
    // Duplicates only arise at shared curve end points, which are adjacent in order.
    for (std::size_t k = out.size() >= 3 ? out.size() - 3 : 0; k < out.size(); ++k)
      if (distance(out[k], p) <= tol) dup = true;
    if (!dup && !out.empty() && distance(out.front(), p) <= tol) dup = true;
    if (!dup) out.push_back(p);
  }
  pts = std::move(out);
}

// Points along the boundary in curve order: arc at a vertex follows the segment ending there.
inline DiscretizedObstacle discretize(const BufferedBoundary& bb, const Spacings& sp, int source_id = -1,
                                      bool dedupe = true) {
  DiscretizedObstacle out;
  out.s_line = sp.line;
  out.s_arc = sp.arc;
  out.source_id = source_id;
  // Arcs are stored per convex vertex; match them to the segment that ends at their start point.
  std::vector<bool> used(bb.arcs.size(), false);
  for (const auto& seg : bb.segments) {
    for (const auto& p : sample_curve(seg, sp.line)) out.points.push_back(p);
    for (std::size_t k = 0; k < bb.arcs.size(); ++k) {
      if (used[k] || distance(bb.arcs[k].at(0.0), seg.b) > 1e-9) continue;
      for (const auto& p : sample_curve(bb.arcs[k], sp.arc)) out.points.push_back(p);
      used[k] = true;
      break;
    }
  }
  for (std::size_t k = 0; k < bb.arcs.size(); ++k)
    if (!used[k])
      for (const auto& p : sample_curve(bb.arcs[k], sp.arc)) out.points.push_back(p);
  if (dedupe) dedupe_points(out.points);
  return out;
}

// Obstacle grown by the state-estimation bounds, buffered by b, sampled at
// the Lemma-2 spacings.
inline DiscretizedObstacle discretize_obstacle(const ObstaclePolygon& obs, double b, double eps_x, double eps_y,
                                               double footprint_width) {
  ObstaclePolygon grown = obs;
  grown.vertices = expand_by_box(make_ccw(obs.vertices), eps_x, eps_y);
  return discretize(buffer_polygon(grown, b, footprint_width), lemma2_spacings(b), obs.id);
}

inline std::vector<Vec2> discretize_all(const std::vector<ObstaclePolygon>& obstacles, double b, double eps_x,
                                        double eps_y, double footprint_width) {
  std::vector<Vec2> out;
  for (const auto& o : obstacles) {
    const auto d = discretize_obstacle(o, b, eps_x, eps_y, footprint_width);
    out.insert(out.end(), d.points.begin(), d.points.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conservativeness oracle

inline bool point_in_convex(const Polygon& ccw, const Vec2& q) {
  for (std::size_t i = 0; i < ccw.size(); ++i)
    if (cross(ccw[(i + 1) % ccw.size()] - ccw[i], q - ccw[i]) < 0.0) return false;
  return true;
}

struct OracleConfig {
  double length_scale_max = 1.5;  // pose rectangles are footprint x [1, max]
};

// Random rectangles at least W wide (and `length` long) that overlap the
// polygon; counts the ones containing no point of X_p.
inline std::size_t conservativeness_oracle(const ObstaclePolygon& poly, const std::vector<Vec2>& xp, double width,
                                           double length, std::size_t n_poses, std::uint64_t seed,
                                           const OracleConfig& cfg = {}) {
  poly.validate();
  Rng rng(seed);
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (const auto& v : poly.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y)};
  }
  const double reach = 0.5 * std::hypot(length, width) * cfg.length_scale_max;
  std::size_t violations = 0, accepted = 0;
  for (std::size_t tries = 0; accepted < n_poses; ++tries) {
    require(tries < 1000 * n_poses + 1000, "oracle could not place intersecting poses");
    const double w = width * rng.uniform(1.0, cfg.length_scale_max);
    const double l = std::max(length, w) * rng.uniform(1.0, cfg.length_scale_max);
    const Pose2 pose{rng.uniform(lo.x - reach, hi.x + reach), rng.uniform(lo.y - reach, hi.y + reach),
                     rng.uniform(-kPi, kPi)};
    const Polygon rect = oriented_rectangle(pose, l, w);
    if (!polygons_intersect(rect, poly.vertices)) continue;
    ++accepted;
    bool hit = false;
    for (const auto& q : xp)
      if (point_in_convex(rect, q)) {
        hit = true;
        break;
      }
    if (!hit) ++violations;
  }
  return violations;
}

// Random simple polygon (star-shaped around a center) for oracle tests.
inline ObstaclePolygon random_polygon(Rng& rng, std::size_t n_vertices, double radius_lo, double radius_hi) {
  std::vector<double> angles(n_vertices);
  for (auto& a : angles) a = rng.uniform(0.0, 2.0 * kPi);
  std::sort(angles.begin(), angles.end());
  ObstaclePolygon p;
  for (double a : angles) {
    const double r = rng.uniform(radius_lo, radius_hi);
    p.vertices.push_back({r * std::cos(a), r * std::sin(a)});
  }
  // Degenerate draws (coincident angles) fall back to a triangle.
  if (!is_simple(p.vertices)) p.vertices = {{radius_hi, 0.0}, {-radius_lo, radius_hi}, {-radius_lo, -radius_hi}};
  return p;
}

}  // namespace rtd
