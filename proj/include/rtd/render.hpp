#pragma once

// SVG output: a run on a track (footprints over time, blue while tracking and
// red while braking) and a single-plan view with the FRS contour in green.
// World coordinates are meters; y is flipped into SVG space by the root
// group's transform.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rtd/frs.hpp"
#include "rtd/geometry.hpp"
#include "rtd/sim.hpp"
#include "rtd/track.hpp"

namespace rtd {

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity(), y0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity(), y1 = -std::numeric_limits<double>::infinity();
  void add(const Vec2& p) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  [[nodiscard]] bool empty() const { return !(x1 >= x0 && y1 >= y0); }
};

class SvgDocument {
 public:
  explicit SvgDocument(double px_per_m = 10.0) : scale_(px_per_m) {}

  void include(const Vec2& p) { bounds_.add(p); }

  void begin_layer(const std::string& id) {
    body_ << "<g id=\"" << id << "\">\n";
  }
  void end_layer() { body_ << "</g>\n"; }

  void polyline(const std::vector<Vec2>& pts, const std::string& stroke, double width, bool closed = false,
                const std::string& fill = "none", const std::string& dash = "") {
    if (pts.empty()) return;
    for (const auto& p : pts) include(p);
    body_ << (closed ? "<polygon" : "<polyline") << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].x) << "," << num(pts[i].y);
    body_ << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }

  void circle(const Vec2& c, double r, const std::string& fill) {
    include(c);
    body_ << "<circle cx=\"" << num(c.x) << "\" cy=\"" << num(c.y) << "\" r=\"" << num(r) << "\" fill=\"" << fill
          << "\"/>\n";
  }

  // One path element made of independent segments.
  void segments(const std::vector<std::array<Vec2, 2>>& segs, const std::string& stroke, double width,
                const std::string& id) {
    body_ << "<path id=\"" << id << "\" fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width)
          << "\" d=\"";
    for (const auto& s : segs) {
      include(s[0]);
      include(s[1]);
      body_ << "M" << num(s[0].x) << " " << num(s[0].y) << "L" << num(s[1].x) << " " << num(s[1].y);
    }
    body_ << "\"/>\n";
  }

  [[nodiscard]] std::string str(double margin = 5.0) const {
    Bounds b = bounds_;
    if (b.empty()) b = {-10.0, -10.0, 10.0, 10.0};  // blank canvas
    const double w = (b.x1 - b.x0 + 2.0 * margin) * scale_;
    const double h = (b.y1 - b.y0 + 2.0 * margin) * scale_;
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" viewBox=\"0 0 " << num(w) << " " << num(h) << "\" data-units=\"m\" data-scale=\"" << num(scale_)
        << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        // world meters -> pixels, y up
        << "<g id=\"world\" transform=\"translate(" << num((margin - b.x0) * scale_) << ","
        << num((b.y1 + margin) * scale_) << ") scale(" << num(scale_) << "," << num(-scale_) << ")\">\n"
        << axes(b) << body_.str() << "</g>\n</svg>\n";
    return out.str();
  }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
  }

 private:
  static std::string axes(const Bounds& b) {
    std::ostringstream a;
    a << "<g id=\"axes\" stroke=\"#bbbbbb\" stroke-width=\"0.05\">\n";
    a << "<line x1=\"" << num(b.x0) << "\" y1=\"0\" x2=\"" << num(b.x1) << "\" y2=\"0\"/>\n";
    a << "<line x1=\"0\" y1=\"" << num(b.y0) << "\" x2=\"0\" y2=\"" << num(b.y1) << "\"/>\n";
    a << "</g>\n";
    return a.str();
  }

  double scale_;
  Bounds bounds_;
  std::ostringstream body_;
};

inline void draw_track(SvgDocument& svg, const Track& track) {
  const double L = track.length();
  svg.begin_layer("track");
  svg.polyline(track.offset_polyline(0.0, L, track.half_width(), 2.0), "black", 0.15);
  svg.polyline(track.offset_polyline(0.0, L, -track.half_width(), 2.0), "black", 0.15);
  svg.end_layer();
  svg.begin_layer("lanes");
  svg.polyline(track.offset_polyline(0.0, L, 0.0, 2.0), "#888888", 0.08, false, "none", "1,1");
  svg.end_layer();
}

inline void draw_obstacles(SvgDocument& svg, const std::vector<Polygon>& obstacles) {
  if (obstacles.empty()) return;
  svg.begin_layer("obstacles");
  for (const auto& o : obstacles) svg.polyline(o, "#cc6600", 0.05, true, "orange");
  svg.end_layer();
}

inline void draw_points(SvgDocument& svg, const std::vector<Vec2>& pts, double r = 0.04) {
  if (pts.empty()) return;
  svg.begin_layer("xp");
  for (const auto& p : pts) svg.circle(p, r, "black");
  svg.end_layer();
}

inline void draw_footprints(SvgDocument& svg, const std::vector<std::pair<VehicleState, bool>>& poses,
                            const VehicleParams& p) {
  if (poses.empty()) return;
  svg.begin_layer("footprints");
  for (const auto& [s, braking] : poses) {
    const auto fp = footprint_polygon(s, p);
    svg.polyline(Polygon(fp.begin(), fp.end()), braking ? "red" : "blue", 0.05, true);
  }
  svg.end_layer();
}

// Whole run: track, obstacles and a footprint every `every` logged states.
inline std::string render_run(const TrackSpec& spec, const SimLog& log, const VehicleParams& p, std::size_t every = 50) {
  SvgDocument svg(4.0);
  draw_track(svg, spec.track);
  std::vector<Polygon> obs;
  for (const auto& o : spec.obstacle_polygons()) obs.push_back(o.vertices);
  draw_obstacles(svg, obs);
  std::vector<std::pair<VehicleState, bool>> poses;
  for (std::size_t i = 0; i < log.states.size(); i += std::max<std::size_t>(every, 1))
    poses.push_back({log.states[i].state, log.states[i].braking});
  if (!log.states.empty()) poses.push_back({log.states.back().state, log.states.back().braking});
  draw_footprints(svg, poses, p);
  return svg.str();
}

struct PlanView {
  const FrsPolynomial* frs = nullptr;
  TrajectoryParam k;
  std::vector<Polygon> obstacles;  // plan frame
  std::vector<Vec2> xp;            // plan frame
  std::vector<std::pair<VehicleState, bool>> footprints;
  VehicleParams params;
  double resolution = 0.1;
};

// Single plan in its own frame: FRS contour for k (green), obstacles, X_p and
// footprints of the executed plan.
inline std::string render_plan(const PlanView& v) {
  require(v.frs != nullptr, "plan view needs an FRS");
  SvgDocument svg(20.0);
  draw_obstacles(svg, v.obstacles);
  draw_points(svg, v.xp);
  draw_footprints(svg, v.footprints, v.params);
  const Contour c = project_X(*v.frs, v.k, v.resolution);
  svg.begin_layer("frs");
  svg.segments(c.segments, "green", 0.08, "frs-contour");
  svg.end_layer();
  return svg.str();
}

}  // namespace rtd
