#pragma once

// JSON (nlohmann) serialization of the offline artifacts and tracks, plus a
// few file helpers. Doubles are written in shortest round-trip form, so a
// load of a saved file reproduces every value bit for bit.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rtd/error_function.hpp"
#include "rtd/frs.hpp"
#include "rtd/track.hpp"
#include "rtd/vehicle_measurements.hpp"

namespace rtd {

using Json = nlohmann::json;

inline Json to_json(const Interval& i) { return Json::array({i.lo, i.hi}); }
inline Interval interval_from_json(const Json& j) {
  require(j.is_array() && j.size() == 2, "interval must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Json to_json(const ErrorFunction& g) {
  return {{"coeffs_x", g.coeffs_x}, {"coeffs_y", g.coeffs_y}, {"speed_range", to_json(g.speed_range)},
          {"T", g.T},               {"margin", g.margin},     {"floor", g.floor},
          {"seed", g.seed},         {"n_samples", g.n_samples}, {"n_rollouts", g.n_rollouts}};
}

inline ErrorFunction error_function_from_json(const Json& j) {
  ErrorFunction g;
  g.coeffs_x = j.at("coeffs_x").get<std::array<double, 3>>();
  g.coeffs_y = j.at("coeffs_y").get<std::array<double, 3>>();
  g.speed_range = interval_from_json(j.at("speed_range"));
  g.T = j.at("T").get<double>();
  g.margin = j.value("margin", 0.0);
  g.floor = j.value("floor", 0.0);
  g.seed = j.value("seed", std::uint64_t{0});
  g.n_samples = j.value("n_samples", std::size_t{0});
  g.n_rollouts = j.value("n_rollouts", std::size_t{0});
  require(g.T > 0.0, "error function horizon must be positive");
  return g;
}

inline Json to_json(const PredictionErrorBound& b) {
  return {{"eps", b.eps}, {"eps_x", b.eps_x}, {"eps_y", b.eps_y}};
}
inline PredictionErrorBound prediction_error_from_json(const Json& j) {
  PredictionErrorBound b;
  b.eps = j.at("eps").get<std::array<double, 8>>();
  b.eps_x = j.at("eps_x").get<double>();
  b.eps_y = j.at("eps_y").get<double>();
  return b;
}

inline Json to_json(const ParamBox& b) {
  return {{"k1", to_json(b.k1)}, {"k2", to_json(b.k2)}, {"dk2_limit", b.dk2_limit}, {"k1_limit", b.k1_limit}};
}
inline ParamBox param_box_from_json(const Json& j) {
  ParamBox b;
  b.k1 = interval_from_json(j.at("k1"));
  b.k2 = interval_from_json(j.at("k2"));
  b.dk2_limit = j.value("dk2_limit", 1.0);
  b.k1_limit = j.value("k1_limit", 0.25);
  return b;
}

inline Json to_json(const FrsPolynomial& w) {
  Json mons = Json::array();
  for (const auto& e : w.exponents) mons.push_back(e);
  return {{"alpha", w.alpha},
          {"T", w.T},
          {"tau_plan", w.tau_plan},
          {"d_stop", w.d_stop},
          {"speed_range", to_json(w.speed_range)},
          {"param_box", to_json(w.param_box)},
          {"monomials", mons},
          {"coefficients", w.coeffs},
          {"g", to_json(w.g_ref)},
          {"domain_box", {{"x", to_json(w.domain.x)}, {"y", to_json(w.domain.y)}}},
          {"audit",
           {{"seed", w.audit.seed},
            {"external", w.audit.external},
            {"n_fit", w.audit.n_fit},
            {"fit_containment", w.audit.fit_containment},
            {"n_holdout", w.audit.n_holdout},
            {"containment", w.audit.holdout_containment},
            {"assumption4_trials", w.audit.assumption4_trials},
            {"assumption4_violations", w.audit.assumption4_violations},
            {"shift", w.audit.shift}}}};
}

// Also the import path for externally computed coefficients: missing audit
// fields are allowed and the entry is then marked external.
inline FrsPolynomial frs_from_json(const Json& j) {
  FrsPolynomial w;
  w.alpha = j.at("alpha").get<int>();
  w.T = j.at("T").get<double>();
  w.tau_plan = j.value("tau_plan", 0.5);
  w.d_stop = j.value("d_stop", 0.0);
  w.speed_range = interval_from_json(j.at("speed_range"));
  w.param_box = param_box_from_json(j.at("param_box"));
  for (const auto& e : j.at("monomials")) w.exponents.push_back(e.get<Exponent>());
  w.coeffs = j.at("coefficients").get<std::vector<double>>();
  if (j.contains("g")) w.g_ref = error_function_from_json(j.at("g"));
  w.domain.x = interval_from_json(j.at("domain_box").at("x"));
  w.domain.y = interval_from_json(j.at("domain_box").at("y"));
  if (j.contains("audit") && !j.at("audit").value("external", false)) {
    const Json& a = j.at("audit");
    w.audit.seed = a.value("seed", std::uint64_t{0});
    w.audit.n_fit = a.value("n_fit", std::size_t{0});
    w.audit.fit_containment = a.value("fit_containment", 0.0);
    w.audit.n_holdout = a.value("n_holdout", std::size_t{0});
    w.audit.holdout_containment = a.value("containment", 0.0);
    w.audit.assumption4_trials = a.value("assumption4_trials", std::size_t{0});
    w.audit.assumption4_violations = a.value("assumption4_violations", std::size_t{0});
    w.audit.shift = a.value("shift", 0.0);
  } else {
    w.audit.external = true;
    if (j.contains("audit")) w.audit.seed = j.at("audit").value("seed", std::uint64_t{0});
  }
  // The constant term must come first (the fit's shift relies on it).
  require(!w.exponents.empty() && w.exponents.front() == Exponent{0, 0, 0, 0}, "first monomial must be the constant");
  w.validate();
  return w;
}

inline Json to_json(const TrackSpec& t) {
  Json prims = Json::array();
  for (const auto& p : t.track.primitives()) prims.push_back({{"length", p.length}, {"curvature", p.curvature}});
  Json obs = Json::array();
  for (const auto& o : t.obstacles)
    obs.push_back({{"s", o.s},
                   {"lane", o.lane},
                   {"pose", {{"x", o.pose.x}, {"y", o.pose.y}, {"heading", o.pose.heading}}},
                   {"length", o.length},
                   {"width", o.width}});
  const Pose2& st = t.track.start();
  return {{"seed", t.seed},
          {"lane_width", t.track.lane_width()},
          {"boundary_buffer", t.boundary_buffer},
          {"start_lane", t.start_lane},
          {"start", {{"x", st.x}, {"y", st.y}, {"heading", st.heading}}},
          {"primitives", prims},
          {"obstacles", obs}};
}

inline TrackSpec track_from_json(const Json& j) {
  TrackSpec t;
  t.seed = j.value("seed", std::uint64_t{0});
  std::vector<TrackPrimitive> prims;
  for (const auto& p : j.at("primitives")) prims.push_back({p.at("length").get<double>(), p.at("curvature").get<double>()});
  Pose2 start;
  if (j.contains("start")) start = {j["start"].at("x").get<double>(), j["start"].at("y").get<double>(), j["start"].at("heading").get<double>()};
  t.track = Track(std::move(prims), j.at("lane_width").get<double>(), start);
  t.boundary_buffer = j.value("boundary_buffer", 2.5);
  t.start_lane = j.value("start_lane", 1);
  for (const auto& o : j.at("obstacles")) {
    TrackObstacle ob;
    ob.s = o.value("s", 0.0);
    ob.lane = o.value("lane", 0);
    ob.pose = {o.at("pose").at("x").get<double>(), o.at("pose").at("y").get<double>(), o.at("pose").at("heading").get<double>()};
    ob.length = o.at("length").get<double>();
    ob.width = o.at("width").get<double>();
    require(ob.length > 0.0 && ob.width > 0.0, "obstacle dimensions must be positive");
    t.obstacles.push_back(ob);
  }
  return t;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json read_json(const std::filesystem::path& p) {
  try {
    return Json::parse(read_file(p));
  } catch (const Json::parse_error& e) {
    fail("malformed JSON in " + p.string() + ": " + e.what());
  }
}

// Write to a temporary sibling, then rename.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, p);
}

inline void write_json(const std::filesystem::path& p, const Json& j) { write_file_atomic(p, j.dump(1) + "\n"); }

// FNV-1a, used to content-address artifacts.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace rtd
