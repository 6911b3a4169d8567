#pragma once

// Run configuration (JSON) and the offline pipeline: prediction-error bound,
// stopping distances, error functions and FRS per speed range. Artifacts are
// cached on disk under a hash of the settings that produced them.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtd/error_function.hpp"
#include "rtd/frs.hpp"
#include "rtd/io.hpp"
#include "rtd/planner.hpp"
#include "rtd/sim.hpp"
#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_measurements.hpp"

namespace rtd {

struct OfflineConfig {
  std::uint64_t seed = 1;
  std::vector<Interval> ranges{{3, 5}, {5, 7}, {7, 9}, {9, 11}, {11, 13}, {13, 15}};
  double tau_plan = 0.5;
  std::size_t eps_trials = 200;
  double eps_duration = 0.5;
  double dk1_limit = 0.15;
  std::size_t error_n_k = 100;
  std::size_t error_n_ic = 30;
  std::size_t lemma1_rollouts = 200;
  FrsBuildConfig frs;
};

struct RtdConfig {
  OfflineConfig offline;
  ScenarioConfig scenario;
};

inline Json to_json(const OfflineConfig& c) {
  Json ranges = Json::array();
  for (const auto& r : c.ranges) ranges.push_back(to_json(r));
  return {{"seed", c.seed},
          {"speed_ranges", ranges},
          {"tau_plan", c.tau_plan},
          {"eps_trials", c.eps_trials},
          {"eps_duration", c.eps_duration},
          {"dk1_limit", c.dk1_limit},
          {"error_n_k", c.error_n_k},
          {"error_n_ic", c.error_n_ic},
          {"lemma1_rollouts", c.lemma1_rollouts},
          {"frs",
           {{"alpha", c.frs.fit.alpha},
            {"r_inflate", c.frs.fit.r_inflate},
            {"raster", c.frs.fit.raster},
            {"negative_ratio", c.frs.fit.negative_ratio},
            {"iterations", c.frs.fit.iterations},
            {"n_k", c.frs.n_k},
            {"n_z0", c.frs.n_z0},
            {"n_d", c.frs.n_d},
            {"n_holdout", c.frs.n_holdout},
            {"assumption4_trials", c.frs.assumption4_trials}}}};
}

inline OfflineConfig offline_from_json(const Json& j) {
  OfflineConfig c;
  c.seed = j.value("seed", c.seed);
  if (j.contains("speed_ranges")) {
    c.ranges.clear();
    for (const auto& r : j.at("speed_ranges")) c.ranges.push_back(interval_from_json(r));
  }
  c.tau_plan = j.value("tau_plan", c.tau_plan);
  c.eps_trials = j.value("eps_trials", c.eps_trials);
  c.eps_duration = j.value("eps_duration", c.eps_duration);
  c.dk1_limit = j.value("dk1_limit", c.dk1_limit);
  c.error_n_k = j.value("error_n_k", c.error_n_k);
  c.error_n_ic = j.value("error_n_ic", c.error_n_ic);
  c.lemma1_rollouts = j.value("lemma1_rollouts", c.lemma1_rollouts);
  if (j.contains("frs")) {
    const Json& f = j.at("frs");
    c.frs.fit.alpha = f.value("alpha", c.frs.fit.alpha);
    c.frs.fit.r_inflate = f.value("r_inflate", c.frs.fit.r_inflate);
    c.frs.fit.raster = f.value("raster", c.frs.fit.raster);
    c.frs.fit.negative_ratio = f.value("negative_ratio", c.frs.fit.negative_ratio);
    c.frs.fit.iterations = f.value("iterations", c.frs.fit.iterations);
    c.frs.n_k = f.value("n_k", c.frs.n_k);
    c.frs.n_z0 = f.value("n_z0", c.frs.n_z0);
    c.frs.n_d = f.value("n_d", c.frs.n_d);
    c.frs.n_holdout = f.value("n_holdout", c.frs.n_holdout);
    c.frs.assumption4_trials = f.value("assumption4_trials", c.frs.assumption4_trials);
  }
  require(!c.ranges.empty(), "at least one speed range is required");
  for (const auto& r : c.ranges) require(r.lo > 0.0 && r.hi > r.lo, "speed ranges must be positive and nonempty");
  require(c.tau_plan > 0.0, "tau_plan must be positive");
  require(c.frs.fit.alpha >= 1 && c.frs.fit.alpha <= 8, "alpha must be in 1..8");
  require(c.error_n_k > 0 && c.error_n_ic > 0 && c.eps_trials > 0, "sample counts must be positive");
  return c;
}

inline const char* to_string(PlannerKind k) { return k == PlannerKind::Rtd ? "rtd" : "rrt"; }
inline const char* to_string(TimeMode m) { return m == TimeMode::Realtime ? "realtime" : "extended"; }

inline PlannerKind planner_from_string(const std::string& s) {
  if (s == "rtd") return PlannerKind::Rtd;
  if (s == "rrt") return PlannerKind::Rrt;
  fail("planner must be rtd or rrt, got '" + s + "'");
}

inline TimeMode mode_from_string(const std::string& s) {
  if (s == "realtime") return TimeMode::Realtime;
  if (s == "extended") return TimeMode::Extended;
  fail("mode must be realtime or extended, got '" + s + "'");
}

inline Json to_json(const ScenarioConfig& c) {
  return {{"track_seed", c.track_seed},
          {"planner", to_string(c.planner)},
          {"mode", to_string(c.mode)},
          {"vehicle_seed", c.vehicle_seed},
          {"tau_plan", c.tau_plan},
          {"max_time", c.max_time},
          {"initial_speed", c.initial_speed},
          {"extended_budget", c.extended_budget},
          {"planner_eval_budget", c.planner_eval_budget},
          {"cruise", c.waypoint.cruise},
          {"rrt_expansions", c.rrt.expansions}};
}

inline ScenarioConfig scenario_from_json(const Json& j) {
  ScenarioConfig c;
  c.track_seed = j.value("track_seed", c.track_seed);
  if (j.contains("planner")) c.planner = planner_from_string(j.at("planner").get<std::string>());
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.vehicle_seed = j.value("vehicle_seed", c.vehicle_seed);
  c.tau_plan = j.value("tau_plan", c.tau_plan);
  c.max_time = j.value("max_time", c.max_time);
  c.initial_speed = j.value("initial_speed", c.initial_speed);
  c.extended_budget = j.value("extended_budget", c.extended_budget);
  c.planner_eval_budget = j.value("planner_eval_budget", c.planner_eval_budget);
  c.waypoint.cruise = j.value("cruise", c.waypoint.cruise);
  c.rrt.expansions = j.value("rrt_expansions", c.rrt.expansions);
  require(c.tau_plan > 0.0, "tau_plan must be positive");
  require(c.max_time > 0.0, "max_time must be positive");
  require(c.initial_speed > 0.0, "initial_speed must be positive");
  return c;
}

inline RtdConfig config_from_json(const Json& j) {
  RtdConfig c;
  if (j.contains("offline")) c.offline = offline_from_json(j.at("offline"));
  if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
  c.scenario.tau_plan = c.offline.tau_plan;
  return c;
}

inline Json to_json(const RtdConfig& c) { return {{"offline", to_json(c.offline)}, {"scenario", to_json(c.scenario)}}; }

inline RtdConfig load_config(const std::optional<std::filesystem::path>& path) {
  if (!path) return {};
  return config_from_json(read_json(*path));
}

// Hash of the settings that determine the offline artifacts.
inline std::string offline_hash(const OfflineConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

// ---------------------------------------------------------------------------

struct RangeArtifacts {
  Interval range;
  double d_stop = 0.0;
  double T = 0.0;
  ErrorFunction g;
  double dominance = 0.0;
  Lemma1Report lemma1;
  std::vector<ErrorSample> samples;  // thinned fitting samples, only when freshly fitted
};

// Everything the online layer needs. Owns the tracker (ErrorModel and the
// simulator keep raw pointers to it).
struct OfflineArtifacts {
  VehicleParams nominal;
  ActuatorMap actuators;
  std::unique_ptr<LqTracker> tracker;
  PredictionErrorBound eps;
  std::vector<RangeArtifacts> ranges;
  FrsLibrary library;

  [[nodiscard]] ErrorModel error_model(double dk1_limit) const {
    ErrorModel em;
    em.nominal = nominal;
    em.tracker = tracker.get();
    em.eps = eps;
    em.dk1_limit = dk1_limit;
    return em;
  }

  [[nodiscard]] SimContext sim_context() const {
    SimContext c;
    c.library = &library;
    c.nominal = nominal;
    c.actuators = actuators;
    c.tracker = tracker.get();
    c.eps = eps;
    return c;
  }
};

inline Json range_artifacts_json(const RangeArtifacts& r) {
  return {{"speed_range", to_json(r.range)},
          {"d_stop", r.d_stop},
          {"T", r.T},
          {"g", to_json(r.g)},
          {"dominance", r.dominance},
          {"lemma1",
           {{"n_rollouts", r.lemma1.n_rollouts},
            {"covered", r.lemma1.covered},
            {"d_bounded", r.lemma1.d_bounded},
            {"worst_violation", r.lemma1.worst_violation},
            {"worst_d", r.lemma1.worst_d}}}};
}

inline RangeArtifacts range_artifacts_from_json(const Json& j) {
  RangeArtifacts r;
  r.range = interval_from_json(j.at("speed_range"));
  r.d_stop = j.at("d_stop").get<double>();
  r.T = j.at("T").get<double>();
  r.g = error_function_from_json(j.at("g"));
  r.dominance = j.value("dominance", 0.0);
  const Json& l = j.at("lemma1");
  r.lemma1.n_rollouts = l.at("n_rollouts").get<std::size_t>();
  r.lemma1.covered = l.at("covered").get<std::size_t>();
  r.lemma1.d_bounded = l.at("d_bounded").get<std::size_t>();
  r.lemma1.worst_violation = l.at("worst_violation").get<double>();
  r.lemma1.worst_d = l.at("worst_d").get<double>();
  return r;
}

struct PipelineLog {
  std::function<void(const std::string&)> sink;
  void operator()(const std::string& s) const {
    if (sink) sink(s);
  }
};

inline std::string range_tag(const Interval& r) {
  return std::to_string(static_cast<int>(std::lround(r.lo))) + "_" + std::to_string(static_cast<int>(std::lround(r.hi)));
}

// Files are named by seed and config hash so a stale artifact is never picked up.
inline std::string artifact_stem(const OfflineConfig& c) {
  return "s" + std::to_string(c.seed) + "_" + offline_hash(c);
}
inline std::filesystem::path eps_file(const std::filesystem::path& dir, const OfflineConfig& c) {
  return dir / ("eps_" + artifact_stem(c) + ".json");
}
inline std::filesystem::path error_file(const std::filesystem::path& dir, const OfflineConfig& c, const Interval& r) {
  return dir / ("error_" + artifact_stem(c) + "_" + range_tag(r) + ".json");
}
inline std::filesystem::path frs_file(const std::filesystem::path& dir, const OfflineConfig& c, const Interval& r) {
  return dir / ("frs_" + artifact_stem(c) + "_" + range_tag(r) + ".json");
}

inline bool errors_cached(const std::filesystem::path& dir, const OfflineConfig& c) {
  if (!std::filesystem::exists(eps_file(dir, c))) return false;
  for (const auto& r : c.ranges)
    if (!std::filesystem::exists(error_file(dir, c, r))) return false;
  return true;
}

inline bool frs_cached(const std::filesystem::path& dir, const OfflineConfig& c) {
  for (const auto& r : c.ranges)
    if (!std::filesystem::exists(frs_file(dir, c, r))) return false;
  return true;
}

// Measures eps, stopping distances and error functions, or loads them from
// `dir` when every file for this config exists.
inline OfflineArtifacts prepare_errors(const OfflineConfig& c, const std::optional<std::filesystem::path>& dir,
                                       const PipelineLog& log = {}) {
  OfflineArtifacts a;
  a.tracker = std::make_unique<LqTracker>(a.nominal, a.actuators);
  if (dir && errors_cached(*dir, c)) {
    a.eps = prediction_error_from_json(read_json(eps_file(*dir, c)));
    for (const auto& r : c.ranges) a.ranges.push_back(range_artifacts_from_json(read_json(error_file(*dir, c, r))));
    log("loaded error functions from " + dir->string());
    return a;
  }
  a.eps = measure_prediction_error(c.eps_trials, c.eps_duration, split_seed(c.seed, 1), a.nominal, *a.tracker);
  const ErrorModel em = a.error_model(c.dk1_limit);
  for (std::size_t i = 0; i < c.ranges.size(); ++i) {
    RangeArtifacts r;
    r.range = c.ranges[i];
    r.d_stop = measure_stopping_distance(r.range.hi, a.nominal, *a.tracker);
    r.T = compute_horizon(c.tau_plan, r.d_stop, r.range.hi);
    const auto set = collect_error_samples(r.range, r.T, c.error_n_k, c.error_n_ic, split_seed(c.seed, 100 + i), em);
    r.g = fit_error_function(set, r.T);
    r.g.speed_range = r.range;
    r.dominance = dominance_fraction(r.g, set);
    for (std::size_t j = 0; j < set.samples.size(); j += 20) r.samples.push_back(set.samples[j]);
    r.lemma1 = validate_lemma1(r.g, c.lemma1_rollouts, split_seed(c.seed, 200 + i), em);
    log("error function " + range_tag(r.range) + ": d_stop " + std::to_string(r.d_stop) + " T " + std::to_string(r.T) +
        " hold-out " + std::to_string(r.lemma1.covered) + "/" + std::to_string(r.lemma1.n_rollouts));
    a.ranges.push_back(r);
  }
  if (dir) {
    Json e = to_json(a.eps);
    e["config"] = to_json(c);
    write_json(eps_file(*dir, c), e);
    for (const auto& r : a.ranges) write_json(error_file(*dir, c, r.range), range_artifacts_json(r));
  }
  return a;
}

// Builds (or loads) the FRS for every range.
inline void prepare_frs(OfflineArtifacts& a, const OfflineConfig& c, const std::optional<std::filesystem::path>& dir,
                        const PipelineLog& log = {}, std::vector<FrsBuildReport>* reports = nullptr) {
  const ErrorModel em = a.error_model(c.dk1_limit);
  a.library.entries.clear();
  for (std::size_t i = 0; i < a.ranges.size(); ++i) {
    const RangeArtifacts& r = a.ranges[i];
    if (dir && std::filesystem::exists(frs_file(*dir, c, r.range))) {
      a.library.entries.push_back(frs_from_json(read_json(frs_file(*dir, c, r.range))));
      log("loaded " + frs_file(*dir, c, r.range).string());
      continue;
    }
    FrsBuildReport rep;
    FrsBuildConfig fc = c.frs;
    fc.cloud.tau_plan = c.tau_plan;
    FrsPolynomial w = build_frs(r.g, r.d_stop, split_seed(c.seed, 300 + i), em, fc, &rep);
    log("FRS " + range_tag(r.range) + ": hold-out " +
        std::to_string(rep.holdout) + " braking violations " + std::to_string(rep.assumption4.violating_trials));
    if (reports) reports->push_back(rep);
    if (dir) write_json(frs_file(*dir, c, r.range), to_json(w));
    a.library.entries.push_back(std::move(w));
  }
}

inline OfflineArtifacts prepare_offline(const OfflineConfig& c, const std::optional<std::filesystem::path>& dir,
                                        const PipelineLog& log = {}) {
  OfflineArtifacts a = prepare_errors(c, dir, log);
  prepare_frs(a, c, dir, log);
  return a;
}

}  // namespace rtd
