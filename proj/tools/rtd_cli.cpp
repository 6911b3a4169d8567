// rtd: offline pipeline, closed-loop runs, benchmarks and rendering.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rtd/config.hpp"
#include "rtd/render.hpp"

namespace fs = std::filesystem;
using namespace rtd;

namespace {

constexpr int kOk = 0;
constexpr int kSafety = 1;
constexpr int kUsage = 2;

struct Options {
  std::optional<fs::path> config;
  std::optional<fs::path> track;
  std::optional<std::uint64_t> track_seed;
  bool road_block = false;
  std::optional<fs::path> frs_dir;
  std::optional<fs::path> error_dir;
  std::optional<std::uint64_t> seed;
  std::string planner = "rtd";
  std::string mode = "realtime";
  fs::path out = "out";
  std::optional<int> alpha;
  std::size_t n_tracks = 10;
  std::optional<fs::path> log;
  double k1 = 0.0, k2 = 0.0;
  std::size_t range_index = 0;
  std::optional<fs::path> obstacles;
  bool quiet = false;
};

PipelineLog stderr_log(bool quiet) {
  if (quiet) return {};
  return {[](const std::string& s) { std::cerr << s << "\n"; }};
}

RtdConfig resolve_config(const Options& o) {
  if (o.config && !fs::exists(*o.config)) fail("config file not found: " + o.config->string());
  RtdConfig c = load_config(o.config);
  if (o.seed) c.offline.seed = *o.seed;
  if (o.alpha) {
    require(*o.alpha >= 1 && *o.alpha <= 8, "--alpha must be in 1..8");
    c.offline.frs.fit.alpha = *o.alpha;
  }
  c.scenario.planner = planner_from_string(o.planner);
  c.scenario.mode = mode_from_string(o.mode);
  return c;
}

TrackSpec resolve_track(const Options& o, std::uint64_t fallback_seed) {
  if (o.road_block) return road_block_track();
  if (o.track) {
    if (!fs::exists(*o.track)) fail("track file not found: " + o.track->string());
    return track_from_json(read_json(*o.track));
  }
  return generate_track(o.track_seed.value_or(fallback_seed));
}

OfflineArtifacts load_library(const RtdConfig& c, const Options& o) {
  require(o.frs_dir.has_value(), "--frs-dir is required");
  const fs::path dir = *o.frs_dir;
  if (!errors_cached(dir, c.offline) || !frs_cached(dir, c.offline))
    fail("no FRS library for this config/seed in " + dir.string() + " (run fit-error and compute-frs first)");
  OfflineArtifacts a = prepare_offline(c.offline, dir, stderr_log(o.quiet));
  a.library.validate({c.offline.ranges.front().lo, c.offline.ranges.back().hi});
  return a;
}

int cmd_fit_error(const Options& o) {
  const RtdConfig c = resolve_config(o);
  const fs::path dir = o.out;
  // Always refit: the point of this command is to produce the files.
  for (const auto& r : c.offline.ranges) fs::remove(error_file(dir, c.offline, r));
  const OfflineArtifacts a = prepare_errors(c.offline, dir, stderr_log(o.quiet));
  std::ostringstream csv;
  csv << "range_lo,range_hi,kind,t,x,y\n";
  int status = kOk;
  for (const auto& r : a.ranges) {
    for (const auto& s : r.samples)
      csv << r.range.lo << "," << r.range.hi << ",sample," << csv_num(s.t) << "," << csv_num(s.rate_x) << ","
          << csv_num(s.rate_y) << "\n";
    for (int i = 0; i <= 100; ++i) {
      const double t = r.T * i / 100.0;
      csv << r.range.lo << "," << r.range.hi << ",g," << csv_num(t) << "," << csv_num(r.g.rate_x(t)) << ","
          << csv_num(r.g.rate_y(t)) << "\n";
    }
    const double cover = r.lemma1.n_rollouts ? double(r.lemma1.covered) / double(r.lemma1.n_rollouts) : 0.0;
    const bool ok = r.dominance >= 1.0 && cover >= 0.99 && r.lemma1.d_bounded == r.lemma1.covered;
    std::printf("range %s  T %.3f  d_stop %.3f  dominance %.4f  hold-out %zu/%zu  |d|<=1 %zu  %s\n",
                range_tag(r.range).c_str(), r.T, r.d_stop, r.dominance, r.lemma1.covered, r.lemma1.n_rollouts,
                r.lemma1.d_bounded, ok ? "ok" : "FAIL");
    if (!ok) status = kSafety;
  }
  write_file_atomic(dir / ("error_plot_" + artifact_stem(c.offline) + ".csv"), csv.str());
  std::printf("eps_x %.4f  eps_y %.4f\n", a.eps.eps_x, a.eps.eps_y);
  return status;
}

int cmd_compute_frs(const Options& o) {
  const RtdConfig c = resolve_config(o);
  const fs::path err_dir = o.error_dir.value_or(o.out);
  if (!errors_cached(err_dir, c.offline))
    fail("error functions for this config/seed not found in " + err_dir.string() + " (run fit-error first)");
  OfflineArtifacts a = prepare_errors(c.offline, err_dir, stderr_log(o.quiet));
  for (const auto& r : c.offline.ranges) fs::remove(frs_file(o.out, c.offline, r));
  std::vector<FrsBuildReport> reports;
  prepare_frs(a, c.offline, o.out, stderr_log(o.quiet), &reports);
  Json summary = Json::array();
  int status = kOk;
  for (std::size_t i = 0; i < a.library.entries.size(); ++i) {
    const auto& w = a.library.entries[i];
    const auto& rep = reports[i];
    const bool eq11 = std::abs(w.T - compute_horizon(w.tau_plan, w.d_stop, w.speed_range.hi)) < 1e-12;
    const bool ok = rep.passed(c.offline.frs.holdout_threshold) && eq11;
    summary.push_back({{"range", range_tag(w.speed_range)},
                       {"alpha", w.alpha},
                       {"fit_containment", rep.fit.fit_containment},
                       {"holdout_containment", rep.holdout},
                       {"assumption4_violations", rep.assumption4.violating_trials},
                       {"assumption4_trials", rep.assumption4.trials},
                       {"horizon_check", eq11},
                       {"passed", ok}});
    std::printf("FRS %s  alpha %d  fit %.4f  hold-out %.5f  braking violations %zu/%zu  %s\n",
                range_tag(w.speed_range).c_str(), w.alpha, rep.fit.fit_containment, rep.holdout,
                rep.assumption4.violating_trials, rep.assumption4.trials, ok ? "ok" : "FAIL");
    if (!ok) {
      std::fprintf(stderr, "audit failed for range %s\n", range_tag(w.speed_range).c_str());
      status = kSafety;
    }
  }
  write_json(o.out / ("frs_audit_" + artifact_stem(c.offline) + ".json"), summary);
  return status;
}

int cmd_audit(const Options& o) {
  const RtdConfig c = resolve_config(o);
  const OfflineArtifacts a = load_library(c, o);
  const ErrorModel em = a.error_model(c.offline.dk1_limit);
  int status = kOk;
  for (std::size_t i = 0; i < a.library.entries.size(); ++i) {
    const auto& w = a.library.entries[i];
    const std::uint64_t s = split_seed(c.offline.seed, 900 + i);
    const double hold = containment(w, holdout_cloud(w, a.ranges[i].g, c.offline.frs.n_holdout, s, a.nominal));
    const auto a4 = audit_assumption4(w, c.offline.frs.assumption4_trials, split_seed(s, 1), em);
    const bool ok = hold >= c.offline.frs.holdout_threshold && a4.violating_trials == 0;
    std::printf("FRS %s  %s  hold-out %.5f  braking violations %zu/%zu  %s\n", range_tag(w.speed_range).c_str(),
                w.audit.external ? "external" : "fitted", hold, a4.violating_trials, a4.trials, ok ? "ok" : "FAIL");
    if (!ok) status = kSafety;
  }
  return status;
}

struct RunOutput {
  SimResult result;
  TrackSpec spec;
};

RunOutput run_one(const RtdConfig& c, const OfflineArtifacts* a, const TrackSpec& spec) {
  SimContext ctx;
  if (a) {
    ctx = a->sim_context();
  } else {
    static const VehicleParams nominal;
    static const ActuatorMap act;
    static const LqTracker tracker(nominal, act);
    ctx.tracker = &tracker;
    ctx.eps = measure_prediction_error(c.offline.eps_trials, c.offline.eps_duration, split_seed(c.offline.seed, 1),
                                       nominal, tracker);
  }
  return {run_scenario(c.scenario, spec, ctx), spec};
}

int cmd_run(const Options& o) {
  RtdConfig c = resolve_config(o);
  if (o.seed) c.scenario.vehicle_seed = *o.seed;
  const TrackSpec spec = resolve_track(o, c.scenario.track_seed);
  c.scenario.track_seed = spec.seed;
  std::optional<OfflineArtifacts> a;
  if (c.scenario.planner == PlannerKind::Rtd) a = load_library(c, o);
  const RunOutput r = run_one(c, a ? &*a : nullptr, spec);
  const SimMetrics& m = r.result.metrics;
  const std::string stem = std::string(to_string(c.scenario.planner)) + "_" + to_string(c.scenario.mode) + "_t" +
                           (o.road_block ? std::string("block") : std::to_string(spec.seed)) + "_v" +
                           std::to_string(c.scenario.vehicle_seed);
  write_file_atomic(o.out / (stem + "_metrics.csv"),
                    std::string(metrics_csv_header()) +
                        metrics_csv_row(spec.seed, to_string(c.scenario.planner), to_string(c.scenario.mode), m));
  write_file_atomic(o.out / (stem + "_plans.csv"), plan_log_csv(r.result.log));
  write_file_atomic(o.out / (stem + "_states.csv"), state_log_csv(r.result.log));
  write_file_atomic(o.out / (stem + ".svg"), render_run(spec, r.result.log, VehicleParams{}));
  for (const auto& p : r.result.log.plans)
    if (!o.quiet)
      std::printf("t %7.2f  %-8s  k1 %+.4f  k2 %6.3f  solve %.4f s\n", p.t, p.new_plan ? "new_plan" : "brake", p.k1,
                  p.k2, p.solve_time);
  std::printf("end %s  complete %.1f%%  crashes %d  safe stops %d  plan time avg %.4f max %.4f s\n", to_string(m.end),
              m.percent_complete, m.crashes, m.safe_stops, m.planning_time_avg, m.planning_time_max);
  return m.crashes > 0 ? kSafety : kOk;
}

int cmd_benchmark(const Options& o) {
  RtdConfig c = resolve_config(o);
  std::optional<OfflineArtifacts> a;
  if (c.scenario.planner == PlannerKind::Rtd) a = load_library(c, o);
  const std::uint64_t first = o.track_seed.value_or(1);
  std::vector<SimMetrics> metrics(o.n_tracks);
  // Realtime budgets are wall-clock, so scenarios only run concurrently when
  // the caller allows more than one thread.
  parallel_for(o.n_tracks, [&](std::size_t i) {
    RtdConfig ci = c;
    ci.scenario.track_seed = first + i;
    ci.scenario.vehicle_seed = split_seed(c.offline.seed, 500 + first + i);
    metrics[i] = run_one(ci, a ? &*a : nullptr, generate_track(first + i)).result.metrics;
  });
  std::string rows = metrics_csv_header();
  int crashes = 0;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    rows += metrics_csv_row(first + i, to_string(c.scenario.planner), to_string(c.scenario.mode), metrics[i]);
    crashes += metrics[i].crashes;
  }
  const BenchmarkSummary s = summarize(metrics);
  const std::string stem = std::string("benchmark_") + to_string(c.scenario.planner) + "_" + to_string(c.scenario.mode);
  write_file_atomic(o.out / (stem + "_runs.csv"), rows);
  const std::string summary =
      std::string(summary_csv_header()) + summary_csv_row(to_string(c.scenario.planner), to_string(c.scenario.mode), s);
  write_file_atomic(o.out / (stem + "_summary.csv"), summary);
  std::cout << rows << "\n" << summary;
  return crashes > 0 ? kSafety : kOk;
}

// States CSV written by `run` -> SimLog (only the fields rendering needs).
SimLog read_state_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  SimLog log;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(std::stod(cell));
    require(f.size() == 9, "malformed state log line: " + line);
    StateLogEntry e;
    e.t = f[0];
    e.state = {f[1], f[2], f[3], f[4], f[5], f[6]};
    e.braking = f[7] != 0.0;
    e.progress = f[8];
    log.states.push_back(e);
  }
  return log;
}

int cmd_render(const Options& o) {
  const RtdConfig c = resolve_config(o);
  if (o.log) {
    const TrackSpec spec = resolve_track(o, c.scenario.track_seed);
    const SimLog log = read_state_csv(*o.log);
    write_file_atomic(o.out, render_run(spec, log, VehicleParams{}, 5));
    return kOk;
  }
  const OfflineArtifacts a = load_library(c, o);
  require(o.range_index < a.library.entries.size(), "--range-index out of range");
  const FrsPolynomial& w = a.library.entries[o.range_index];
  PlanView v;
  v.frs = &w;
  v.k = {o.k1, o.k2 > 0.0 ? o.k2 : w.speed_range.mid()};
  require(w.param_box.k1.contains(v.k.k1) && w.param_box.k2.contains(v.k.k2), "k outside the FRS parameter box");
  if (o.obstacles) {
    // {"obstacles": [[[x, y], ...], ...]} in the plan frame
    const Json j = read_json(*o.obstacles);
    for (const auto& poly : j.at("obstacles")) {
      ObstaclePolygon op;
      for (const auto& q : poly) op.vertices.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
      op.validate();
      v.obstacles.push_back(op.vertices);
      const auto pts = discretize_obstacle(op, 0.05, a.eps.eps_x, a.eps.eps_y, a.nominal.footprint_width).points;
      v.xp.insert(v.xp.end(), pts.begin(), pts.end());
    }
  }
  // Footprints of the plan executed on the nominal plant, then braking.
  const PlantState start = steady_plant_state(v.k.k2, v.k.k1, {}, a.nominal, a.actuators);
  const ReferenceTrajectory ref = braking_reference(v.k, w.tau_plan, {}, a.nominal);
  const Trajectory traj = rollout(start, ref, *a.tracker, a.nominal, 0.01, ref.duration());
  for (std::size_t i = 0; i < traj.size(); i += 25) v.footprints.push_back({traj[i].state, ref.braking_at(traj[i].t)});
  v.params = a.nominal;
  write_file_atomic(o.out, render_plan(v));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reachability-based trajectory design: offline FRS pipeline and closed-loop simulation"};
  app.require_subcommand(1);
  Options o;
  std::string out;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "JSON config file");
    s->add_option("--seed", o.seed, "seed (offline artifacts; vehicle for run)");
    s->add_option("--out", out, "output directory (file for render)")->required();
    s->add_flag("--quiet", o.quiet, "less progress output");
  };
  auto planner_opts = [&](CLI::App* s) {
    s->add_option("--planner", o.planner, "rtd or rrt")->check(CLI::IsMember({"rtd", "rrt"}));
    s->add_option("--mode", o.mode, "realtime or extended")->check(CLI::IsMember({"realtime", "extended"}));
    s->add_option("--frs-dir", o.frs_dir, "directory with error and FRS files");
  };
  auto track_opts = [&](CLI::App* s) {
    s->add_option("--track", o.track, "track JSON file");
    s->add_option("--track-seed", o.track_seed, "generate the track from this seed");
    s->add_flag("--road-block", o.road_block, "straight road with a wall across both lanes");
  };

  auto* fit = app.add_subcommand("fit-error", "measure eps and fit one error function per speed range");
  common(fit);
  auto* frs = app.add_subcommand("compute-frs", "fit and audit one FRS per speed range");
  common(frs);
  frs->add_option("--error-dir", o.error_dir, "directory with error files (default: --out)");
  frs->add_option("--alpha", o.alpha, "polynomial degree");
  auto* run = app.add_subcommand("run", "one closed-loop scenario");
  common(run);
  planner_opts(run);
  track_opts(run);
  auto* bench = app.add_subcommand("benchmark", "seeded tracks, one planner and mode, summary table");
  common(bench);
  planner_opts(bench);
  bench->add_option("--tracks", o.n_tracks, "number of tracks")->check(CLI::PositiveNumber);
  bench->add_option("--track-seed", o.track_seed, "first track seed (default 1)");
  auto* render = app.add_subcommand("render", "SVG of a run log or of one plan's FRS contour");
  common(render);
  planner_opts(render);
  track_opts(render);
  render->add_option("--log", o.log, "states CSV from run");
  render->add_option("--k1", o.k1, "yaw rate parameter");
  render->add_option("--k2", o.k2, "speed parameter (default: range midpoint)");
  render->add_option("--range-index", o.range_index, "FRS library index");
  render->add_option("--obstacles", o.obstacles, "JSON obstacle polygons in the plan frame");
  auto* audit = app.add_subcommand("audit", "re-run containment and braking audits on an FRS library");
  common(audit);
  audit->add_option("--frs-dir", o.frs_dir, "directory with error and FRS files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  o.out = out;
  try {
    if (*fit) return cmd_fit_error(o);
    if (*frs) return cmd_compute_frs(o);
    if (*run) return cmd_run(o);
    if (*bench) return cmd_benchmark(o);
    if (*render) return cmd_render(o);
    if (*audit) return cmd_audit(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSafety;
  }
  return kUsage;
}
