// Acceptance run: one PASS/FAIL line per criterion. Exit 0 iff all pass.
// Offline artifacts come from (or are built into) RTD_CACHE_DIR.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rtd/config.hpp"

#ifndef RTD_CACHE_DIR
#define RTD_CACHE_DIR "artifacts"
#endif

using namespace rtd;

namespace {

struct Line {
  int id;
  bool pass;
  std::string name;
  std::string detail;
};

std::vector<Line> lines;

void report(int id, bool pass, const std::string& name, const std::string& detail) {
  lines.push_back({id, pass, name, detail});
  std::printf("criterion %2d %s  %s: %s\n", id, pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Same protocol as `rtd benchmark`: tracks 1..10, one vehicle seed per track.
std::vector<SimMetrics> benchmark(const OfflineArtifacts& a, const OfflineConfig& oc, PlannerKind kind) {
  std::vector<SimMetrics> out;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ScenarioConfig cfg;
    cfg.planner = kind;
    cfg.track_seed = seed;
    cfg.vehicle_seed = split_seed(oc.seed, 500 + seed);
    out.push_back(run_scenario(cfg, generate_track(seed), a.sim_context()).metrics);
    const auto& m = out.back();
    std::printf("    %s track %2llu: %-9s %6.2f%%  crashes %d  plan avg %.3f max %.3f s\n", kind == PlannerKind::Rtd ? "rtd" : "rrt",
                static_cast<unsigned long long>(seed), to_string(m.end), m.percent_complete, m.crashes,
                m.planning_time_avg, m.planning_time_max);
    std::fflush(stdout);
  }
  return out;
}

}  // namespace

int main() {
  const auto t_all = std::chrono::steady_clock::now();
  const std::filesystem::path dir = RTD_CACHE_DIR;
  std::filesystem::create_directories(dir);
  const OfflineConfig oc;
  PipelineLog log{[](const std::string& s) { std::cerr << "[offline] " << s << "\n"; }};
  const OfflineArtifacts a = prepare_offline(oc, dir, log);
  const ErrorModel em = a.error_model(oc.dk1_limit);
  const VehicleParams& p = a.nominal;

  // 3: horizon formula
  {
    const double T = compute_horizon(0.5, 15.4, 11.0);
    report(3, std::abs(T - 1.9) <= 1e-12, "horizon formula", fmt("compute_horizon(0.5, 15.4, 11) = %.15f", T));
  }

  // 4: discretization constants
  {
    const Spacings s = lemma2_spacings(0.05);
    report(4, s.line == 0.1 && std::abs(s.arc - 0.0707107) <= 1e-6, "discretization constants",
           fmt("s_L = %.10f, s_A = %.10f", s.line, s.arc));
  }

  // 5: conservativeness oracle
  {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    std::size_t violations = 0, control = 0;
    for (int i = 0; i < 10; ++i) {
      const ObstaclePolygon poly = random_polygon(rng, 3 + rng.index(6), 0.5, 4.0);
      const BufferedBoundary bb = buffer_polygon(poly, 0.05, p.footprint_width);
      const Spacings sp = lemma2_spacings(0.05);
      const auto xp = discretize(bb, sp).points;
      violations += conservativeness_oracle(poly, xp, p.footprint_width, p.footprint_length, 10000, 7000 + i);
      const auto coarse = discretize(bb, {10.0 * sp.line, 10.0 * sp.arc}).points;
      control += conservativeness_oracle(poly, coarse, p.footprint_width, p.footprint_length, 10000, 7000 + i);
    }
    const double dt = seconds_since(t0);
    report(5, violations == 0 && control >= 1 && dt <= 120.0, "conservativeness oracle",
           fmt("10 polygons x 1e4 poses: %zu violations; 10x spacing control: %zu violations; %.1f s", violations,
               control, dt));
  }

  // 6: error-function coverage, fresh hold-out per range
  {
    bool ok = true;
    std::ostringstream d;
    for (std::size_t i = 0; i < a.ranges.size(); ++i) {
      const auto& r = a.ranges[i];
      const Lemma1Report l = validate_lemma1(r.g, 200, split_seed(oc.seed, 7100 + i), em);
      const double cover = static_cast<double>(l.covered) / static_cast<double>(l.n_rollouts);
      const bool range_ok = r.dominance >= 1.0 && cover >= 0.99 && l.d_bounded == l.covered;
      ok = ok && range_ok;
      d << range_tag(r.range) << " dom " << fmt("%.4f", r.dominance) << " hold-out " << l.covered << "/" << l.n_rollouts
        << " |d|<=1 " << l.d_bounded << (i + 1 < a.ranges.size() ? "; " : "");
    }
    report(6, ok, "error-function coverage", d.str());
  }

  // 7: FRS containment and braking audit, fresh seeds
  {
    bool ok = true;
    std::ostringstream d;
    for (std::size_t i = 0; i < a.library.entries.size(); ++i) {
      const auto& w = a.library.entries[i];
      const double hold = containment(w, holdout_cloud(w, a.ranges[i].g, 10000, split_seed(oc.seed, 7200 + i), p));
      const auto a4 = audit_assumption4(w, 200, split_seed(oc.seed, 7300 + i), em);
      const bool range_ok = w.audit.fit_containment >= 1.0 && hold >= 0.999 && a4.violating_trials == 0;
      ok = ok && range_ok;
      d << range_tag(w.speed_range) << " fit " << fmt("%.3f", w.audit.fit_containment) << " hold-out "
        << fmt("%.4f", hold) << " braking " << a4.violating_trials << "/" << a4.trials
        << (i + 1 < a.library.entries.size() ? "; " : "");
    }
    report(7, ok, "FRS containment", d.str());
  }

  // 8: solver optimality against a 201 x 201 constrained grid
  {
    Rng rng(8080);
    int feasible = 0, worse = 0, unsafe = 0, missed = 0;
    double worst_rel = 0.0;
    for (int t = 0; t < 100; ++t) {
      const auto& f = a.library.entries[rng.index(a.library.entries.size())];
      PlanningContext ctx;
      ctx.frs = &f;
      ctx.params = p;
      ctx.speed = rng.uniform(f.speed_range);
      ctx.yaw_rate = rng.uniform(-0.1, 0.1);
      const double reach = f.speed_range.hi * f.T;
      std::vector<ObstaclePolygon> obs;
      for (std::size_t i = 0, n = 1 + rng.index(2); i < n; ++i) {
        ObstaclePolygon o;
        o.vertices = oriented_rectangle({rng.uniform(4.0, 1.2 * reach), rng.uniform(-8.0, 8.0), rng.uniform(-0.5, 0.5)},
                                        rng.uniform(1.0, 4.0), rng.uniform(1.0, 2.5));
        obs.push_back(o);
      }
      ctx.obstacles = discretize_all(obs, 0.05, a.eps.eps_x, a.eps.eps_y, p.footprint_width);
      ctx.waypoint = {{rng.uniform(0.5, 1.5) * reach, rng.uniform(-4.0, 4.0)}, 0.0, rng.uniform(f.speed_range)};
      const PlanResult r = solve(ctx);
      const PlanResult g = grid_solve(ctx, 201, 201);
      if (r.outcome == PlanOutcome::NewPlan && r.max_w > 1.0 - 1e-6) ++unsafe;
      if (g.outcome != PlanOutcome::NewPlan) continue;
      ++feasible;
      if (r.outcome != PlanOutcome::NewPlan) {
        ++missed;
        continue;
      }
      worst_rel = std::max(worst_rel, (r.cost - g.cost) / std::max(g.cost, 1e-12));
      if (r.cost > 1.01 * g.cost + 1e-9) ++worse;
    }
    report(8, worse == 0 && missed == 0 && unsafe == 0, "solver optimality",
           fmt("100 contexts, %d grid-feasible: %d above grid min +1%%, %d missed, %d unsafe; worst rel gap %+.5f",
               feasible, worse, missed, unsafe, worst_rel));
  }

  // 9: road block
  {
    ScenarioConfig cfg;
    cfg.initial_speed = 11.0;
    const SimMetrics m = run_scenario(cfg, road_block_track(), a.sim_context()).metrics;
    report(9, m.safe_stops == 1 && m.crashes == 0, "road-block scenario",
           fmt("end %s, safe_stops %d, crashes %d, stopped at %.1f%%", to_string(m.end), m.safe_stops, m.crashes,
               m.percent_complete));
  }

  // 1, 2: RTD benchmark
  const auto rtd = benchmark(a, oc, PlannerKind::Rtd);
  const BenchmarkSummary rs = summarize(rtd);
  {
    int laps = 0, stops = 0;
    for (const auto& m : rtd) {
      laps += m.end == EndReason::LapComplete ? 1 : 0;
      stops += m.safe_stops;
    }
    report(1, rs.crashes == 0 && laps >= 8 && laps + stops == 10, "closed-loop safety",
           fmt("RTD realtime, 10 tracks: %d laps, %d safe stops, %d crashes, avg completion %.2f%%", laps, stops,
               rs.crashes, rs.percent_avg));
    report(2, rs.planning_time_max <= 0.5 && rs.planning_time_avg <= 0.25, "planning-time contract",
           fmt("avg %.4f s, max %.4f s over %zu runs", rs.planning_time_avg, rs.planning_time_max, rs.runs));
  }

  // 10: RRT baseline direction
  {
    const BenchmarkSummary bs = summarize(benchmark(a, oc, PlannerKind::Rrt));
    report(10, bs.percent_avg < rs.percent_avg, "baseline direction",
           fmt("RRT realtime avg completion %.2f%% (%d crashes) vs RTD %.2f%%", bs.percent_avg, bs.crashes,
               rs.percent_avg));
  }

  std::sort(lines.begin(), lines.end(), [](const Line& x, const Line& y) { return x.id < y.id; });
  int failed = 0;
  std::ostringstream summary;
  for (const auto& l : lines) {
    summary << fmt("criterion %2d %s  %s: %s\n", l.id, l.pass ? "PASS" : "FAIL", l.name.c_str(), l.detail.c_str());
    failed += l.pass ? 0 : 1;
  }
  summary << fmt("%d/%zu criteria passed in %.0f s\n", static_cast<int>(lines.size()) - failed, lines.size(),
                 seconds_since(t_all));
  std::cout << "\n" << summary.str();
  std::ofstream(dir / "acceptance_report.txt") << summary.str();
  return failed == 0 ? 0 : 1;
}
