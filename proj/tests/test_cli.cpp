#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "rtd/io.hpp"
#include "support.hpp"

#ifndef RTD_CLI_PATH
#define RTD_CLI_PATH "rtd"
#endif

namespace fs = std::filesystem;
using namespace rtd;
using rtd::testing::shared_offline;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "rtd_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Exit code of the CLI; stdout and stderr go to `log`.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(RTD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

// A config small enough to fit in seconds: one range, few rollouts.
fs::path small_config(const fs::path& dir) {
  Json c = {{"offline",
             {{"speed_ranges", Json::array({Json::array({7.0, 9.0})})},
              {"eps_trials", 20},
              {"error_n_k", 6},
              {"error_n_ic", 3},
              {"lemma1_rollouts", 20}}}};
  const fs::path p = dir / "small.json";
  write_json(p, c);
  return p;
}

const std::string cache = RTD_CACHE_DIR;

}  // namespace

TEST(Cli, UsageErrors) {
  const auto d = scratch("usage");
  EXPECT_EQ(cli("", d / "log"), 2);
  EXPECT_EQ(cli("fly --out x", d / "log"), 2);
  EXPECT_EQ(cli("run --out " + d.string() + " --planner nmpc", d / "log"), 2);
  EXPECT_EQ(cli("fit-error --out " + d.string() + " --config /nonexistent.json", d / "log"), 2);
  EXPECT_NE(slurp(d / "log").find("config file not found"), std::string::npos);
  EXPECT_EQ(cli("compute-frs --out " + d.string() + " --error-dir " + d.string(), d / "log"), 2);
  EXPECT_EQ(cli("run --out " + d.string() + " --frs-dir " + d.string(), d / "log"), 2);
}

TEST(Cli, FitErrorIsByteDeterministic) {
  const auto d = scratch("fit");
  const auto cfg = small_config(d);
  const fs::path a = d / "a", b = d / "b";
  fs::create_directories(a);
  fs::create_directories(b);
  // Too few rollouts to pass hold-out coverage, so the documented exit code is 1.
  EXPECT_EQ(cli("fit-error --quiet --config " + cfg.string() + " --out " + a.string(), d / "la"), 1) << slurp(d / "la");
  EXPECT_EQ(cli("fit-error --quiet --config " + cfg.string() + " --out " + b.string(), d / "lb"), 1);
  EXPECT_NE(slurp(d / "la").find("FAIL"), std::string::npos);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 3u);  // eps, one error file, plot CSV
  EXPECT_EQ(slurp(d / "la"), slurp(d / "lb"));
}

TEST(Cli, DefaultFitErrorWritesSixRanges) {
  // files already produced by the shared cache with the default config
  shared_offline();
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(cache))
    if (e.path().filename().string().rfind("error_" + artifact_stem(OfflineConfig{}), 0) == 0) ++n;
  EXPECT_EQ(n, 6u);
}

TEST(Cli, RenderPlanView) {
  shared_offline();
  const auto d = scratch("render");
  write_json(d / "obs.json", Json{{"obstacles",
                                   {{{14.0, 2.5}, {18.0, 2.5}, {18.0, 4.5}, {14.0, 4.5}},
                                    {{16.0, -4.5}, {20.0, -4.5}, {20.0, -2.5}, {16.0, -2.5}}}}});
  const fs::path svg = d / "plan.svg";
  ASSERT_EQ(cli("render --quiet --frs-dir " + cache + " --range-index 4 --k1 0.05 --k2 11 --obstacles " +
                    (d / "obs.json").string() + " --out " + svg.string(),
                d / "log"),
            0)
      << slurp(d / "log");
  const std::string s = slurp(svg);
  EXPECT_EQ(count(s, "id=\"frs-contour\""), 1u);
  EXPECT_EQ(count(s, "<g id=\"xp\">"), 1u);
  EXPECT_EQ(count(s, "<g id=\"obstacles\">"), 1u);
  EXPECT_NE(s.find("stroke=\"green\""), std::string::npos);

  // contour vertices lie on the w = 1 level
  const auto& w = shared_offline().library.entries[4];
  const auto start = s.find(" d=\"", s.find("id=\"frs-contour\""));
  const std::string path = s.substr(start + 4, s.find('"', start + 4) - start - 4);
  const std::regex pt("[ML](-?[0-9.]+) (-?[0-9.]+)");
  std::size_t checked = 0;
  for (auto it = std::sregex_iterator(path.begin(), path.end(), pt); it != std::sregex_iterator(); ++it) {
    const Vec2 z{std::stod((*it)[1]), std::stod((*it)[2])};
    if (w.domain.x.lo + 1e-3 > z.x || z.x > w.domain.x.hi - 1e-3 || std::abs(z.y) > w.domain.y.hi - 1e-3) continue;
    EXPECT_NEAR(w.eval(z, {0.05, 11.0}), 1.0, 0.01);  // 4-decimal coordinates
    ++checked;
  }
  EXPECT_GT(checked, 20u);

  const fs::path bare = d / "bare.svg";
  ASSERT_EQ(cli("render --quiet --frs-dir " + cache + " --range-index 4 --k1 0.05 --k2 11 --out " + bare.string(),
                d / "log"),
            0);
  const std::string b = slurp(bare);
  EXPECT_EQ(count(b, "<g id=\"obstacles\">"), 0u);
  EXPECT_EQ(count(b, "id=\"frs-contour\""), 1u);
}

TEST(Cli, RunRoadBlockAndRenderLog) {
  shared_offline();
  const auto d = scratch("run");
  ASSERT_EQ(cli("run --quiet --road-block --frs-dir " + cache + " --out " + d.string(), d / "log"), 0) << slurp(d / "log");
  EXPECT_NE(slurp(d / "log").find("end safe_stop"), std::string::npos);
  const fs::path states = d / "rtd_realtime_tblock_v1_states.csv";
  ASSERT_TRUE(fs::exists(states));
  EXPECT_TRUE(fs::exists(d / "rtd_realtime_tblock_v1_metrics.csv"));
  const std::string svg = slurp(d / "rtd_realtime_tblock_v1.svg");
  EXPECT_NE(svg.find("stroke=\"red\""), std::string::npos);  // braking footprints
  ASSERT_EQ(cli("render --road-block --log " + states.string() + " --out " + (d / "again.svg").string(), d / "log2"), 0)
      << slurp(d / "log2");
  EXPECT_NE(slurp(d / "again.svg").find("<g id=\"track\">"), std::string::npos);
}

TEST(Cli, AuditPassesOnLibrary) {
  shared_offline();
  const auto d = scratch("audit");
  EXPECT_EQ(cli("audit --frs-dir " + cache + " --out " + d.string(), d / "log"), 0) << slurp(d / "log");
  EXPECT_EQ(count(slurp(d / "log"), " ok\n"), 6u);
}
