#include <gtest/gtest.h>

#include <filesystem>

#include "rtd/config.hpp"
#include "rtd/io.hpp"
#include "support.hpp"

using namespace rtd;
using rtd::testing::shared_offline;

namespace {

std::filesystem::path tmp_dir() {
  const auto d = std::filesystem::temp_directory_path() / ("rtd_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Io, FrsFileRoundTripIsBitExact) {
  const auto& f = shared_offline().library.entries[3];
  const auto path = tmp_dir() / "frs.json";
  write_json(path, to_json(f));
  const auto g = frs_from_json(read_json(path));
  EXPECT_EQ(g.exponents, f.exponents);
  ASSERT_EQ(g.coeffs.size(), f.coeffs.size());
  for (std::size_t i = 0; i < f.coeffs.size(); ++i) EXPECT_EQ(g.coeffs[i], f.coeffs[i]);
  EXPECT_EQ(g.T, f.T);
  EXPECT_EQ(g.d_stop, f.d_stop);
  EXPECT_EQ(g.domain, f.domain);
  EXPECT_EQ(g.audit, f.audit);
  EXPECT_EQ(g.g_ref.coeffs_x, f.g_ref.coeffs_x);
  EXPECT_EQ(g.g_ref.coeffs_y, f.g_ref.coeffs_y);
  EXPECT_EQ(to_json(g).dump(), to_json(f).dump());
}

TEST(Io, ExternalCoefficientsImport) {
  Json j = to_json(shared_offline().library.entries[0]);
  j.erase("audit");
  const auto w = frs_from_json(j);
  EXPECT_TRUE(w.audit.external);
  EXPECT_EQ(to_json(w)["audit"]["external"], true);
}

TEST(Io, RejectsBrokenFrs) {
  const Json good = to_json(shared_offline().library.entries[0]);
  Json short_T = good;
  short_T["T"] = 0.1;  // shorter than the stopping horizon
  EXPECT_THROW(frs_from_json(short_T), Error);
  Json mismatch = good;
  mismatch["coefficients"].erase(0);
  EXPECT_THROW(frs_from_json(mismatch), Error);
  Json missing = good;
  missing.erase("monomials");
  EXPECT_ANY_THROW(frs_from_json(missing));
}

TEST(Io, TrackRoundTrip) {
  const auto t = generate_track(8);
  const auto path = tmp_dir() / "track.json";
  write_json(path, to_json(t));
  const auto u = track_from_json(read_json(path));
  EXPECT_EQ(u.track.primitives(), t.track.primitives());
  ASSERT_EQ(u.obstacles.size(), t.obstacles.size());
  for (std::size_t i = 0; i < t.obstacles.size(); ++i) EXPECT_EQ(u.obstacles[i], t.obstacles[i]);
  EXPECT_EQ(u.track.length(), t.track.length());
}

TEST(Io, ErrorFunctionAndEpsRoundTrip) {
  const auto& a = shared_offline();
  const auto& g = a.ranges[1].g;
  const auto h = error_function_from_json(to_json(g));
  EXPECT_EQ(h.coeffs_x, g.coeffs_x);
  EXPECT_EQ(h.coeffs_y, g.coeffs_y);
  EXPECT_EQ(h.T, g.T);
  EXPECT_EQ(h.speed_range, g.speed_range);
  const auto e = prediction_error_from_json(to_json(a.eps));
  EXPECT_EQ(e.eps, a.eps.eps);
  EXPECT_EQ(e.eps_x, a.eps.eps_x);
}

TEST(Io, ConfigRoundTripAndHash) {
  RtdConfig c;
  c.offline.seed = 9;
  c.scenario.planner = PlannerKind::Rrt;
  c.scenario.mode = TimeMode::Extended;
  const auto d = config_from_json(to_json(c));
  EXPECT_EQ(to_json(d).dump(), to_json(c).dump());
  EXPECT_EQ(offline_hash(d.offline), offline_hash(c.offline));
  EXPECT_NE(offline_hash(OfflineConfig{}), offline_hash(c.offline));
  Json bad = to_json(c);
  bad["scenario"]["planner"] = "nmpc";
  EXPECT_THROW(config_from_json(bad), Error);
  bad = to_json(c);
  bad["offline"]["tau_plan"] = -1.0;
  EXPECT_THROW(config_from_json(bad), Error);
  EXPECT_THROW(load_config(std::filesystem::path("/nonexistent/config.json")), Error);
}

TEST(Io, AtomicWriteLeavesNoTemp) {
  const auto dir = tmp_dir() / "atomic";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_json(dir / "a.json", Json{{"x", 1}});
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++n;
  EXPECT_EQ(n, 1u);
  EXPECT_EQ(read_json(dir / "a.json")["x"], 1);
}
