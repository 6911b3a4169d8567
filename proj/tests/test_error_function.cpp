#include <gtest/gtest.h>

#include "rtd/error_function.hpp"
#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_measurements.hpp"

using namespace rtd;

namespace {

struct Fixture {
  VehicleParams p;
  ActuatorMap a;
  LqTracker tr{p, a};
  ErrorModel em;
  Fixture() {
    em.nominal = p;
    em.tracker = &tr;
    em.eps = measure_prediction_error(100, 0.5, 1, p, tr);
    em.dk1_limit = 0.15;
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(FitEnvelope, MatchesQuantizedGridSearch) {
  const std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {1.0, 0.1}};
  const auto c = fit_envelope(pts, 1.0);
  auto integral = [](double c0, double c1, double c2) { return c0 + c1 / 2 + c2 / 3; };
  auto feasible = [&](double c0, double c1, double c2, double tol) {
    if (c0 + c1 + c2 < 0.1 - tol) return false;
    for (int i = 0; i <= 200; ++i) {
      const double t = i / 200.0;
      if (c0 + c1 * t + c2 * t * t < -tol) return false;
    }
    return true;
  };
  ASSERT_TRUE(feasible(c[0], c[1], c[2], 1e-9));
  double best = 1e9;
  const double q = 0.005;
  for (double c0 = 0.0; c0 <= 0.05 + 1e-12; c0 += q)
    for (double c1 = -0.4; c1 <= 0.2 + 1e-12; c1 += q)
      for (double c2 = 0.0; c2 <= 0.5 + 1e-12; c2 += q)
        if (feasible(c0, c1, c2, 1e-12)) best = std::min(best, integral(c0, c1, c2));
  const double lp = integral(c[0], c[1], c[2]);
  EXPECT_LE(lp, best + 1e-9);
  EXPECT_GT(lp, best - 0.004);  // grid quantization
}

TEST(FitErrorFunction, AllZeroSamplesGiveFloor) {
  ErrorSampleSet set;
  for (int i = 0; i < 20; ++i) set.samples.push_back({0.1 * i, 0.0, 0.0});
  const auto g = fit_error_function(set, 2.0);
  EXPECT_DOUBLE_EQ(g.rate_x(0.7), 1e-3);
  EXPECT_DOUBLE_EQ(g.rate_y(1.9), 1e-3);
}

TEST(FitErrorFunction, RejectsBadInput) {
  ErrorSampleSet set;
  EXPECT_THROW(fit_error_function(set, 1.0), Error);
  for (int i = 0; i < 20; ++i) set.samples.push_back({0.1 * i, -1.0, 0.0});
  EXPECT_THROW(fit_error_function(set, 2.0), Error);
}

TEST(CollectErrorSamples, EmptyCountRejected) {
  EXPECT_THROW(collect_error_samples({11, 13}, 2.1, 0, 5, 1, fx().em), Error);
}

TEST(CollectErrorSamples, Deterministic) {
  const auto a = collect_error_samples({11, 13}, 2.1, 4, 3, 5, fx().em);
  const auto b = collect_error_samples({11, 13}, 2.1, 4, 3, 5, fx().em);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].rate_x, b.samples[i].rate_x);
    EXPECT_EQ(a.samples[i].rate_y, b.samples[i].rate_y);
  }
}

TEST(CollectErrorSamples, NearIdealPlantHasSmallRates) {
  ErrorModel em = fx().em;
  em.estimation_error = false;
  em.perturb_plant = false;
  em.eps = {};
  // start on the reference: no speed spread, pre-roll on nearly the same k1, no braking pre-roll
  em.dk2_limit = 1e-3;
  em.dk1_limit = 1e-3;
  em.braking_preroll_fraction = 0.0;
  const auto set = collect_error_samples({11, 13}, 2.1, 5, 4, 3, em);
  double worst = 0.0;
  for (const auto& s : set.samples) worst = std::max({worst, s.rate_x, s.rate_y});
  EXPECT_LT(worst, 0.05);
}

TEST(FitErrorFunction, DominatesFitAndHoldout) {
  const Interval range{11, 13};
  const double T = 2.1;
  const auto fit = collect_error_samples(range, T, 20, 10, 11, fx().em);
  auto g = fit_error_function(fit, T);
  g.speed_range = range;
  EXPECT_EQ(dominance_fraction(g, fit), 1.0);
  EXPECT_TRUE(g.nonnegative());
  const auto held = collect_error_samples(range, T, 20, 10, 12, fx().em);
  EXPECT_GE(dominance_fraction(g, held), 0.99);
}

TEST(Lemma1, CoverageAndScaling) {
  const Interval range{7, 9};
  const double T = 1.63;
  const auto fit = collect_error_samples(range, T, 20, 10, 21, fx().em);
  auto g = fit_error_function(fit, T);
  g.speed_range = range;
  const auto rep = validate_lemma1(g, 100, 22, fx().em);
  ASSERT_TRUE(rep.defined());
  EXPECT_GE(rep.covered, 99u);
  const auto big = validate_lemma1(g.scaled(10.0), 100, 22, fx().em);
  EXPECT_EQ(big.covered, 100u);
  EXPECT_EQ(big.d_bounded, 100u);
  EXPECT_FALSE(validate_lemma1(g, 0, 22, fx().em).defined());
}
