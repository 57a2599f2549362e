#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cbc/knots.hpp"
#include "test_support.hpp"

using namespace cbc;
using test_support::error_code_of;

namespace {

SampleSet sample_curve(const SplineCurve& c, int n) {
  SampleSet s;
  for (int j = 0; j < n; ++j) {
    const double t = static_cast<double>(j) / n;
    s.push_back(t, c(t));
  }
  return s;
}

SplineCurve three_knot_truth() {
  const std::vector<double> k{0.2, 0.5, 0.8};
  Eigen::VectorXd c(4);
  c << 1.0, -0.5, 2.0, 0.3;
  return SplineCurve(PeriodicBasis(k), c);
}

// Sharp periodic pulse; its best knots are far from equispaced.
double pulse(double t) {
  const double d = std::sin(std::numbers::pi * (t - 0.3));
  return std::exp(-30.0 * d * d) + 0.2 * std::cos(2.0 * std::numbers::pi * t);
}

SampleSet sample_fn(auto&& f, int n) {
  SampleSet s;
  for (int j = 0; j < n; ++j) {
    const double t = static_cast<double>(j) / n;
    s.push_back(t, f(t));
  }
  return s;
}

}  // namespace

TEST(KnotFitError, SelfFitIsExact) {
  const auto truth = three_knot_truth();
  const auto s = sample_curve(truth, 200);
  EXPECT_LT(knot_fit_error(truth.basis().knots().interior(), s), 1e-16);
}

TEST(KnotFitError, CoincidentKnotsGivePenalty) {
  const auto s = sample_fn(pulse, 200);
  const std::vector<double> k{0.2, 0.4, 0.4, 0.8};
  EXPECT_EQ(knot_fit_error(k, s), kKnotPenalty);
}

TEST(KnotFitError, SortsAndClampsCandidates) {
  const auto s = sample_fn(pulse, 200);
  const std::vector<double> sorted{kKnotMargin, 0.3, 0.6, 0.9};
  const std::vector<double> shuffled{0.9, -0.5, 0.6, 0.3};
  EXPECT_EQ(knot_fit_error(shuffled, s), knot_fit_error(sorted, s));
}

TEST(OptimizeKnots, RecoversGeneratingKnots) {
  const auto s = sample_curve(three_knot_truth(), 400);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 3;
  cfg.restarts = 20;
  const auto fit = optimize_knots(cfg, s);
  EXPECT_LT(fit.error, 1e-12);
  EXPECT_NEAR(fit.knots.interior()[0], 0.2, 1e-4);
  EXPECT_NEAR(fit.knots.interior()[1], 0.5, 1e-4);
  EXPECT_NEAR(fit.knots.interior()[2], 0.8, 1e-4);
}

TEST(OptimizeKnots, MoreRestartsNeverWorse) {
  const auto s = sample_fn(pulse, 300);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 6;
  cfg.seed = 11;
  cfg.restarts = 1;
  const double one = optimize_knots(cfg, s).error;
  cfg.restarts = 20;
  const double twenty = optimize_knots(cfg, s).error;
  EXPECT_LE(twenty, one);
}

TEST(OptimizeKnots, BeatsEquispacedOnPulse) {
  const auto s = sample_fn(pulse, 300);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 6;
  const auto fit = optimize_knots(cfg, s);
  EXPECT_LT(fit.error, knot_fit_error(detail::equispaced_knots(6), s));
}

TEST(OptimizeKnots, DeterministicForSeed) {
  const auto s = sample_fn(pulse, 300);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 5;
  cfg.restarts = 4;
  cfg.seed = 1234;
  const auto a = optimize_knots(cfg, s);
  const auto b = optimize_knots(cfg, s);
  EXPECT_EQ(a.knots, b.knots);
  EXPECT_EQ(a.error, b.error);
}

TEST(OptimizeKnots, OutputsOrderedAndInsideMargin) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    const auto s = sample_fn([&, shift = trial * 0.13](double t) { return pulse(std::fmod(t + shift, 1.0)); }, 250);
    KnotOptimizationConfig cfg;
    cfg.n_interior = 3 + static_cast<std::size_t>(trial);
    cfg.restarts = 3;
    cfg.seed = rng();
    const auto fit = optimize_knots(cfg, s);
    const auto k = fit.knots.interior();
    for (std::size_t i = 0; i < k.size(); ++i) {
      EXPECT_GE(k[i], kKnotMargin);
      EXPECT_LE(k[i], 1.0 - kKnotMargin);
      if (i > 0) EXPECT_GT(k[i], k[i - 1]);
    }
  }
}

TEST(OptimizeKnots, ConstantSignalSkipsOptimisation) {
  const auto s = sample_fn([](double) { return 0.7; }, 100);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 4;
  const auto fit = optimize_knots(cfg, s);
  EXPECT_LT(fit.error, 1e-20);
  EXPECT_EQ(std::vector<double>(fit.knots.interior().begin(), fit.knots.interior().end()),
            detail::equispaced_knots(4));
}

TEST(OptimizeKnots, ValidatesConfig) {
  const auto s = sample_fn(pulse, 100);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 2;
  EXPECT_EQ(error_code_of([&] { optimize_knots(cfg, s); }), Errc::ValidationError);
  cfg.n_interior = 4;
  cfg.restarts = 0;
  EXPECT_EQ(error_code_of([&] { optimize_knots(cfg, s); }), Errc::ValidationError);
  cfg.restarts = 1;
  SampleSet tiny;
  tiny.push_back(0.1, 1.0);
  EXPECT_EQ(error_code_of([&] { optimize_knots(cfg, tiny); }), Errc::InsufficientSamples);
}

TEST(AdaptKnots, OptimalKnotsAreAFixedPoint) {
  const auto truth = three_knot_truth();
  const auto s = sample_curve(truth, 400);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 3;
  const auto fit = adapt_knots(truth.basis().knots(), s, cfg, 1e-20);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(fit.knots.interior()[i], truth.basis().knots().interior()[i], 1e-6);
  }
  EXPECT_FALSE(fit.reoptimized);
}

TEST(AdaptKnots, TimeWarpedReferenceImproves) {
  const auto original = sample_fn(pulse, 300);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 7;
  const auto fit = optimize_knots(cfg, original);
  const auto warp = [](double t) { return t + 0.04 * std::sin(2.0 * std::numbers::pi * t); };
  const auto warped = sample_fn([&](double t) { return pulse(warp(t)); }, 300);
  const double before = knot_fit_error(fit.knots.interior(), warped);
  const auto adapted = adapt_knots(fit.knots, warped, cfg, fit.error);
  EXPECT_LE(adapted.error, before);
  EXPECT_NEAR(adapted.error, knot_fit_error(adapted.knots.interior(), warped), 1e-14 + 1e-9 * adapted.error);
}

TEST(AdaptKnots, ConstantReferenceKeepsKnots) {
  const std::vector<double> k{0.15, 0.4, 0.45, 0.9};
  const auto s = sample_fn([](double) { return -2.0; }, 100);
  KnotOptimizationConfig cfg;
  cfg.n_interior = 4;
  const auto fit = adapt_knots(KnotVector(k), s, cfg, 1.0);
  EXPECT_EQ(fit.knots, KnotVector(k));
}

TEST(AdaptKnots, NeverWorseThanWarmStart) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const double a = u(rng), b = u(rng), c = 5.0 + 40.0 * u(rng);
    const auto s = sample_fn(
        [&](double t) {
          const double d = std::sin(std::numbers::pi * (t - a));
          return std::exp(-c * d * d) + b * std::sin(2.0 * std::numbers::pi * t);
        },
        240);
    const auto start = test_support::random_interior(rng, 3, 8, 0.03);
    KnotOptimizationConfig cfg;
    cfg.n_interior = start.size();
    cfg.refit_threshold = 1e300;
    const double e0 = knot_fit_error(start, s);
    const auto fit = adapt_knots(KnotVector(start), s, cfg, e0);
    EXPECT_LE(fit.error, e0 + 1e-10 * std::max(e0, 1.0));
  }
}

TEST(AdaptKnots, LargeErrorGrowthTriggersMultistart) {
  const auto s = sample_fn(pulse, 300);
  const std::vector<double> poor{0.6, 0.7, 0.8, 0.9};
  KnotOptimizationConfig cfg;
  cfg.n_interior = 4;
  cfg.max_iterations = 1;
  const auto fit = adapt_knots(KnotVector(poor), s, cfg, 1e-30);
  EXPECT_TRUE(fit.reoptimized);
}
