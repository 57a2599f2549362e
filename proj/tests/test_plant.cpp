#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cbc/embedding.hpp"
#include "cbc/knots.hpp"
#include "cbc/models.hpp"
#include "cbc/plant.hpp"
#include "test_support.hpp"

using namespace cbc;
using test_support::error_code_of;

namespace {

// Nonzero Oregonator equilibrium x* by bisection on x(1 - x) - f x (x - q) / (x + q) / x.
double oregonator_equilibrium_x(double f, double q) {
  auto g = [&](double x) { return (1.0 - x) - f * (x - q) / (x + q); };
  double a = q, b = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    (g(a) * g(m) <= 0.0 ? b : a) = m;
  }
  return 0.5 * (a + b);
}

SplineCurve fit_cycle(const OpenLoopCycle& cyc, const AngleEmbedding& e, std::size_t n_interior) {
  KnotOptimizationConfig kc;
  kc.n_interior = n_interior;
  const SampleSet enc = encode_pointwise(e, cyc.cycle);
  const KnotFit kf = optimize_knots(kc, enc);
  return fit_least_squares(PeriodicBasis(kf.knots), enc).curve;
}

}  // namespace

TEST(ModelRhs, OregonatorReactionTermVanishesAtQ) {
  const auto m = PlantModel::defaults(ModelKind::Oregonator);
  const double q = m.oregonator().q, eps = m.oregonator().epsilon;
  for (double u : {0.0, 0.7, -2.0}) {
    const State d = m.rhs({q, 0.4}, 1.3, u);
    EXPECT_NEAR(d[0], q * (1.0 - q) / eps + u, 1e-12);
    EXPECT_NEAR(d[1], q - 0.4, 1e-15);
  }
}

TEST(ModelRhs, GeneAtOrigin) {
  const auto m = PlantModel::defaults(ModelKind::Gene);
  const State d = m.rhs({0.0, 0.0}, 0.03, 0.0);
  EXPECT_DOUBLE_EQ(d[0], 1.0);
  EXPECT_DOUBLE_EQ(d[1], 1.0 / m.gene().tau_y);
}

TEST(ModelRhs, ControlEntersOnlyTheFirstComponent) {
  for (auto kind : {ModelKind::Gene, ModelKind::Oregonator}) {
    const auto m = PlantModel::defaults(kind);
    const State a = m.rhs({0.3, 0.2}, 0.9, 0.0);
    const State b = m.rhs({0.3, 0.2}, 0.9, 0.25);
    EXPECT_NEAR(b[0] - a[0], 0.25, 1e-15);
    EXPECT_EQ(b[1], a[1]);
  }
}

TEST(ModelRhs, OregonatorEquilibriumIsAZero) {
  const auto m = PlantModel::defaults(ModelKind::Oregonator);
  const double x = oregonator_equilibrium_x(1.0, m.oregonator().q);
  const State d = m.rhs({x, x}, 1.0, 0.0);
  EXPECT_LT(std::abs(d[0]), 1e-12);
  EXPECT_LT(std::abs(d[1]), 1e-12);
}

TEST(ModelRhs, PoleIsReported) {
  const auto m = PlantModel::defaults(ModelKind::Oregonator);
  EXPECT_EQ(error_code_of([&] { (void)m.rhs({-m.oregonator().q, 0.1}, 1.0); }), Errc::PoleProximity);
}

TEST(ModelRhs, NonPositiveParametersRejected) {
  EXPECT_EQ(error_code_of([] { PlantModel m(OregonatorParams{0.0, 0.025}); }), Errc::ValidationError);
  EXPECT_EQ(error_code_of([] { PlantModel m(GeneParams{10.0, 11.0, -0.1, 2.0}); }), Errc::ValidationError);
}

TEST(Plant, GeneSettlesOnALimitCycle) {
  Plant plant(PlantModel::defaults(ModelKind::Gene), {0.5, 1.5});
  plant.run_open_loop(0.03, 2000.0);
  const auto cyc = plant.capture_open_loop_cycle(0.03);
  EXPECT_TRUE(cyc.converged);
  EXPECT_GT(cyc.amplitude, 0.5);
  EXPECT_NEAR(cyc.period, 220.4, 1.0);
}

TEST(Plant, OregonatorRelaxationOscillation) {
  Plant plant(PlantModel::defaults(ModelKind::Oregonator), {0.2, 0.2});
  const auto cyc = plant.capture_open_loop_cycle(1.0);
  EXPECT_TRUE(cyc.converged);
  EXPECT_NEAR(cyc.period, 3.1491, 2e-3);
  EXPECT_NEAR(cyc.amplitude, 0.28609, 2e-3);
}

TEST(Plant, ZeroGainMatchesOpenLoop) {
  const auto m = PlantModel::defaults(ModelKind::Oregonator);
  Plant ref(m, {0.2, 0.2});
  const auto cyc = ref.capture_open_loop_cycle(1.0);
  const AngleEmbedding e = compute_embedding(cyc.cycle, OriginHeuristic::Middle, std::nullopt);
  ControllerConfig c;
  c.k_p = 0.0;
  c.target = fit_cycle(cyc, e, 6);
  c.embedding = e;
  Plant a(m, {0.3, 0.1});
  Plant b(m, {0.3, 0.1});
  const Trajectory ta = a.simulate(c, 1.0, 10.0, 0.01);
  ControllerConfig open;
  open.embedding = e;
  const Trajectory tb = b.simulate(open, 1.0, 10.0, 0.01);
  ASSERT_EQ(ta.x.size(), tb.x.size());
  for (std::size_t i = 0; i < ta.x.size(); ++i) {
    EXPECT_EQ(ta.x[i], tb.x[i]);
    EXPECT_EQ(ta.u[i], 0.0);
  }
}

TEST(Plant, OpenLoopTargetIsNoninvasive) {
  const auto m = PlantModel::defaults(ModelKind::Oregonator);
  Plant plant(m, {0.2, 0.2});
  const auto cyc = plant.capture_open_loop_cycle(1.0);
  const AngleEmbedding e = compute_embedding(cyc.cycle, OriginHeuristic::Middle, std::nullopt);
  const SplineCurve target = fit_cycle(cyc, e, 6);
  ControllerConfig c;
  c.k_p = 4.0;
  c.target = target;
  c.embedding = e;
  const auto rec = plant.run_to_steady_state(c, 1.0, target.basis());
  EXPECT_TRUE(rec.converged);
  // The effort is bounded by the target's own fit residual, not by zero.
  const double bound = c.k_p * std::sqrt(fit_least_squares(target.basis(), encode_pointwise(e, cyc.cycle)).error /
                                         static_cast<double>(cyc.cycle.size()));
  EXPECT_LT(rec.rms_effort, 2.0 * bound);
}

TEST(Plant, ReplayStallsUnderMinMaxAndOscillatesUnderMaxMin) {
  const auto m = PlantModel::defaults(ModelKind::Oregonator);
  for (auto h : {OriginHeuristic::MinMax, OriginHeuristic::MaxMin}) {
    Plant plant(m, {0.2, 0.2});
    const auto cyc = plant.capture_open_loop_cycle(0.67);
    const AngleEmbedding e = compute_embedding(cyc.cycle, h, std::nullopt);
    const SplineCurve target = fit_cycle(cyc, e, 6);
    ControllerConfig c;
    c.k_p = 4.0;
    c.target = target;
    c.embedding = e;
    if (h == OriginHeuristic::MinMax) {
      EXPECT_EQ(error_code_of([&] { (void)plant.run_to_steady_state(c, 0.65, target.basis()); }),
                Errc::StalledAtEquilibrium);
    } else {
      const auto rec = plant.run_to_steady_state(c, 0.65, target.basis());
      EXPECT_TRUE(rec.converged);
      const auto [lo, hi] = std::minmax_element(rec.true_x.begin(), rec.true_x.end());
      EXPECT_GT(*hi - *lo, 0.3);
    }
  }
}

TEST(Plant, NoiseIsReproducibleFromItsSeed) {
  const auto m = PlantModel::defaults(ModelKind::Oregonator);
  Plant ref(m, {0.2, 0.2});
  const auto cyc = ref.capture_open_loop_cycle(1.0);
  const AngleEmbedding e = compute_embedding(cyc.cycle, OriginHeuristic::Middle, std::nullopt);
  ControllerConfig c;
  c.k_p = 4.0;
  c.target = fit_cycle(cyc, e, 6);
  c.embedding = e;
  c.noise_variance = 0.1;
  auto run = [&](std::uint64_t seed) {
    c.noise_seed = seed;
    Plant p(m, {cyc.cycle.x.front(), cyc.cycle.z.front()});
    return p.simulate(c, 1.0, 5.0, 0.005).x;
  };
  EXPECT_EQ(run(3), run(3));
  EXPECT_NE(run(3), run(4));
}

TEST(Plant, NegativeNoiseVarianceRejected) {
  Plant plant(PlantModel::defaults(ModelKind::Oregonator), {0.2, 0.2});
  ControllerConfig c;
  c.noise_variance = -1.0;
  EXPECT_EQ(error_code_of([&] { (void)plant.simulate(c, 1.0, 1.0, 0.1); }), Errc::ValidationError);
}

TEST(Plant, NonFiniteInitialStateRejected) {
  EXPECT_EQ(error_code_of([] { Plant p(PlantModel::defaults(ModelKind::Gene), {NAN, 0.0}); }), Errc::NonFinite);
}
