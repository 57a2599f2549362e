#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cbc/experiments.hpp"
#include "test_support.hpp"

using namespace cbc;
using test_support::error_code_of;

namespace {

ShootingOrbit orbit(double lambda, double amplitude) {
  ShootingOrbit o;
  o.lambda = lambda;
  o.amplitude = amplitude;
  return o;
}

// Upper branch from 1.0 down to a fold at 0.6, lower branch back up to 0.8.
std::vector<ShootingOrbit> folded_path() {
  return {orbit(1.0, 0.5), orbit(0.8, 0.45), orbit(0.6, 0.35), orbit(0.7, 0.2), orbit(0.8, 0.05)};
}

Branch branch_of(const std::vector<std::pair<double, double>>& pts) {
  Branch b;
  for (auto [l, a] : pts) {
    ContinuationPoint p;
    p.lambda = l;
    p.amplitude = a;
    b.points.push_back(p);
  }
  return b;
}

}  // namespace

TEST(CompareWithOracle, MatchesOnTheNearestPiece) {
  const auto cmp = compare_with_oracle(branch_of({{0.7, 0.41}, {0.7, 0.21}}), folded_path());
  ASSERT_EQ(cmp.size(), 2u);
  EXPECT_NEAR(cmp[0].oracle, 0.4, 1e-12);
  EXPECT_NEAR(cmp[1].oracle, 0.2, 1e-12);
  EXPECT_NEAR(cmp[1].relative_error(), 0.05, 1e-12);
}

TEST(CompareWithOracle, SkipsPointsPastThePathEnds) {
  // 0.85 on the lower side lies past the lower end; 1.1 lies outside the range.
  const auto cmp = compare_with_oracle(branch_of({{0.85, 0.03}, {1.1, 0.5}, {0.9, 0.47}}), folded_path());
  ASSERT_EQ(cmp.size(), 1u);
  EXPECT_EQ(cmp[0].lambda, 0.9);
  EXPECT_FALSE(oracle_amplitude_on_branch(folded_path(), 0.85, 0.03).has_value());
  EXPECT_NEAR(*oracle_amplitude_on_branch(folded_path(), 0.75, 0.13), 0.125, 1e-12);
}

TEST(BranchReversals, FindsTheFold) {
  const auto b = branch_of({{0.5, 0.1}, {0.6, 0.2}, {0.65, 0.3}, {0.6, 0.4}, {0.5, 0.5}});
  const auto r = branch_reversals(b);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_GT(r[0], 0.6);
  EXPECT_LT(r[0], 0.67);
}

TEST(RankCorrelation, MonotoneMapsGiveOne) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a, b, c;
    for (int i = 0; i < 30; ++i) {
      a.push_back(u(rng));
      b.push_back(std::exp(3.0 * a.back()));
      c.push_back(-a.back());
    }
    EXPECT_NEAR(rank_correlation(a, b), 1.0, 1e-12);
    EXPECT_NEAR(rank_correlation(a, c), -1.0, 1e-12);
  }
}

TEST(RankCorrelation, TiesShareRanks) {
  // Ranks (1.5, 1.5, 3) against (1, 2, 3).
  EXPECT_NEAR(rank_correlation({1.0, 1.0, 2.0}, {1.0, 2.0, 3.0}), std::sqrt(0.75), 1e-12);
  EXPECT_EQ(rank_correlation({1.0, 1.0}, {1.0, 2.0}), 0.0);
  EXPECT_EQ(error_code_of([] { (void)rank_correlation({1.0}, {1.0}); }), Errc::ValidationError);
}

TEST(Parsimony, SinusoidNeedsOneHarmonic) {
  SampleSet s;
  for (int j = 0; j < 256; ++j) s.push_back(j / 256.0, std::sin(2.0 * std::numbers::pi * j / 256.0));
  KnotOptimizationConfig kc;
  kc.n_interior = 6;
  const auto r = parsimony(s, kc);
  EXPECT_EQ(r.coefficients, 7u);
  EXPECT_EQ(r.fourier_equal_parameters, 7);
  EXPECT_LT(r.fourier_equal_error, 1e-20);
  ASSERT_TRUE(r.fourier_parameters_needed.has_value());
  EXPECT_EQ(*r.fourier_parameters_needed, 3);
  EXPECT_GT(r.spline_error, r.fourier_equal_error);
}
