#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cbc/spline.hpp"
#include "test_support.hpp"

using namespace cbc;
using test_support::error_code_of;

namespace {

std::vector<double> uniform_interior(int n) {
  std::vector<double> k;
  for (int i = 1; i <= n; ++i) k.push_back(static_cast<double>(i) / (n + 1));
  return k;
}

}  // namespace

TEST(KnotVector, ExtendsSymmetricKnotsByOnePeriod) {
  const std::vector<double> interior{0.25, 0.5, 0.75};
  const KnotVector k = build_periodic_knots(interior);
  const auto left = k.exterior_left();
  const auto right = k.exterior_right();
  EXPECT_DOUBLE_EQ(left[0], -0.75);
  EXPECT_DOUBLE_EQ(left[1], -0.5);
  EXPECT_DOUBLE_EQ(left[2], -0.25);
  EXPECT_DOUBLE_EQ(right[0], 1.25);
  EXPECT_DOUBLE_EQ(right[1], 1.5);
  EXPECT_DOUBLE_EQ(right[2], 1.75);
  EXPECT_EQ(k.full().size(), interior.size() + 8);
}

TEST(KnotVector, ExtendsAsymmetricKnots) {
  const std::vector<double> interior{0.1, 0.2, 0.9};
  const KnotVector k(interior);
  const auto left = k.exterior_left();
  const auto right = k.exterior_right();
  EXPECT_NEAR(left[0], -0.9, 1e-15);
  EXPECT_NEAR(left[1], -0.8, 1e-15);
  EXPECT_NEAR(left[2], -0.1, 1e-15);
  EXPECT_NEAR(right[0], 1.1, 1e-15);
  EXPECT_NEAR(right[1], 1.2, 1e-15);
  EXPECT_NEAR(right[2], 1.9, 1e-15);
}

TEST(KnotVector, RejectsInvalidInterior) {
  EXPECT_EQ(error_code_of([] { KnotVector(std::vector<double>{0.3, 0.6}); }), Errc::TooFewKnots);
  EXPECT_EQ(error_code_of([] { KnotVector(std::vector<double>{0.3, 0.3, 0.6}); }), Errc::NonMonotone);
  EXPECT_EQ(error_code_of([] { KnotVector(std::vector<double>{0.6, 0.3, 0.7}); }), Errc::NonMonotone);
  EXPECT_EQ(error_code_of([] { KnotVector(std::vector<double>{0.0, 0.3, 0.6}); }), Errc::OutOfDomain);
  EXPECT_EQ(error_code_of([] { KnotVector(std::vector<double>{0.2, 0.3, 1.2}); }), Errc::OutOfDomain);
}

TEST(BSpline, UniformCubicAtCentralKnot) {
  // Hand expansion on {0,1,2,3,4}: the middle pieces give B(1) = 1/6 and B(2) = 2/3.
  const std::array<double, 5> knots{0, 1, 2, 3, 4};
  EXPECT_NEAR(bspline_value<4>(std::span<const double, 5>(knots), 2.0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(bspline_value<4>(std::span<const double, 5>(knots), 1.0), 1.0 / 6.0, 1e-15);
}

TEST(BSpline, KnotShiftEquivariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<double, 5> knots{};
    for (auto& k : knots) k = u(rng);
    std::sort(knots.begin(), knots.end());
    const double shift = 3.0 * u(rng) - 1.5;
    std::array<double, 5> shifted{};
    for (int i = 0; i < 5; ++i) shifted[i] = knots[i] + shift;
    for (int g = 0; g <= 50; ++g) {
      const double t = knots[0] + (knots[4] - knots[0]) * g / 50.0;
      const double a = bspline_value<4>(std::span<const double, 5>(knots), t);
      const double b = bspline_value<4>(std::span<const double, 5>(shifted), t + shift);
      EXPECT_NEAR(a, b, 1e-12);
    }
  }
}

TEST(PeriodicBasis, CoxDeBoorMatchesRecurrence) {
  const PeriodicBasis basis(std::vector<double>{0.13, 0.3, 0.52, 0.6, 0.88});
  const auto full = basis.knots().full();
  for (int g = 0; g < 400; ++g) {
    const double t = g / 400.0;
    const auto values = basis.eval(t);
    for (std::size_t i = 0; i < basis.raw_count(); ++i) {
      const double direct = bspline_value<4>(std::span<const double, 5>(full.subspan(i, 5)), t);
      EXPECT_NEAR(values[i], direct, 1e-13);
    }
  }
}

TEST(PeriodicBasis, PartitionOfUnityAndNonNegativity) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto interior = test_support::random_interior(rng);
    const PeriodicBasis basis(interior);
    EXPECT_EQ(basis.free_count(), interior.size() + 1);
    EXPECT_EQ(basis.raw_count(), basis.knots().full().size() - 4);
    for (int g = 0; g <= 300; ++g) {
      const double t = g / 300.0;
      const auto v = basis.eval(t);
      double sum = 0.0;
      int nonzero = 0;
      for (double b : v) {
        EXPECT_GE(b, 0.0);
        sum += b;
        nonzero += b != 0.0;
      }
      EXPECT_LE(nonzero, 4);
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(PeriodicBasis, SupportSpansFiveConsecutiveKnots) {
  const PeriodicBasis basis(std::vector<double>{0.2, 0.35, 0.6, 0.8});
  const auto full = basis.knots().full();
  for (int g = 0; g <= 1000; ++g) {
    const double t = g / 1000.0;
    const auto v = basis.eval(t);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] > 0.0) {
        EXPECT_GE(t, full[i]);
        EXPECT_LE(t, full[i + 4]);
      }
    }
  }
}

TEST(PeriodicBasis, LeftAndRightLimitsAgreeAtInteriorKnots) {
  const PeriodicBasis basis(std::vector<double>{0.15, 0.4, 0.45, 0.7, 0.9});
  const auto full = basis.knots().full();
  for (std::size_t span = 4; span < full.size() - 4; ++span) {
    const double t = full[span];
    const auto right = cox_de_boor<4>(full, span, t);
    const auto left = cox_de_boor<4>(full, span - 1, t);
    // Right span covers raw span-3..span, left covers span-4..span-1.
    std::vector<double> r(basis.raw_count(), 0.0), l(basis.raw_count(), 0.0);
    for (int i = 0; i < 4; ++i) {
      r[span - 3 + i] = right[i];
      l[span - 4 + i] = left[i];
    }
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(r[i], l[i], 1e-12);
  }
}

TEST(PeriodicBasis, RejectsOutOfDomainEvaluation) {
  const PeriodicBasis basis(uniform_interior(4));
  EXPECT_EQ(error_code_of([&] { basis.eval(1.1); }), Errc::DomainViolation);
  EXPECT_EQ(error_code_of([&] { basis.eval(-1e-9); }), Errc::DomainViolation);
  EXPECT_NO_THROW(basis.eval(1.0 + 1e-13));
}

TEST(SplineCurve, ConstantCoefficientsGiveConstantCurve) {
  const PeriodicBasis basis(std::vector<double>{0.1, 0.33, 0.5, 0.9});
  const SplineCurve curve(basis, Eigen::VectorXd::Constant(5, 2.5));
  for (int g = 0; g <= 100; ++g) EXPECT_NEAR(eval_curve(curve, g / 100.0), 2.5, 1e-13);
}

TEST(SplineCurve, UnitCoefficientReproducesItsBasisFunctions) {
  const PeriodicBasis basis(std::vector<double>{0.1, 0.33, 0.5, 0.7, 0.9});
  for (std::size_t j = 0; j < basis.free_count(); ++j) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.free_count()));
    c(static_cast<Eigen::Index>(j)) = 1.0;
    const SplineCurve curve(basis, c);
    for (int g = 0; g <= 200; ++g) {
      const double t = g / 200.0;
      const auto raw = basis.eval(t);
      double expected = raw[j];
      if (j < 3) expected += raw[j + basis.free_count()];
      EXPECT_NEAR(curve(t), expected, 1e-14);
    }
  }
}

TEST(SplineCurve, PeriodicSeamContinuity) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const PeriodicBasis basis(test_support::random_interior(rng));
    Eigen::VectorXd c(static_cast<Eigen::Index>(basis.free_count()));
    for (auto& v : c) v = n01(rng);
    const SplineCurve curve(basis, c);
    for (int k = 0; k <= 2; ++k) {
      const double scale = std::max(1.0, std::abs(curve.derivative(0.0, k)));
      EXPECT_LT(std::abs(curve.derivative(0.0, k) - curve.derivative(1.0, k)), 1e-9 * scale) << "order " << k;
    }
  }
}

TEST(SplineCurve, AnalyticDerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n01(0.0, 1.0);
  const PeriodicBasis basis(std::vector<double>{0.12, 0.31, 0.47, 0.66, 0.81});
  Eigen::VectorXd c(6);
  for (auto& v : c) v = n01(rng);
  const SplineCurve curve(basis, c);
  const double h = 1e-6;
  for (double t : {0.05, 0.2, 0.4, 0.55, 0.73, 0.95}) {
    const double d1 = (curve(t + h) - curve(t - h)) / (2 * h);
    EXPECT_NEAR(curve.derivative(t, 1), d1, 1e-6 * std::max(1.0, std::abs(d1)));
    const double h2 = 1e-4;
    const double d2 = (curve(t + h2) - 2 * curve(t) + curve(t - h2)) / (h2 * h2);
    EXPECT_NEAR(curve.derivative(t, 2), d2, 1e-4 * std::max(1.0, std::abs(d2)));
  }
}

TEST(LeastSquares, ReprojectionIdentity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const PeriodicBasis basis(test_support::random_interior(rng, 3, 10, 0.04));
    Eigen::VectorXd c(static_cast<Eigen::Index>(basis.free_count()));
    for (auto& v : c) v = n01(rng);
    const SplineCurve truth(basis, c);
    SampleSet s;
    for (int j = 0; j < 200; ++j) s.push_back(j / 200.0, truth(j / 200.0));
    const auto fit = fit_least_squares(basis, s);
    EXPECT_LT((fit.curve.coefficients() - c).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(fit.error, 1e-18);
  }
}

TEST(LeastSquares, ConstantSamples) {
  const PeriodicBasis basis(std::vector<double>{0.2, 0.4, 0.55, 0.8});
  SampleSet s;
  for (int j = 0; j < 100; ++j) s.push_back(j / 100.0, 3.7);
  const auto fit = fit_least_squares(basis, s);
  for (double b : fit.curve.coefficients()) EXPECT_NEAR(b, 3.7, 1e-12);
}

TEST(LeastSquares, RicherNestedBasisFitsSineBetter) {
  SampleSet s;
  for (int j = 0; j < 500; ++j) s.push_back(j / 500.0, std::sin(2 * std::numbers::pi * j / 500.0));
  const auto fine = fit_least_squares(PeriodicBasis(uniform_interior(9)), s);
  const auto coarse = fit_least_squares(PeriodicBasis(uniform_interior(4)), s);
  EXPECT_EQ(fine.curve.coefficients().size(), 10);
  EXPECT_EQ(coarse.curve.coefficients().size(), 5);
  EXPECT_LT(fine.error, coarse.error);
}

TEST(LeastSquares, PerturbationNeverDecreasesError) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n01(0.0, 1.0);
  SampleSet s;
  for (int j = 0; j < 300; ++j) {
    const double t = j / 300.0;
    s.push_back(t, std::exp(std::sin(2 * std::numbers::pi * t)) + 0.1 * n01(rng));
  }
  const PeriodicBasis basis(std::vector<double>{0.1, 0.25, 0.5, 0.6, 0.85});
  const auto fit = fit_least_squares(basis, s);
  const Eigen::MatrixXd B = basis.collocation(s.t);
  const Eigen::Map<const Eigen::VectorXd> X(s.x.data(), static_cast<Eigen::Index>(s.size()));
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd d(fit.curve.coefficients().size());
    for (auto& v : d) v = n01(rng);
    d *= 1e-6 / d.norm();
    const double perturbed = (X - B * (fit.curve.coefficients() + d)).squaredNorm();
    EXPECT_GE(perturbed, fit.error);
  }
}

TEST(LeastSquares, ErrorPaths) {
  const PeriodicBasis basis(uniform_interior(5));
  SampleSet few;
  for (int j = 0; j < 4; ++j) few.push_back(j / 4.0, 1.0);
  EXPECT_EQ(error_code_of([&] { fit_least_squares(basis, few); }), Errc::InsufficientSamples);
  SampleSet clumped;
  for (int j = 0; j < 50; ++j) clumped.push_back(0.5 + 1e-4 * j / 50.0, 1.0);
  EXPECT_EQ(error_code_of([&] { fit_least_squares(basis, clumped); }), Errc::RankDeficient);
}
