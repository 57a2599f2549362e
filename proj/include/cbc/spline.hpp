#pragma once

// Periodic cubic B-spline bases on the unit interval and least-squares
// projection of sampled data onto them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "cbc/error.hpp"

namespace cbc {

/// Spline order (polynomial degree + 1). Everything downstream is cubic.
inline constexpr int kSplineOrder = 4;
inline constexpr int kSplineDegree = kSplineOrder - 1;

/// Tolerance for accepting evaluation points marginally outside [0, 1].
inline constexpr double kDomainTolerance = 1e-12;

/// Condition estimate beyond which a collocation matrix is treated as rank deficient.
inline constexpr double kMaxCollocationCondition = 1e10;

/// Value of a single B-spline of the given order defined on `local`
/// (Order + 1 non-decreasing knots), by the two-term recurrence
///   B_{i,k} = w_{i,k} B_{i,k-1} + (1 - w_{i+1,k}) B_{i+1,k-1}.
/// The first-order pieces are half-open, [xi_i, xi_{i+1}).
template <int Order>
double bspline_value(std::span<const double, Order + 1> local, double t) {
  if constexpr (Order == 1) {
    return (local[0] <= t && t < local[1]) ? 1.0 : 0.0;
  } else {
    const auto weight = [&](int i) {
      const double width = local[i + Order - 1] - local[i];
      return width != 0.0 ? (t - local[i]) / width : 0.0;
    };
    const double left = bspline_value<Order - 1>(local.template subspan<0, Order>(), t);
    const double right = bspline_value<Order - 1>(local.template subspan<1, Order>(), t);
    return weight(0) * left + (1.0 - weight(1)) * right;
  }
}

/// Cox-de Boor evaluation of the Order basis functions that are nonzero on
/// knot span [knots[span], knots[span + 1]). Entry r belongs to raw B-spline
/// span - (Order - 1) + r.
template <int Order>
std::array<double, Order> cox_de_boor(std::span<const double> knots, std::size_t span, double t) {
  std::array<double, Order> values{};
  std::array<double, Order> left{};
  std::array<double, Order> right{};
  values[0] = 1.0;
  for (int j = 1; j < Order; ++j) {
    left[j] = t - knots[span + 1 - j];
    right[j] = knots[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  return values;
}

namespace detail {

/// Nonzero basis functions of runtime degree (<= 3) on a knot span.
inline std::array<double, kSplineOrder> basis_functions(std::span<const double> knots, std::size_t span,
                                                        double t, int degree) {
  switch (degree) {
    case 0: return {1.0, 0.0, 0.0, 0.0};
    case 1: {
      const auto v = cox_de_boor<2>(knots, span, t);
      return {v[0], v[1], 0.0, 0.0};
    }
    case 2: {
      const auto v = cox_de_boor<3>(knots, span, t);
      return {v[0], v[1], v[2], 0.0};
    }
    default: return cox_de_boor<4>(knots, span, t);
  }
}

}  // namespace detail

/// Interior knots on (0, 1) plus boundary knots {0, 1} and the periodic
/// exterior extension: the last three interior knots shifted back one period
/// on the left, the first three shifted forward one period on the right.
class KnotVector {
 public:
  explicit KnotVector(std::span<const double> interior) : interior_(interior.begin(), interior.end()) {
    if (interior_.size() < static_cast<std::size_t>(kSplineDegree)) {
      throw Error(Errc::TooFewKnots,
                  fmt::format("periodic cubic extension needs at least {} interior knots, got {}",
                              kSplineDegree, interior_.size()));
    }
    for (double k : interior_) {
      if (!std::isfinite(k) || k <= 0.0 || k >= 1.0) {
        throw Error(Errc::OutOfDomain, fmt::format("interior knot {} outside (0, 1)", k));
      }
    }
    for (std::size_t i = 1; i < interior_.size(); ++i) {
      if (!(interior_[i] > interior_[i - 1])) {
        throw Error(Errc::NonMonotone, fmt::format("interior knots not strictly increasing at index {}", i));
      }
    }
    const std::size_t n = interior_.size();
    full_.reserve(n + 8);
    for (std::size_t i = 0; i < 3; ++i) full_.push_back(interior_[n - 3 + i] - 1.0);
    full_.push_back(0.0);
    full_.insert(full_.end(), interior_.begin(), interior_.end());
    full_.push_back(1.0);
    for (std::size_t i = 0; i < 3; ++i) full_.push_back(interior_[i] + 1.0);
  }

  std::span<const double> interior() const { return interior_; }
  std::span<const double> full() const { return full_; }
  std::size_t interior_count() const { return interior_.size(); }

  std::array<double, 3> exterior_left() const { return {full_[0], full_[1], full_[2]}; }
  std::array<double, 3> exterior_right() const {
    const std::size_t n = full_.size();
    return {full_[n - 3], full_[n - 2], full_[n - 1]};
  }

  friend bool operator==(const KnotVector&, const KnotVector&) = default;

 private:
  std::vector<double> interior_;
  std::vector<double> full_;
};

inline KnotVector build_periodic_knots(std::span<const double> interior) { return KnotVector(interior); }

/// Cubic B-spline basis with periodic boundary conditions. The raw basis has
/// (knot count - 4) functions; the first three raw coefficients are tied to
/// the last three, leaving interior_count + 1 free coefficients.
class PeriodicBasis {
 public:
  struct Local {
    std::size_t first_raw;
    std::array<double, kSplineOrder> values;
  };

  explicit PeriodicBasis(KnotVector knots) : knots_(std::move(knots)) {}
  explicit PeriodicBasis(std::span<const double> interior) : knots_(interior) {}

  const KnotVector& knots() const { return knots_; }
  std::size_t raw_count() const { return knots_.full().size() - kSplineOrder; }
  std::size_t free_count() const { return raw_count() - kSplineDegree; }
  std::size_t free_index(std::size_t raw) const { return raw % free_count(); }

  /// Nonzero raw basis values at t in [0, 1].
  Local local(double t) const {
    if (!(t >= -kDomainTolerance && t <= 1.0 + kDomainTolerance)) {
      throw Error(Errc::DomainViolation, fmt::format("evaluation point {} outside [0, 1]", t));
    }
    t = std::clamp(t, 0.0, 1.0);
    const auto full = knots_.full();
    // Spans inside the domain run from knot index 3 (= 0) to index n + 3.
    const std::size_t lo = kSplineDegree;
    const std::size_t hi = full.size() - kSplineOrder;
    auto it = std::upper_bound(full.begin() + lo, full.begin() + hi + 1, t);
    std::size_t span = static_cast<std::size_t>(it - full.begin()) - 1;
    span = std::clamp(span, lo, hi - 1);
    return {span - kSplineDegree, cox_de_boor<kSplineOrder>(full, span, t)};
  }

  /// All raw basis values at t.
  std::vector<double> eval(double t) const {
    std::vector<double> out(raw_count(), 0.0);
    const Local l = local(t);
    for (int r = 0; r < kSplineOrder; ++r) out[l.first_raw + r] = l.values[r];
    return out;
  }

  /// Collocation matrix over the free coefficients, [B]_{u,v} = B_v(t_u)
  /// with identified raw functions summed into their shared column.
  Eigen::MatrixXd collocation(std::span<const double> t) const {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.size()),
                                              static_cast<Eigen::Index>(free_count()));
    for (std::size_t u = 0; u < t.size(); ++u) {
      const Local l = local(t[u]);
      for (int r = 0; r < kSplineOrder; ++r) {
        B(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(free_index(l.first_raw + r))) += l.values[r];
      }
    }
    return B;
  }

  /// Stable identity tag derived from the knot values.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (double k : knots_.interior()) {
      std::uint64_t bits = 0;
      static_assert(sizeof(bits) == sizeof(k));
      std::memcpy(&bits, &k, sizeof(k));
      h = (h ^ bits) * 1099511628211ull;
    }
    return h;
  }

  friend bool operator==(const PeriodicBasis&, const PeriodicBasis&) = default;

 private:
  KnotVector knots_;
};

/// Sampled data (t_j, x_j) on the unit domain.
struct SampleSet {
  std::vector<double> t;
  std::vector<double> x;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }

  void push_back(double tj, double xj) {
    t.push_back(tj);
    x.push_back(xj);
  }
};

/// A periodic spline: free coefficients over a periodic basis.
class SplineCurve {
 public:
  SplineCurve(PeriodicBasis basis, Eigen::VectorXd coefficients)
      : basis_(std::move(basis)), coefficients_(std::move(coefficients)) {
    if (static_cast<std::size_t>(coefficients_.size()) != basis_.free_count()) {
      throw Error(Errc::ValidationError, fmt::format("expected {} coefficients, got {}", basis_.free_count(),
                                                     coefficients_.size()));
    }
  }

  const PeriodicBasis& basis() const { return basis_; }
  const Eigen::VectorXd& coefficients() const { return coefficients_; }

  /// Coefficients of every raw B-spline, with the identified ones duplicated.
  Eigen::VectorXd raw_coefficients() const {
    Eigen::VectorXd raw(static_cast<Eigen::Index>(basis_.raw_count()));
    for (std::size_t i = 0; i < basis_.raw_count(); ++i) {
      raw(static_cast<Eigen::Index>(i)) = coefficients_(static_cast<Eigen::Index>(basis_.free_index(i)));
    }
    return raw;
  }

  /// k-th derivative (k <= 3) from differenced local control points.
  double derivative(double t, int k) const {
    if (k == 0) return (*this)(t);
    if (k < 0 || k > kSplineDegree) return 0.0;
    const auto l = basis_.local(t);
    t = std::clamp(t, 0.0, 1.0);
    const auto U = basis_.knots().full();
    const std::size_t span = l.first_raw + kSplineDegree;
    std::array<double, kSplineOrder> pk{};
    for (int i = 0; i < kSplineOrder; ++i) {
      pk[i] = coefficients_(static_cast<Eigen::Index>(basis_.free_index(l.first_raw + i)));
    }
    for (int kk = 1; kk <= k; ++kk) {
      for (int i = 0; i <= kSplineDegree - kk; ++i) {
        const std::size_t lo = l.first_raw + i + kk;
        const std::size_t hi = l.first_raw + i + kSplineDegree + 1;
        pk[i] = (kSplineDegree - kk + 1) * (pk[i + 1] - pk[i]) / (U[hi] - U[lo]);
      }
    }
    const auto n = detail::basis_functions(U, span, t, kSplineDegree - k);
    double sum = 0.0;
    for (int j = 0; j <= kSplineDegree - k; ++j) sum += n[j] * pk[j];
    return sum;
  }

  double operator()(double t) const {
    const auto l = basis_.local(t);
    double sum = 0.0;
    for (int r = 0; r < kSplineOrder; ++r) {
      sum += coefficients_(static_cast<Eigen::Index>(basis_.free_index(l.first_raw + r))) * l.values[r];
    }
    return sum;
  }

 private:
  PeriodicBasis basis_;
  Eigen::VectorXd coefficients_;
};

inline double eval_curve(const SplineCurve& curve, double t) { return curve(t); }

/// Half peak-to-peak of a curve over a uniform grid on [0, 1).
inline double curve_amplitude(const SplineCurve& curve, int grid = 1024) {
  double lo = curve(0.0);
  double hi = lo;
  for (int i = 1; i < grid; ++i) {
    const double v = curve(static_cast<double>(i) / grid);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return 0.5 * (hi - lo);
}

struct LeastSquaresFit {
  SplineCurve curve;
  /// Residual sum of squares ||X - B beta||^2.
  double error;
};

namespace detail {

/// Column-pivoted QR solve of min ||A c - b||, rejecting ill-conditioned A.
inline Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  const auto& R = qr.matrixQR();
  const Eigen::Index n = A.cols();
  const double largest = std::abs(R(0, 0));
  const double smallest = std::abs(R(n - 1, n - 1));
  if (!(smallest > 0.0) || largest / smallest > kMaxCollocationCondition) {
    throw Error(Errc::RankDeficient,
                fmt::format("least-squares matrix condition estimate {:.3g} exceeds {:.0e}",
                            smallest > 0.0 ? largest / smallest : INFINITY, kMaxCollocationCondition));
  }
  return qr.solve(b);
}

}  // namespace detail

/// Least-squares projection of samples onto the free coefficients of `basis`.
inline LeastSquaresFit fit_least_squares(const PeriodicBasis& basis, const SampleSet& samples) {
  if (samples.t.size() != samples.x.size()) {
    throw Error(Errc::ValidationError, "sample abscissae and ordinates differ in length");
  }
  if (samples.size() < basis.free_count()) {
    throw Error(Errc::InsufficientSamples,
                fmt::format("{} samples for {} free coefficients", samples.size(), basis.free_count()));
  }
  const Eigen::MatrixXd B = basis.collocation(samples.t);
  const Eigen::Map<const Eigen::VectorXd> X(samples.x.data(), static_cast<Eigen::Index>(samples.x.size()));
  Eigen::VectorXd beta = detail::solve_least_squares(B, X);
  const double error = (X - B * beta).squaredNorm();
  return {SplineCurve(basis, std::move(beta)), error};
}

}  // namespace cbc
