#pragma once

// Free-knot placement: choose interior knots minimising the least-squares
// error of the best-fit periodic spline, and adapt them between steps.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cbc/bounded_minimizer.hpp"
#include "cbc/error.hpp"
#include "cbc/random.hpp"
#include "cbc/spline.hpp"

namespace cbc {

/// Returned by the knot objective when the candidate basis is unusable.
inline constexpr double kKnotPenalty = 1e12;
/// Knots are kept at least this far from the domain boundary.
inline constexpr double kKnotMargin = 1e-6;

struct KnotOptimizationConfig {
  std::size_t n_interior = 9;
  int restarts = 20;
  int max_iterations = 200;
  /// Adaptation runs a full multistart every time instead of one warm-started local step.
  bool always_multistart = false;
  /// Relative fit-error growth (versus the last accepted error) that triggers a multistart.
  double refit_threshold = 2.0;
  /// Smallest gap between neighbouring knots, including across the seam. Zero disables it.
  double min_spacing = 0.0;
  std::uint64_t seed = 0;
};

struct KnotFit {
  KnotVector knots;
  double error = 0.0;
  bool reoptimized = false;
};

/// Sorted candidate knots clamped into the domain margin, then pushed apart to
/// at least `min_spacing` (half of it at each end of the domain).
inline std::vector<double> admissible_knots(std::span<const double> candidate, double min_spacing = 0.0) {
  std::vector<double> k(candidate.begin(), candidate.end());
  const double lo = std::max(kKnotMargin, 0.5 * min_spacing);
  const double hi = 1.0 - lo;
  for (double& v : k) v = std::clamp(v, lo, hi);
  std::sort(k.begin(), k.end());
  if (min_spacing > 0.0 && !k.empty()) {
    if (min_spacing * static_cast<double>(k.size()) >= 1.0) {
      throw Error(Errc::ValidationError, "minimum knot spacing leaves no room for the knots");
    }
    for (std::size_t i = 1; i < k.size(); ++i) k[i] = std::max(k[i], k[i - 1] + min_spacing);
    k.back() = std::min(k.back(), hi);
    for (std::size_t i = k.size() - 1; i-- > 0;) k[i] = std::min(k[i], k[i + 1] - min_spacing);
  }
  return k;
}

/// Least-squares residual of the best spline on the admissible form of the candidate knots.
inline double knot_fit_error(std::span<const double> candidate, const SampleSet& reference,
                             double min_spacing = 0.0) {
  const std::vector<double> knots = admissible_knots(candidate, min_spacing);
  try {
    return fit_least_squares(PeriodicBasis(knots), reference).error;
  } catch (const Error&) {
    return kKnotPenalty;
  }
}

namespace detail {

inline double peak_to_peak(const SampleSet& s) {
  if (s.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(s.x.begin(), s.x.end());
  return *hi - *lo;
}

inline std::vector<double> equispaced_knots(std::size_t n) {
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) k[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
  return k;
}

inline std::vector<double> tidy_knots(const Eigen::VectorXd& x, double min_spacing) {
  return admissible_knots(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), min_spacing);
}

struct LocalResult {
  std::vector<double> knots;
  double error;
};

inline LocalResult local_knot_search(const std::vector<double>& start, const SampleSet& reference,
                                     int max_iterations, double min_spacing) {
  const auto n = static_cast<Eigen::Index>(start.size());
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(n, kKnotMargin);
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, 1.0 - kKnotMargin);
  BoundedMinimizerOptions opts;
  opts.max_iterations = max_iterations;
  const auto objective = [&](const Eigen::VectorXd& x) {
    return knot_fit_error(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), reference,
                          min_spacing);
  };
  const Eigen::Map<const Eigen::VectorXd> x0(start.data(), n);
  const auto r = minimize_bounded(objective, Eigen::VectorXd(x0), lower, upper, opts);
  auto knots = tidy_knots(r.x, min_spacing);
  return {knots, knot_fit_error(knots, reference, min_spacing)};
}

}  // namespace detail

/// Multistart knot placement: each restart is a bounded quasi-Newton run from
/// sorted uniform draws; the best result over all restarts is returned.
inline KnotFit optimize_knots(const KnotOptimizationConfig& config, const SampleSet& reference) {
  if (config.n_interior < 3 || config.restarts < 1) {
    throw Error(Errc::ValidationError, "knot optimisation needs n_interior >= 3 and restarts >= 1");
  }
  if (reference.size() < config.n_interior + 1) {
    throw Error(Errc::InsufficientSamples, "reference has fewer samples than free coefficients");
  }
  if (detail::peak_to_peak(reference) < 1e-9) {
    const auto k = detail::equispaced_knots(config.n_interior);
    return {KnotVector(k), knot_fit_error(k, reference, config.min_spacing), true};
  }

  double best_error = std::numeric_limits<double>::infinity();
  std::vector<double> best;
  for (int r = 0; r < config.restarts; ++r) {
    std::mt19937_64 rng(counter_seed(config.seed, static_cast<std::uint64_t>(r)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> start(config.n_interior);
    for (double& k : start) k = unit(rng);
    std::sort(start.begin(), start.end());
    auto local = detail::local_knot_search(start, reference, config.max_iterations, config.min_spacing);
    if (local.error < best_error) {
      best_error = local.error;
      best = std::move(local.knots);
    }
  }
  if (best_error >= kKnotPenalty) {
    throw Error(Errc::AllRestartsFailed, "every knot restart ended on a rank-deficient basis");
  }
  return {KnotVector(best), best_error, true};
}

/// One warm-started local step from the current knots; falls back to a full
/// multistart when the error exceeds refit_threshold * baseline_error.
inline KnotFit adapt_knots(const KnotVector& current, const SampleSet& reference,
                           const KnotOptimizationConfig& config, double baseline_error) {
  const std::vector<double> start(current.interior().begin(), current.interior().end());
  const double start_error = knot_fit_error(start, reference, config.min_spacing);
  if (detail::peak_to_peak(reference) < 1e-9) return {current, start_error, false};
  if (config.always_multistart) return optimize_knots(config, reference);

  auto local = detail::local_knot_search(start, reference, config.max_iterations, config.min_spacing);
  KnotFit fit{current, start_error, false};
  if (local.error < start_error) {
    try {
      fit = {KnotVector(local.knots), local.error, false};
    } catch (const Error&) {
    }
  }
  if (baseline_error > 0.0 && fit.error > config.refit_threshold * baseline_error) {
    KnotFit full = optimize_knots(config, reference);
    if (full.error < fit.error) return full;
  }
  return fit;
}

}  // namespace cbc
