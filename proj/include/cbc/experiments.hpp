#pragma once

// Composite experiments shared by the command-line tool and the acceptance
// suite: reference cycles, oracle branches, branch comparison, the noisy
// spline-versus-Fourier comparison, parsimony and target replay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cbc/config.hpp"
#include "cbc/continuation.hpp"
#include "cbc/embedding.hpp"
#include "cbc/error.hpp"
#include "cbc/knots.hpp"
#include "cbc/oracle.hpp"
#include "cbc/plant.hpp"
#include "cbc/random.hpp"
#include "cbc/spline.hpp"

namespace cbc {

/// Settled open-loop oscillation with its angle encoding.
struct ReferenceCycle {
  OpenLoopCycle cycle;
  AngleEmbedding embedding;
  SampleSet encoded;
};

inline ReferenceCycle capture_reference_cycle(const ExperimentConfig& c, double lambda,
                                              std::optional<OriginHeuristic> heuristic = std::nullopt) {
  Plant plant = make_plant(c);
  ReferenceCycle r;
  r.cycle = plant.capture_open_loop_cycle(lambda);
  r.embedding = compute_embedding(r.cycle.cycle, heuristic.value_or(c.controller.heuristic), c.controller.manual_origin);
  r.encoded = encode_pointwise(r.embedding, r.cycle.cycle);
  return r;
}

/// Oracle branch through the configured seed, traced in both parameter
/// directions and joined at the seed into one path.
struct OracleRun {
  ShootingOrbit seed;
  std::vector<ShootingOrbit> points;
  ShootingBranch decreasing;
  ShootingBranch increasing;
  std::vector<HopfPoint> hopf;
  std::vector<double> folds;
};

inline std::vector<double> amplitude_arclength(const std::vector<ShootingOrbit>& points, std::vector<double>* lambda) {
  std::vector<double> s;
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0) {
      acc += std::hypot(points[i].lambda - points[i - 1].lambda, points[i].amplitude - points[i - 1].amplitude);
    }
    s.push_back(acc);
    if (lambda) lambda->push_back(points[i].lambda);
  }
  return s;
}

inline OracleRun run_oracle(const ExperimentConfig& c, const LogSink& log = {}) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const OracleSettings& os = c.oracle;
  OracleRun run;
  run.seed = shoot_from_simulation(c.model, os.seed_parameter, c.initial_state);
  say(fmt::format("oracle seed: {} = {:.6g}, period {:.6g}, amplitude {:.6g}, multiplier {:.4g}",
                  c.model.parameter_name(), run.seed.lambda, run.seed.period, run.seed.amplitude,
                  run.seed.multiplier.real()));
  for (bool increasing : {false, true}) {
    ShootingContinuationOptions o;
    o.increasing = increasing;
    o.lambda_min = os.lambda_min;
    o.lambda_max = os.lambda_max;
    o.stepsize = os.stepsize;
    o.max_stepsize = os.max_stepsize;
    o.amplitude_floor = os.amplitude_floor;
    ShootingBranch b = continue_periodic_shooting(c.model, run.seed, o);
    say(fmt::format("oracle {}: {} points, terminated: {} ({})", increasing ? "increasing" : "decreasing",
                    b.points.size(), to_string(b.termination), b.termination_detail));
    (increasing ? run.increasing : run.decreasing) = std::move(b);
  }
  run.points.assign(run.decreasing.points.rbegin(), run.decreasing.points.rend());
  const std::size_t skip = run.increasing.points.empty() || run.points.empty() ? 0 : 1;
  run.points.insert(run.points.end(), run.increasing.points.begin() + static_cast<std::ptrdiff_t>(skip),
                    run.increasing.points.end());
  std::vector<double> lambda;
  const std::vector<double> s = amplitude_arclength(run.points, &lambda);
  run.folds = branch_folds(lambda, s);
  for (double f : run.folds) say(fmt::format("oracle fold at {:.6g}", f));
  try {
    run.hopf = equilibrium_branch(c.model, os.lambda_min, os.lambda_max, (os.lambda_max - os.lambda_min) / 200.0).hopf;
  } catch (const Error& e) {
    say(fmt::format("equilibrium sweep failed: {}", e.what()));
  }
  for (const auto& h : run.hopf) say(fmt::format("hopf point at {:.10g}", h.lambda));
  return run;
}

/// CBC amplitude against the oracle at the same parameter.
struct AmplitudeComparison {
  double lambda = 0.0;
  double cbc = 0.0;
  double oracle = 0.0;
  double relative_error() const { return std::abs(cbc - oracle) / std::abs(oracle); }
};

/// Oracle amplitude at `lambda` on the piece of the oracle path (split at
/// parameter reversals) nearest to (lambda, amplitude) in coordinates scaled
/// by the path's extent; empty when `lambda` lies outside that piece.
inline std::optional<double> oracle_amplitude_on_branch(const std::vector<ShootingOrbit>& oracle, double lambda,
                                                        double amplitude) {
  if (oracle.size() < 2) return std::nullopt;
  double l0 = INFINITY, l1 = -INFINITY, a1 = 0.0;
  for (const auto& o : oracle) {
    l0 = std::min(l0, o.lambda);
    l1 = std::max(l1, o.lambda);
    a1 = std::max(a1, o.amplitude);
  }
  const double sl = l1 > l0 ? l1 - l0 : 1.0, sa = a1 > 0.0 ? a1 : 1.0;
  // piece[i] labels segment (i - 1, i).
  std::vector<int> piece(oracle.size(), 0);
  for (std::size_t i = 2; i < oracle.size(); ++i) {
    const bool turn = (oracle[i - 1].lambda - oracle[i - 2].lambda) * (oracle[i].lambda - oracle[i - 1].lambda) < 0.0;
    piece[i] = piece[i - 1] + (turn ? 1 : 0);
  }
  double best = INFINITY;
  std::size_t nearest = 1;
  for (std::size_t i = 1; i < oracle.size(); ++i) {
    const double ax = oracle[i - 1].lambda / sl, ay = oracle[i - 1].amplitude / sa;
    const double dx = oracle[i].lambda / sl - ax, dy = oracle[i].amplitude / sa - ay;
    const double px = lambda / sl - ax, py = amplitude / sa - ay;
    const double len2 = dx * dx + dy * dy;
    const double t = len2 > 0.0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
    const double d = std::hypot(px - t * dx, py - t * dy);
    if (d < best) {
      best = d;
      nearest = i;
    }
  }
  for (std::size_t i = 1; i < oracle.size(); ++i) {
    if (piece[i] != piece[nearest]) continue;
    const double x0 = oracle[i - 1].lambda, x1 = oracle[i].lambda;
    if (lambda < std::min(x0, x1) || lambda > std::max(x0, x1) || x0 == x1) continue;
    const double w = (lambda - x0) / (x1 - x0);
    return (1.0 - w) * oracle[i - 1].amplitude + w * oracle[i].amplitude;
  }
  return std::nullopt;
}

/// Each point is matched on the oracle piece it lies nearest to; points
/// outside that piece's parameter range are skipped.
inline std::vector<AmplitudeComparison> compare_with_oracle(const Branch& branch, const std::vector<ShootingOrbit>& oracle) {
  std::vector<AmplitudeComparison> out;
  for (const auto& p : branch.points) {
    const auto a = oracle_amplitude_on_branch(oracle, p.lambda, p.amplitude);
    if (a) out.push_back({p.lambda, p.amplitude, *a});
  }
  return out;
}

/// Parameter values at which the accepted branch reverses direction.
inline std::vector<double> branch_reversals(const Branch& branch) {
  std::vector<double> lambda, s;
  double acc = 0.0;
  for (std::size_t i = 0; i < branch.points.size(); ++i) {
    if (i > 0) {
      acc += std::hypot(branch.points[i].lambda - branch.points[i - 1].lambda,
                        branch.points[i].amplitude - branch.points[i - 1].amplitude);
    }
    lambda.push_back(branch.points[i].lambda);
    s.push_back(acc);
  }
  return branch_folds(lambda, s);
}

/// Spearman rank correlation; ties share their mean rank.
inline double rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(Errc::ValidationError, "rank correlation needs paired samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double mean = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mean;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// One noisy closed-loop winding fitted by a spline and by a Fourier series
/// with the same number of parameters.
struct NoiseTrial {
  int parameters = 0;
  std::uint64_t seed = 0;
  double spline_rmse = 0.0;
  double fourier_rmse = 0.0;
  bool spline_wins() const { return spline_rmse < fourier_rmse; }
};

struct NoiseCompareOptions {
  /// Windings discarded before the recorded one.
  int transient_windings = 5;
};

/// The plant is held on the deterministic target (fitted to the open-loop
/// cycle at the configured parameter) while its x measurements carry noise.
/// Both fits use the recorded measurements over the noise-free phase and are
/// scored against the noise-free x. Parameter counts must be odd.
inline std::vector<NoiseTrial> noise_compare(const ExperimentConfig& c, const NoiseCompareOptions& options = {},
                                             const LogSink& log = {}) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const NoiseCompareSettings& ns = c.noise_compare;
  for (int n : ns.coefficients) {
    if (n < 3 || n % 2 == 0) {
      throw Error(Errc::ValidationError, fmt::format("noise comparison needs odd parameter counts >= 3, got {}", n));
    }
  }
  const ReferenceCycle ref = capture_reference_cycle(c, ns.parameter);
  std::vector<NoiseTrial> trials;
  for (int n : ns.coefficients) {
    KnotOptimizationConfig kc = c.knots;
    kc.n_interior = static_cast<std::size_t>(n - 1);
    const KnotFit kf = optimize_knots(kc, ref.encoded);
    const PeriodicBasis basis(kf.knots);
    const SplineCurve target = fit_least_squares(basis, ref.encoded).curve;
    say(fmt::format("{} parameters: target fit error {:.4e}", n, kf.error));
    for (int s = 0; s < ns.seeds; ++s) {
      ControllerConfig cc;
      cc.k_p = c.controller.k_p;
      cc.target = target;
      cc.embedding = ref.embedding;
      cc.noise_variance = ns.variance;
      cc.noise_seed = counter_seed(derive_seed(c.seed, "noise-compare"), static_cast<std::uint64_t>(s));
      SteadyStateOptions so = c.controller.steady;
      so.coefficient_tolerance = std::numeric_limits<double>::infinity();
      so.min_windings = options.transient_windings + 1;
      Plant plant(c.model, {ref.cycle.cycle.x.front(), ref.cycle.cycle.z.front()}, c.integrator);
      plant.set_period_estimate(ref.cycle.period);
      const SteadyCycleRecord rec = plant.run_to_steady_state(cc, ns.parameter, basis, so);

      SampleSet data;
      for (std::size_t i = 0; i < rec.observed.size(); ++i) {
        data.push_back(encode_unit(ref.embedding, rec.true_x[i], rec.observed.z[i]), rec.observed.x[i]);
      }
      const SplineCurve sf = fit_least_squares(basis, data).curve;
      const FourierSeries ff = fourier_fit(data, static_cast<std::size_t>((n - 1) / 2)).series;
      double se = 0.0, fe = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        se += std::pow(sf(data.t[i]) - rec.true_x[i], 2);
        fe += std::pow(ff(data.t[i]) - rec.true_x[i], 2);
      }
      NoiseTrial t;
      t.parameters = n;
      t.seed = static_cast<std::uint64_t>(s);
      t.spline_rmse = std::sqrt(se / static_cast<double>(data.size()));
      t.fourier_rmse = std::sqrt(fe / static_cast<double>(data.size()));
      say(fmt::format("  seed {}: spline {:.5f}, fourier {:.5f}, effort {:.4f}", s, t.spline_rmse, t.fourier_rmse,
                      rec.rms_effort));
      trials.push_back(t);
    }
  }
  return trials;
}

/// Optimized-knot spline against Fourier fits of the same samples.
struct ParsimonyResult {
  std::size_t coefficients = 0;
  double spline_error = 0.0;
  KnotVector knots{std::vector<double>{0.25, 0.5, 0.75}};
  /// Fourier fit with the largest odd parameter count not above the spline's.
  int fourier_equal_parameters = 0;
  double fourier_equal_error = 0.0;
  /// Smallest Fourier parameter count whose residual is at most the spline's.
  std::optional<int> fourier_parameters_needed;

  std::optional<double> factor() const {
    if (!fourier_parameters_needed) return std::nullopt;
    return static_cast<double>(*fourier_parameters_needed) / static_cast<double>(coefficients);
  }
};

inline ParsimonyResult parsimony(const SampleSet& samples, const KnotOptimizationConfig& kc, int max_harmonics = 60) {
  ParsimonyResult r;
  r.coefficients = kc.n_interior + 1;
  const KnotFit kf = optimize_knots(kc, samples);
  r.knots = kf.knots;
  r.spline_error = kf.error;
  const int equal_harmonics = static_cast<int>((r.coefficients - 1) / 2);
  r.fourier_equal_parameters = 2 * equal_harmonics + 1;
  r.fourier_equal_error = fourier_fit(samples, static_cast<std::size_t>(equal_harmonics)).error;
  for (int h = 0; h <= max_harmonics; ++h) {
    if (fourier_fit(samples, static_cast<std::size_t>(h)).error <= r.spline_error) {
      r.fourier_parameters_needed = 2 * h + 1;
      break;
    }
  }
  return r;
}

/// Closed-loop replay of a target recorded at another parameter value.
struct ReplayResult {
  bool stalled = false;
  /// Half the peak-to-peak noise-free x over the final winding, if oscillating.
  double amplitude = 0.0;
  double rms_effort = 0.0;
  AngleEmbedding embedding;
  std::string detail;
};

/// The target is the spline fit of the open-loop cycle at `target_lambda`,
/// which is noninvasive there. The replay starts from that cycle.
inline ReplayResult replay_target(const ExperimentConfig& c, double target_lambda, double replay_lambda,
                                  OriginHeuristic heuristic) {
  Plant plant = make_plant(c);
  const OpenLoopCycle cyc = plant.capture_open_loop_cycle(target_lambda);
  ReplayResult r;
  r.embedding = compute_embedding(cyc.cycle, heuristic, c.controller.manual_origin);
  const SampleSet enc = encode_pointwise(r.embedding, cyc.cycle);
  const KnotFit kf = optimize_knots(c.knots, enc);
  const PeriodicBasis basis(kf.knots);
  ControllerConfig cc;
  cc.k_p = c.controller.k_p;
  cc.target = fit_least_squares(basis, enc).curve;
  cc.embedding = r.embedding;
  try {
    const SteadyCycleRecord rec = plant.run_to_steady_state(cc, replay_lambda, basis, c.controller.steady);
    const auto [lo, hi] = std::minmax_element(rec.true_x.begin(), rec.true_x.end());
    r.amplitude = 0.5 * (*hi - *lo);
    r.rms_effort = rec.rms_effort;
    r.detail = fmt::format("oscillates with amplitude {:.4g} after {} windings", r.amplitude, rec.windings);
  } catch (const Error& e) {
    if (e.code() != Errc::StalledAtEquilibrium) throw;
    r.stalled = true;
    r.detail = e.what();
  }
  return r;
}

}  // namespace cbc
