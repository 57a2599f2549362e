#pragma once

// Simulated experiment: a planar model under additive proportional control
// indexed by the embedded-state angle, with optional held measurement noise
// on the controlled variable. Each run continues from where the previous one
// stopped; the rig is never reset.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "cbc/embedding.hpp"
#include "cbc/error.hpp"
#include "cbc/models.hpp"
#include "cbc/ode.hpp"
#include "cbc/random.hpp"
#include "cbc/spline.hpp"

namespace cbc {

struct ControllerConfig {
  double k_p = 0.0;
  /// Target x*(t) over t = phi / 2 pi. Without a target the loop is open.
  std::optional<SplineCurve> target;
  AngleEmbedding embedding;
  /// Variance of the Gaussian noise added to each measurement of x.
  double noise_variance = 0.0;
  std::uint64_t noise_seed = 0;

  bool closed() const { return k_p != 0.0 && target.has_value(); }
};

struct SteadyStateOptions {
  /// Successive windings' response coefficients must agree to this (max norm).
  double coefficient_tolerance = 1e-5;
  int max_windings = 200;
  int min_windings = 2;
  /// Sampling interval is the current period estimate divided by this.
  int samples_per_winding = 1024;
  /// Windings with fewer samples than this do not count towards convergence.
  int min_samples_per_winding = 512;
  /// Less than one full turn of the angle within this many period estimates is a stall.
  double stall_periods = 10.0;
};

/// Steady response of the controlled plant over its final winding.
struct SteadyCycleRecord {
  /// (time, measured x, y) at each sample of the final winding.
  PlanarSamples observed;
  /// Noise-free x at the same instants.
  std::vector<double> true_x;
  /// Control input u at each sample.
  std::vector<double> control;
  /// Measured x against the unit-scaled angle of the measured state.
  SampleSet encoded;
  /// Least-squares response coefficients on the basis used for convergence checks.
  Eigen::VectorXd coefficients;
  double fit_error = 0.0;
  double rms_effort = 0.0;
  double max_effort = 0.0;
  double period = 0.0;
  int windings = 0;
  /// Max-norm coefficient change between the last two windings.
  double discrepancy = std::numeric_limits<double>::infinity();
  bool converged = false;
};

/// One open-loop period between two upward mid-level crossings of x.
struct OpenLoopCycle {
  PlanarSamples cycle;
  double period = 0.0;
  double amplitude = 0.0;
  bool converged = false;
};

struct OpenLoopOptions {
  /// Initial transient, in period estimates.
  double settle_periods = 20.0;
  /// Relative period and amplitude change between observation windows counted as settled.
  double settle_tolerance = 1e-6;
  int max_windows = 60;
  int samples_per_period = 1024;
  bool require_settled = false;
};

/// Dense sampled trajectory for dumps: time, x, y, u and the controller angle.
struct Trajectory {
  std::vector<double> time, x, y, u, phi;
};

class Plant {
 public:
  Plant(PlantModel model, State initial, IntegratorOptions integrator = {})
      : model_(model), state_(initial), integrator_(integrator, 1e-3), period_(model.nominal_period()) {
    if (!std::isfinite(initial[0]) || !std::isfinite(initial[1])) {
      throw Error(Errc::NonFinite, "initial state is not finite");
    }
  }

  const PlantModel& model() const { return model_; }
  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }
  double time() const { return time_; }
  double period_estimate() const { return period_; }
  void set_period_estimate(double p) {
    if (!(p > 0.0)) throw Error(Errc::ValidationError, "period estimate must be positive");
    period_ = p;
  }
  /// Completed calls to run_to_steady_state.
  std::uint64_t evaluations() const { return evaluations_; }

  /// Control input for a measured state.
  static double control_input(const ControllerConfig& c, double x_measured, double y) {
    if (!c.closed()) return 0.0;
    const double t = encode_unit(c.embedding, x_measured, y);
    return c.k_p * ((*c.target)(t)-x_measured);
  }

  /// Unsampled open-loop integration.
  void run_open_loop(double lambda, double duration) {
    auto f = [&](const State& s, double) { return model_.rhs(s, lambda, 0.0); };
    integrator_.advance(f, state_, time_, time_ + duration);
  }

  /// Sampled run of fixed duration, for trajectory dumps.
  Trajectory simulate(const ControllerConfig& c, double lambda, double duration, double sample_dt) {
    validate(c);
    if (!(sample_dt > 0.0)) throw Error(Errc::ValidationError, "sample interval must be positive");
    Trajectory tr;
    const double end = time_ + duration;
    for (;;) {
      const double w = draw_noise(c);
      const double xm = state_[0] + w;
      tr.time.push_back(time_);
      tr.x.push_back(state_[0]);
      tr.y.push_back(state_[1]);
      tr.u.push_back(control_input(c, xm, state_[1]));
      tr.phi.push_back(safe_angle(c.embedding, xm, state_[1]));
      if (time_ >= end - 1e-12 * std::max(1.0, std::abs(end))) break;
      segment(c, lambda, w, std::min(time_ + sample_dt, end));
    }
    return tr;
  }

  /// Run under the controller until successive windings of the response,
  /// fitted on `basis`, agree; returns the final winding. A run that hits the
  /// winding cap comes back with converged = false.
  SteadyCycleRecord run_to_steady_state(const ControllerConfig& c, double lambda, const PeriodicBasis& basis,
                                        const SteadyStateOptions& opts = {}) {
    validate(c);
    if (opts.samples_per_winding < opts.min_samples_per_winding || opts.min_windings < 1 ||
        opts.max_windings < opts.min_windings) {
      throw Error(Errc::ValidationError, "inconsistent steady-state options");
    }
    const AngleEmbedding& e = c.embedding;
    double dt = period_ / opts.samples_per_winding;
    const double stall_horizon = opts.stall_periods * period_;

    struct Row {
      double t, xm, y, x, u, unwrapped;
    };
    std::vector<Row> winding;
    auto observe = [&](double w, double unwrapped_prev, double phi_prev, bool first) {
      const double xm = state_[0] + w;
      // Windings are counted on the noise-free state so that measurement
      // jitter cannot fake or hide a turn.
      const double phi = encode_angle(e, state_[0], state_[1]);
      double unwrapped = phi;
      if (!first) {
        double d = phi - phi_prev;
        if (d > std::numbers::pi) d -= kTwoPi;
        if (d < -std::numbers::pi) d += kTwoPi;
        unwrapped = unwrapped_prev + d;
      }
      return std::pair{Row{time_, xm, state_[1], state_[0], control_input(c, xm, state_[1]), unwrapped}, phi};
    };

    double w = draw_noise(c);
    auto [row, phi] = observe(w, 0.0, 0.0, true);
    winding.push_back(row);
    double last_turn_time = time_;

    SteadyCycleRecord rec;
    std::optional<Eigen::VectorXd> previous;
    int counted = 0;
    while (true) {
      segment(c, lambda, w, time_ + dt);
      w = draw_noise(c);
      auto [next, next_phi] = observe(w, winding.back().unwrapped, phi, false);
      phi = next_phi;
      if (std::abs(next.unwrapped - winding.front().unwrapped) < kTwoPi) {
        winding.push_back(next);
        if (time_ - last_turn_time > stall_horizon) {
          throw Error(Errc::StalledAtEquilibrium,
                      fmt::format("angle advanced {:.3f} rad in {:.4g} time units at parameter {}",
                                  std::abs(next.unwrapped - winding.front().unwrapped), time_ - last_turn_time,
                                  lambda));
        }
        continue;
      }

      // Winding complete; the closing sample starts the next one.
      ++rec.windings;
      last_turn_time = time_;
      const double period = next.t - winding.front().t;
      const bool dense = static_cast<int>(winding.size()) >= opts.min_samples_per_winding;
      SampleSet encoded;
      for (const Row& r : winding) encoded.push_back(encode_unit(e, r.xm, r.y), r.xm);
      auto fit = fit_least_squares(basis, encoded);
      if (dense) {
        ++counted;
        if (previous) rec.discrepancy = (fit.curve.coefficients() - *previous).lpNorm<Eigen::Infinity>();
        previous = fit.curve.coefficients();
      } else {
        previous.reset();
        counted = 0;
      }
      const bool done = dense && counted >= opts.min_windings && rec.discrepancy < opts.coefficient_tolerance;
      if (done || rec.windings >= opts.max_windings) {
        rec.converged = done;
        rec.period = period;
        rec.encoded = std::move(encoded);
        rec.coefficients = fit.curve.coefficients();
        rec.fit_error = fit.error;
        double sum_sq = 0.0;
        for (const Row& r : winding) {
          rec.observed.push_back(r.t, r.xm, r.y);
          rec.true_x.push_back(r.x);
          rec.control.push_back(r.u);
          sum_sq += r.u * r.u;
          rec.max_effort = std::max(rec.max_effort, std::abs(r.u));
        }
        rec.rms_effort = std::sqrt(sum_sq / static_cast<double>(winding.size()));
        period_ = period;
        ++evaluations_;
        return rec;
      }
      period_ = period;
      dt = period_ / opts.samples_per_winding;
      winding.clear();
      winding.push_back(next);
    }
  }

  /// Open-loop steady oscillation at lambda, captured as one period sampled
  /// uniformly in time.
  OpenLoopCycle capture_open_loop_cycle(double lambda, const OpenLoopOptions& opts = {}) {
    run_open_loop(lambda, opts.settle_periods * period_);
    double last_period = 0.0, last_amplitude = 0.0;
    bool settled = false;
    for (int window = 0; window < opts.max_windows && !settled; ++window) {
      const auto stats = observe_window(lambda, 3.0 * period_, opts.samples_per_period);
      if (!stats) {
        throw Error(Errc::InitializationFailed,
                    fmt::format("no sustained open-loop oscillation at {} = {}", model_.parameter_name(), lambda));
      }
      const auto [period, amplitude] = *stats;
      settled = window > 0 && std::abs(period - last_period) <= opts.settle_tolerance * period &&
                std::abs(amplitude - last_amplitude) <= opts.settle_tolerance * amplitude;
      last_period = period;
      last_amplitude = amplitude;
      period_ = period;
    }

    if (!settled && opts.require_settled) {
      throw Error(Errc::InitializationFailed,
                  fmt::format("open-loop oscillation at {} = {} did not settle", model_.parameter_name(), lambda));
    }
    OpenLoopCycle out;
    out.period = period_;
    out.converged = settled;
    const double dt = period_ / opts.samples_per_period;
    const ControllerConfig open;
    for (int j = 0; j < opts.samples_per_period; ++j) {
      out.cycle.push_back(time_, state_[0], state_[1]);
      segment(open, lambda, 0.0, time_ + dt);
    }
    const auto [lo, hi] = std::minmax_element(out.cycle.x.begin(), out.cycle.x.end());
    out.amplitude = 0.5 * (*hi - *lo);
    return out;
  }

 private:
  static void validate(const ControllerConfig& c) {
    if (!(c.k_p >= 0.0)) throw Error(Errc::ValidationError, fmt::format("k_p = {} must be non-negative", c.k_p));
    if (!(c.noise_variance >= 0.0)) throw Error(Errc::ValidationError, "noise variance must be non-negative");
    if (!(c.embedding.sigma > 0.0)) throw Error(Errc::ValidationError, "embedding scale must be positive");
  }

  static double safe_angle(const AngleEmbedding& e, double x, double z) {
    try {
      return encode_angle(e, x, z);
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }

  double draw_noise(const ControllerConfig& c) {
    if (c.noise_variance == 0.0) return 0.0;
    if (!noise_ || noise_->first != c.noise_seed) {
      noise_.emplace(c.noise_seed, std::mt19937_64(derive_seed(c.noise_seed, "measurement-noise")));
    }
    std::normal_distribution<double> gauss(0.0, std::sqrt(c.noise_variance));
    return gauss(noise_->second);
  }

  /// Integrate to t_end with the measurement noise held at w.
  void segment(const ControllerConfig& c, double lambda, double w, double t_end) {
    if (c.closed()) {
      auto f = [&](const State& s, double) { return model_.rhs(s, lambda, control_input(c, s[0] + w, s[1])); };
      integrator_.advance(f, state_, time_, t_end);
    } else {
      auto f = [&](const State& s, double) { return model_.rhs(s, lambda, 0.0); };
      integrator_.advance(f, state_, time_, t_end);
    }
  }

  /// Sample an open-loop window; returns (period, amplitude) from the last two
  /// upward crossings of the window's mid level.
  std::optional<std::pair<double, double>> observe_window(double lambda, double duration, int per_period) {
    const ControllerConfig open;
    const double dt = period_ / per_period;
    std::vector<double> t, x;
    std::vector<State> states;
    const double end = time_ + duration;
    while (time_ < end) {
      t.push_back(time_);
      x.push_back(state_[0]);
      states.push_back(state_);
      segment(open, lambda, 0.0, time_ + dt);
    }
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double amplitude = 0.5 * (*hi - *lo);
    if (!(amplitude > 1e-6)) return std::nullopt;
    const double level = 0.5 * (*hi + *lo);
    std::vector<double> crossings;
    for (std::size_t j = 1; j < x.size(); ++j) {
      if (x[j - 1] < level && x[j] >= level) {
        crossings.push_back(t[j - 1] + (level - x[j - 1]) / (x[j] - x[j - 1]) * (t[j] - t[j - 1]));
      }
    }
    if (crossings.size() < 2) return std::nullopt;
    const double period = crossings.back() - crossings[crossings.size() - 2];
    return std::pair{period, amplitude};
  }

  PlantModel model_;
  State state_;
  double time_ = 0.0;
  Integrator integrator_;
  double period_;
  std::optional<std::pair<std::uint64_t, std::mt19937_64>> noise_;
  std::uint64_t evaluations_ = 0;
};

}  // namespace cbc
