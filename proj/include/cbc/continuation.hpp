#pragma once

// Pseudo-arclength continuation of noninvasive angle-encoded control targets:
// the IO-map residual, secant prediction, capped Newton correction with
// finite-difference Jacobians, stepsize control and the branch loop with
// knot and polar-origin adaptation between steps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "cbc/embedding.hpp"
#include "cbc/error.hpp"
#include "cbc/knots.hpp"
#include "cbc/plant.hpp"
#include "cbc/spline.hpp"

namespace cbc {

enum class StepsizeMode { Fixed, Adaptive };
enum class ResidualNorm { L2, Max };
enum class Termination { None, AmplitudeFloor, StepsizeUnderflow, ParameterBound, Stall, PointLimit };

constexpr std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::AmplitudeFloor: return "amplitude-floor";
    case Termination::StepsizeUnderflow: return "stepsize-underflow";
    case Termination::ParameterBound: return "parameter-bound";
    case Termination::Stall: return "stall";
    case Termination::PointLimit: return "point-limit";
  }
  return "unknown";
}

struct ContinuationConfig {
  /// Open-loop start parameters. A forward run continues from the first
  /// towards and past the second; a backward run goes the other way.
  double lambda_first = 0.75;
  double lambda_second = 0.755;
  bool backward = false;

  StepsizeMode mode = StepsizeMode::Fixed;
  double stepsize = 0.1;
  double max_stepsize = 0.2;
  double min_stepsize = 1e-3;
  /// Corrected-step length over predicted-step length must lie within [1/r, r].
  double acceptance_ratio = 1.2;
  double grow = 1.5;
  double shrink = 0.5;

  int newton_cap = 3;
  double fd_step = 1e-2;
  double tolerance = 5e-3;
  ResidualNorm norm = ResidualNorm::L2;
  /// Keep corrections that reach the Newton cap unconverged, flagged as capped.
  /// Otherwise they count as failed corrections.
  bool accept_capped = true;
  /// Weight of the parameter coordinate in the joint (coefficients, parameter) norm.
  double parameter_weight = 1.0;

  double amplitude_floor = 0.05;
  double lambda_min = -std::numeric_limits<double>::infinity();
  double lambda_max = std::numeric_limits<double>::infinity();
  int max_points = 400;
  /// Consecutive failed corrections tolerated in fixed-stepsize mode.
  int max_consecutive_failures = 3;
  /// Keep an identity tag for every IO-map evaluation.
  bool record_evaluations = false;

  void validate() const {
    const bool ok = min_stepsize > 0 && min_stepsize < stepsize && stepsize <= max_stepsize && tolerance > 0 &&
                    fd_step > 0 && newton_cap >= 1 && acceptance_ratio >= 1 && grow >= 1 && shrink > 0 &&
                    shrink < 1 && parameter_weight > 0 && lambda_first != lambda_second && amplitude_floor >= 0 &&
                    max_points >= 2 && max_consecutive_failures >= 1;
    if (!ok) throw Error(Errc::ValidationError, "inconsistent continuation settings");
  }
};

/// Controller and measurement settings held fixed over a run.
struct ControllerSettings {
  double k_p = 0.0;
  OriginHeuristic heuristic = OriginHeuristic::Middle;
  std::optional<std::pair<double, double>> manual_origin;
  double noise_variance = 0.0;
  std::uint64_t noise_seed = 0;
  SteadyStateOptions steady;
};

struct ContinuationPoint {
  double lambda = 0.0;
  /// Target coefficients on `knots`.
  Eigen::VectorXd target;
  KnotVector knots{std::vector<double>{0.25, 0.5, 0.75}};
  AngleEmbedding embedding;
  SteadyCycleRecord record;
  double residual_norm = 0.0;
  double amplitude = 0.0;
  double rms_effort = 0.0;
  double stepsize = 0.0;
  double knot_error = 0.0;
  int newton_iterations = 0;
  bool capped = false;
  bool initial = false;
  std::optional<bool> stable;

  SplineCurve target_curve() const { return SplineCurve(PeriodicBasis(knots), target); }
};

/// Identity of one IO-map evaluation, for basis-consistency checks.
struct IoEvaluation {
  int step = 0;
  std::uint64_t basis_fingerprint = 0;
  AngleEmbedding embedding;
};

struct Branch {
  std::vector<ContinuationPoint> points;
  bool backward = false;
  /// Stepsize used by every attempted step, accepted or not.
  std::vector<double> stepsize_history;
  Termination termination = Termination::None;
  std::string termination_detail;
  int rejected_steps = 0;
  int failed_corrections = 0;
  std::vector<IoEvaluation> evaluations;
};

struct IoResult {
  Eigen::VectorXd residual;
  SteadyCycleRecord record;
};

/// One IO-map evaluation: run the plant to steady state under target
/// (basis, beta_star) at lambda and return beta_star minus the response fit.
inline IoResult io_residual(const Eigen::VectorXd& beta_star, double lambda, const PeriodicBasis& basis,
                            const AngleEmbedding& embedding, Plant& plant, const ControllerSettings& settings) {
  ControllerConfig c;
  c.k_p = settings.k_p;
  c.target = SplineCurve(basis, beta_star);
  c.embedding = embedding;
  c.noise_variance = settings.noise_variance;
  c.noise_seed = settings.noise_seed;
  IoResult out;
  out.record = plant.run_to_steady_state(c, lambda, basis, settings.steady);
  out.residual = beta_star - out.record.coefficients;
  if (!out.residual.allFinite()) throw Error(Errc::NonFinite, "non-finite IO-map residual");
  return out;
}

inline double residual_norm(const Eigen::VectorXd& r, ResidualNorm norm) {
  return norm == ResidualNorm::L2 ? r.norm() : r.lpNorm<Eigen::Infinity>();
}

/// Joint coordinates (beta*, w * lambda).
inline Eigen::VectorXd joint(const Eigen::VectorXd& beta, double lambda, double parameter_weight = 1.0) {
  Eigen::VectorXd z(beta.size() + 1);
  z << beta, parameter_weight * lambda;
  return z;
}

struct Prediction {
  Eigen::VectorXd beta;
  double lambda = 0.0;
  /// Unit secant direction in joint coordinates.
  Eigen::VectorXd direction;
};

/// Secant predictor; both points must be expressed on the same basis.
inline Prediction secant_predict(const ContinuationPoint& previous, const ContinuationPoint& current, double h,
                                 double parameter_weight = 1.0) {
  if (previous.target.size() != current.target.size()) {
    throw Error(Errc::ValidationError, "secant points carry different coefficient counts");
  }
  const Eigen::VectorXd zp = joint(previous.target, previous.lambda, parameter_weight);
  const Eigen::VectorXd zc = joint(current.target, current.lambda, parameter_weight);
  const Eigen::VectorXd d = zc - zp;
  const double len = d.norm();
  if (len < 1e-12) throw Error(Errc::DegenerateSecant, fmt::format("secant length {:.3g}", len));
  Prediction p;
  p.direction = d / len;
  const Eigen::VectorXd z = zc + h * p.direction;
  const auto n = current.target.size();
  p.beta = z.head(n);
  p.lambda = z(n) / parameter_weight;
  return p;
}

struct Correction {
  Eigen::VectorXd beta;
  double lambda = 0.0;
  IoResult result;
  double residual_norm = 0.0;
  int iterations = 0;
  bool capped = false;
};

namespace detail {

inline Eigen::VectorXd solve_checked(const Eigen::MatrixXd& J, const Eigen::VectorXd& rhs) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
  const auto& R = qr.matrixQR();
  const double top = std::abs(R(0, 0));
  const double bottom = std::abs(R(R.rows() - 1, R.cols() - 1));
  if (!(bottom > 0.0) || top / bottom > 1e12) {
    throw Error(Errc::SingularJacobian, fmt::format("Jacobian condition estimate {:.3g}", bottom > 0 ? top / bottom : 0.0));
  }
  return qr.solve(rhs);
}

}  // namespace detail

/// Evaluation hook: called before every IO-map evaluation with the basis and
/// embedding in force.
using EvaluationHook = std::function<void(const PeriodicBasis&, const AngleEmbedding&)>;

/// Newton correction of the extended system
///   [ io_residual(beta*, lambda) ; <(beta*, lambda) - prediction, direction> ] = 0
/// with forward-difference Jacobians (one plant run per column). Converges
/// when the step or the IO residual norm drops below the tolerance; reaching
/// the iteration cap first returns the last iterate flagged as capped.
inline Correction newton_correct(const Prediction& prediction, const ContinuationConfig& config,
                                 const PeriodicBasis& basis, const AngleEmbedding& embedding, Plant& plant,
                                 const ControllerSettings& settings, const EvaluationHook& hook = {}) {
  const auto n = prediction.beta.size();
  const double w = config.parameter_weight;
  const Eigen::VectorXd z_pred = joint(prediction.beta, prediction.lambda, w);
  auto evaluate = [&](const Eigen::VectorXd& z) {
    if (hook) hook(basis, embedding);
    try {
      return io_residual(z.head(n), z(n) / w, basis, embedding, plant, settings);
    } catch (const Error& e) {
      if (e.code() == Errc::StalledAtEquilibrium || e.code() == Errc::NonFinite || e.code() == Errc::PoleProximity ||
          e.code() == Errc::StiffnessFailure || e.code() == Errc::OriginCoincidence) {
        throw Error(Errc::CorrectionFailed, e.what());
      }
      throw;
    }
  };
  auto extended = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& r) {
    Eigen::VectorXd F(n + 1);
    F << r, (z - z_pred).dot(prediction.direction);
    return F;
  };

  Eigen::VectorXd z = z_pred;
  Correction out;
  out.result = evaluate(z);
  out.residual_norm = residual_norm(out.result.residual, config.norm);
  bool converged = out.residual_norm < config.tolerance;
  while (!converged && out.iterations < config.newton_cap) {
    const Eigen::VectorXd F = extended(z, out.result.residual);
    Eigen::MatrixXd J(n + 1, n + 1);
    for (Eigen::Index j = 0; j <= n; ++j) {
      Eigen::VectorXd zj = z;
      zj(j) += config.fd_step;
      const auto rj = evaluate(zj);
      J.col(j) = (extended(zj, rj.residual) - F) / config.fd_step;
    }
    const Eigen::VectorXd step = detail::solve_checked(J, -F);
    z += step;
    ++out.iterations;
    out.result = evaluate(z);
    out.residual_norm = residual_norm(out.result.residual, config.norm);
    converged = out.residual_norm < config.tolerance || step.norm() < config.tolerance;
  }
  out.capped = !converged;
  out.beta = z.head(n);
  out.lambda = z(n) / w;
  return out;
}

struct StepDecision {
  bool accept = false;
  double next_stepsize = 0.0;
  bool underflow = false;
};

/// Ratio test on the corrected step length against the predicted one.
inline StepDecision adapt_stepsize(double corrected_distance, double h, const ContinuationConfig& config,
                                   double h_max) {
  StepDecision d;
  const double r = corrected_distance / h;
  if (h > 0.0 && r > 0.0 && std::max(r, 1.0 / r) <= config.acceptance_ratio) {
    d.accept = true;
    d.next_stepsize = std::min(config.grow * h, h_max);
  } else {
    d.next_stepsize = config.shrink * h;
    d.underflow = d.next_stepsize < config.min_stepsize;
  }
  return d;
}

/// Re-encode a point's stored response with `embedding` and refit it on `knots`.
inline ContinuationPoint rediscretise(const ContinuationPoint& p, const KnotVector& knots,
                                      const AngleEmbedding& embedding) {
  ContinuationPoint q = p;
  q.knots = knots;
  q.embedding = embedding;
  q.target = fit_least_squares(PeriodicBasis(knots), encode_pointwise(embedding, p.record.observed)).curve.coefficients();
  return q;
}

using LogSink = std::function<void(const std::string&)>;

namespace detail {

/// Open-loop record standing in for a controlled run at an initial point.
inline SteadyCycleRecord open_loop_record(const OpenLoopCycle& cycle, const AngleEmbedding& e,
                                          const PeriodicBasis& basis) {
  SteadyCycleRecord r;
  r.observed = cycle.cycle;
  r.true_x = cycle.cycle.x;
  r.control.assign(cycle.cycle.size(), 0.0);
  r.encoded = encode_pointwise(e, cycle.cycle);
  const auto fit = fit_least_squares(basis, r.encoded);
  r.coefficients = fit.curve.coefficients();
  r.fit_error = fit.error;
  r.period = cycle.period;
  r.windings = 1;
  r.discrepancy = 0.0;
  r.converged = cycle.converged;
  return r;
}

}  // namespace detail

/// Full continuation run: open-loop initialisation at the two start
/// parameters, then predict / correct / adapt until a termination condition.
inline Branch run_branch(const ContinuationConfig& config, Plant& plant, const KnotOptimizationConfig& knot_config,
                         const ControllerSettings& settings, const LogSink& log = {}) {
  config.validate();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  Branch branch;
  branch.backward = config.backward;

  // Initialisation from two open-loop oscillations.
  OpenLoopCycle c_first, c_second;
  try {
    c_first = plant.capture_open_loop_cycle(config.lambda_first);
    c_second = plant.capture_open_loop_cycle(config.lambda_second);
  } catch (const Error& e) {
    throw Error(Errc::InitializationFailed, e.what());
  }
  AngleEmbedding embedding = compute_embedding(c_first.cycle, settings.heuristic, settings.manual_origin);
  const KnotFit initial_fit = optimize_knots(knot_config, encode_pointwise(embedding, c_first.cycle));
  KnotVector knots = initial_fit.knots;
  double accepted_knot_error = initial_fit.error;
  say(fmt::format("init: {} knots fitted, error {:.3e}, origin ({:.5g}, {:.5g}), sigma {:.5g}",
                  knots.interior_count(), initial_fit.error, embedding.mu_x, embedding.mu_z, embedding.sigma));

  auto make_initial = [&](const OpenLoopCycle& cyc, double lambda) {
    const PeriodicBasis basis(knots);
    ContinuationPoint p;
    p.lambda = lambda;
    p.knots = knots;
    p.embedding = embedding;
    p.record = detail::open_loop_record(cyc, embedding, basis);
    p.target = p.record.coefficients;
    p.amplitude = curve_amplitude(SplineCurve(basis, p.target));
    p.knot_error = initial_fit.error;
    p.initial = true;
    return p;
  };
  ContinuationPoint first = make_initial(c_first, config.lambda_first);
  ContinuationPoint second = make_initial(c_second, config.lambda_second);
  if (config.backward) std::swap(first, second);
  branch.points.push_back(first);
  branch.points.push_back(second);
  State accepted_state = plant.state();
  double accepted_period = plant.period_estimate();

  const double h_max = config.max_stepsize;
  double h = config.stepsize;
  int step_id = 0;
  int consecutive_failures = 0;

  auto finish = [&](Termination t, std::string detail) {
    branch.termination = t;
    branch.termination_detail = std::move(detail);
    say(fmt::format("terminated: {} ({})", to_string(t), branch.termination_detail));
  };

  while (true) {
    const ContinuationPoint& current = branch.points.back();
    const ContinuationPoint& previous = branch.points[branch.points.size() - 2];

    // Adapt the discretisation and the polar origin to the last accepted solution.
    AngleEmbedding next_embedding = embedding;
    if (settings.heuristic != OriginHeuristic::Manual) {
      next_embedding = compute_embedding(current.record.observed, settings.heuristic, settings.manual_origin);
    }
    const SampleSet reference = encode_pointwise(next_embedding, current.record.observed);
    KnotFit adapted = adapt_knots(knots, reference, knot_config, accepted_knot_error);
    embedding = next_embedding;
    knots = adapted.knots;
    const PeriodicBasis basis(knots);
    const ContinuationPoint prev_r = rediscretise(previous, knots, embedding);
    const ContinuationPoint curr_r = rediscretise(current, knots, embedding);

    ++step_id;
    branch.stepsize_history.push_back(h);
    Prediction prediction;
    try {
      prediction = secant_predict(prev_r, curr_r, h, config.parameter_weight);
    } catch (const Error& e) {
      finish(Termination::Stall, e.what());
      return branch;
    }

    EvaluationHook hook;
    if (config.record_evaluations) {
      hook = [&](const PeriodicBasis& b, const AngleEmbedding& e) {
        branch.evaluations.push_back({step_id, b.fingerprint(), e});
      };
    }

    std::optional<Correction> corr;
    std::string failure;
    try {
      corr = newton_correct(prediction, config, basis, embedding, plant, settings, hook);
    } catch (const Error& e) {
      if (e.code() != Errc::CorrectionFailed && e.code() != Errc::SingularJacobian) throw;
      failure = e.what();
    }
    if (corr && corr->capped && !config.accept_capped) {
      failure = fmt::format("Newton cap reached with residual {:.3e}", corr->residual_norm);
      corr.reset();
    }

    if (!corr) {
      ++branch.failed_corrections;
      ++consecutive_failures;
      plant.set_state(accepted_state);
      plant.set_period_estimate(accepted_period);
      say(fmt::format("step {}: correction failed at h = {:.4g}: {}", step_id, h, failure));
      if (config.mode == StepsizeMode::Adaptive) {
        ++branch.rejected_steps;
        h *= config.shrink;
        if (h < config.min_stepsize) {
          finish(Termination::StepsizeUnderflow, fmt::format("stepsize {:.3g} after failed correction", h));
          return branch;
        }
      } else if (consecutive_failures >= config.max_consecutive_failures) {
        finish(Termination::Stall, fmt::format("{} consecutive failed corrections: {}", consecutive_failures, failure));
        return branch;
      }
      continue;
    }

    const double distance = (joint(corr->beta, corr->lambda, config.parameter_weight) -
                             joint(curr_r.target, curr_r.lambda, config.parameter_weight))
                                .norm();
    double h_next = h;
    if (config.mode == StepsizeMode::Adaptive) {
      const StepDecision d = adapt_stepsize(distance, h, config, h_max);
      h_next = d.next_stepsize;
      if (!d.accept) {
        ++branch.rejected_steps;
        say(fmt::format("step {}: rejected, distance {:.4g} for h = {:.4g}", step_id, distance, h));
        h = d.next_stepsize;
        if (d.underflow) {
          finish(Termination::StepsizeUnderflow, fmt::format("stepsize {:.3g} below {:.3g}", h, config.min_stepsize));
          return branch;
        }
        continue;
      }
    }
    consecutive_failures = 0;

    ContinuationPoint p;
    p.lambda = corr->lambda;
    p.target = corr->beta;
    p.knots = knots;
    p.embedding = embedding;
    p.record = std::move(corr->result.record);
    p.residual_norm = corr->residual_norm;
    p.amplitude = curve_amplitude(SplineCurve(basis, p.target));
    p.rms_effort = p.record.rms_effort;
    p.stepsize = h;
    p.knot_error = adapted.error;
    p.newton_iterations = corr->iterations;
    p.capped = corr->capped;
    accepted_knot_error = adapted.error;
    accepted_state = plant.state();
    accepted_period = plant.period_estimate();
    say(fmt::format("point {}: {} = {:.6f}, amplitude {:.5f}, residual {:.3e}, effort {:.3e}, iterations {}{}, h = {:.4g}",
                    branch.points.size(), plant.model().parameter_name(), p.lambda, p.amplitude, p.residual_norm,
                    p.rms_effort, p.newton_iterations, p.capped ? " (capped)" : "", h));
    branch.points.push_back(std::move(p));

    h = h_next;

    const ContinuationPoint& last = branch.points.back();
    if (last.amplitude < config.amplitude_floor) {
      finish(Termination::AmplitudeFloor, fmt::format("amplitude {:.4g} < {:.4g}", last.amplitude, config.amplitude_floor));
      return branch;
    }
    if (last.lambda < config.lambda_min || last.lambda > config.lambda_max) {
      finish(Termination::ParameterBound, fmt::format("parameter {:.6g} outside [{:.6g}, {:.6g}]", last.lambda,
                                                      config.lambda_min, config.lambda_max));
      return branch;
    }
    if (static_cast<int>(branch.points.size()) >= config.max_points) {
      finish(Termination::PointLimit, fmt::format("{} points", branch.points.size()));
      return branch;
    }
  }
}

}  // namespace cbc
