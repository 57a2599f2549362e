#pragma once

// Model-aware reference computations: equilibria with Hopf detection,
// single-shooting periodic orbits with Floquet multipliers, their
// pseudo-arclength continuation, and a Fourier least-squares baseline.
// The control-based continuation pipeline never calls into this header.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "cbc/error.hpp"
#include "cbc/models.hpp"
#include "cbc/ode.hpp"
#include "cbc/plant.hpp"
#include "cbc/spline.hpp"

namespace cbc {

using Complex = std::complex<double>;

// ---------------------------------------------------------------- equilibria

struct EquilibriumPoint {
  double lambda = 0.0;
  State state{};
  std::array<Complex, 2> eigenvalues{};
  bool stable = false;

  /// Largest real part of the Jacobian spectrum.
  double leading_real() const { return std::max(eigenvalues[0].real(), eigenvalues[1].real()); }
  bool complex_pair() const { return eigenvalues[0].imag() != 0.0; }
};

struct HopfPoint {
  double lambda = 0.0;
  State state{};
  /// Real part of the critical pair after refinement.
  double real_part = 0.0;
  /// Imaginary part of the critical pair; 2 pi / frequency is the emerging period.
  double frequency = 0.0;
};

struct EquilibriumBranch {
  std::vector<EquilibriumPoint> points;
  std::vector<HopfPoint> hopf;
};

namespace detail {

inline Eigen::Matrix2d rhs_jacobian(const PlantModel& model, const State& s, double lambda) {
  Eigen::Matrix2d J;
  for (int j = 0; j < 2; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(s[j]));
    State a = s;
    State b = s;
    a[j] += h;
    b[j] -= h;
    const State fa = model.rhs(a, lambda);
    const State fb = model.rhs(b, lambda);
    J(0, j) = (fa[0] - fb[0]) / (2.0 * h);
    J(1, j) = (fa[1] - fb[1]) / (2.0 * h);
  }
  return J;
}

/// Eigenvalues of a real 2x2 matrix; a complex pair is returned with positive
/// imaginary part first.
inline std::array<Complex, 2> eigenvalues2(const Eigen::Matrix2d& J) {
  const double tr = J.trace();
  const double det = J.determinant();
  const double disc = 0.25 * tr * tr - det;
  if (disc < 0.0) {
    const double im = std::sqrt(-disc);
    return {Complex(0.5 * tr, im), Complex(0.5 * tr, -im)};
  }
  const double r = std::sqrt(disc);
  // Avoid cancellation in the smaller root.
  const double big = 0.5 * tr + std::copysign(r, tr);
  const double small = big != 0.0 ? det / big : 0.0;
  return {Complex(std::max(big, small), 0.0), Complex(std::min(big, small), 0.0)};
}

inline double norm2(const State& s) { return std::hypot(s[0], s[1]); }

}  // namespace detail

/// Rough equilibrium location for use as a Newton start.
inline State equilibrium_guess(const PlantModel& model, double lambda) {
  if (model.kind() == ModelKind::Oregonator) {
    // Positive root of x^2 - (1 - q - f) x - q (1 + f) = 0, and y = x.
    const double q = model.oregonator().q;
    const double b = 1.0 - q - lambda;
    const double x = 0.5 * (b + std::sqrt(b * b + 4.0 * q * (1.0 + lambda)));
    return {x, x};
  }
  if (!(lambda > 0.0)) {
    throw Error(Errc::NoEquilibriumFound, fmt::format("gamma_y = {} must be positive", lambda));
  }
  // On the nullclines y = gamma_x x / gamma_y; scan for the first sign change of
  // H(x, y(x)) - gamma_x x and bisect.
  const double gx = model.gene().gamma_x;
  const auto g = [&](double x) { return model.rhs({x, gx * x / lambda}, lambda)[0]; };
  double lo = 0.0;
  double glo = g(lo);
  for (double x = 1e-2; x < 1e3; x += 1e-2) {
    const double gv = g(x);
    if ((gv < 0.0) != (glo < 0.0)) {
      double hi = x;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((g(mid) < 0.0) == (glo < 0.0)) lo = mid;
        else hi = mid;
      }
      const double xs = 0.5 * (lo + hi);
      return {xs, gx * xs / lambda};
    }
    lo = x;
    glo = gv;
  }
  throw Error(Errc::NoEquilibriumFound, fmt::format("no nullcline intersection at gamma_y = {}", lambda));
}

/// Newton iteration on rhs = 0 with a finite-difference Jacobian.
inline EquilibriumPoint solve_equilibrium(const PlantModel& model, double lambda, State guess) {
  State s = guess;
  for (int it = 0; it < 60; ++it) {
    State f;
    try {
      f = model.rhs(s, lambda);
    } catch (const Error& e) {
      throw Error(Errc::NoEquilibriumFound, fmt::format("Newton left the domain at parameter {}: {}", lambda, e.what()));
    }
    if (detail::norm2(f) < 1e-13) break;
    const Eigen::Matrix2d J = detail::rhs_jacobian(model, s, lambda);
    if (!(std::abs(J.determinant()) > 0.0)) {
      throw Error(Errc::NoEquilibriumFound, fmt::format("singular Jacobian at parameter {}", lambda));
    }
    const Eigen::Vector2d d = J.partialPivLu().solve(-Eigen::Vector2d(f[0], f[1]));
    s[0] += d(0);
    s[1] += d(1);
    if (!std::isfinite(s[0]) || !std::isfinite(s[1])) break;
  }
  const bool finite = std::isfinite(s[0]) && std::isfinite(s[1]);
  if (!finite || detail::norm2(model.rhs(s, lambda)) >= 1e-10) {
    throw Error(Errc::NoEquilibriumFound, fmt::format("Newton did not converge at parameter {}", lambda));
  }
  EquilibriumPoint p;
  p.lambda = lambda;
  p.state = s;
  p.eigenvalues = detail::eigenvalues2(detail::rhs_jacobian(model, s, lambda));
  p.stable = p.leading_real() < 0.0;
  return p;
}

namespace detail {

/// Bisection on the real part of a complex pair between two bracketing points.
inline HopfPoint refine_hopf(const PlantModel& model, EquilibriumPoint a, EquilibriumPoint b) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a.lambda + b.lambda);
    const auto m = solve_equilibrium(model, mid, a.state);
    if (std::abs(m.leading_real()) < 1e-8 || std::abs(b.lambda - a.lambda) < 1e-15) {
      return {m.lambda, m.state, m.leading_real(), std::abs(m.eigenvalues[0].imag())};
    }
    if ((m.leading_real() < 0.0) == (a.leading_real() < 0.0)) a = m;
    else b = m;
  }
  const auto& best = std::abs(a.leading_real()) < std::abs(b.leading_real()) ? a : b;
  return {best.lambda, best.state, best.leading_real(), std::abs(best.eigenvalues[0].imag())};
}

}  // namespace detail

/// Natural-parameter sweep of equilibria from `from` to `to`; Hopf points are
/// flagged where a complex pair crosses the imaginary axis.
inline EquilibriumBranch equilibrium_branch(const PlantModel& model, double from, double to, double step,
                                            std::optional<State> guess = std::nullopt) {
  if (!(step > 0.0) || !std::isfinite(from) || !std::isfinite(to) || from == to) {
    throw Error(Errc::ValidationError, "equilibrium sweep needs a finite range and a positive step");
  }
  const double dir = to > from ? 1.0 : -1.0;
  const auto n = static_cast<long>(std::ceil(std::abs(to - from) / step - 1e-9));
  EquilibriumBranch out;
  State s = guess ? *guess : equilibrium_guess(model, from);
  for (long i = 0; i <= n; ++i) {
    const double lambda = i == n ? to : from + dir * static_cast<double>(i) * step;
    auto p = solve_equilibrium(model, lambda, s);
    s = p.state;
    if (!out.points.empty()) {
      const auto& prev = out.points.back();
      const bool crossed = (prev.leading_real() < 0.0) != (p.leading_real() < 0.0);
      if (crossed && prev.complex_pair() && p.complex_pair()) {
        out.hopf.push_back(detail::refine_hopf(model, prev, p));
      }
    }
    out.points.push_back(std::move(p));
  }
  return out;
}

// ------------------------------------------------------------------ shooting

struct ShootingOptions {
  IntegratorOptions integrator{1e-11, 1e-12, 1e-14, 20'000'000};
  /// Forward-difference perturbation of the anchor for the monodromy matrix.
  double monodromy_step = 1e-7;
  /// Newton stops once the residual norm is below this.
  double tolerance = 1e-10;
  /// Converged orbits must close to within this.
  double residual_bound = 1e-8;
  int max_iterations = 25;
  /// Distance of the trivial multiplier from +1 accepted as a periodic orbit.
  double trivial_tolerance = 1e-2;
  /// Grid used to measure the amplitude.
  int amplitude_samples = 4096;
};

struct ShootingOrbit {
  double lambda = 0.0;
  State anchor{};
  double period = 0.0;
  Complex trivial_multiplier{};
  Complex multiplier{};
  /// Half peak-to-peak of x over the orbit.
  double amplitude = 0.0;
  double residual = 0.0;
  bool stable = false;
  int iterations = 0;
};

namespace detail {

inline State flow(const PlantModel& model, double lambda, State x, double T, const IntegratorOptions& opts) {
  Integrator integ(opts, std::max(T * 1e-4, 1e-8));
  double t = 0.0;
  integ.advance([&](const State& s, double) { return model.rhs(s, lambda); }, x, t, T);
  return x;
}

/// Half peak-to-peak of x sampled on a uniform grid over one period.
inline double orbit_amplitude(const PlantModel& model, double lambda, State x, double T, const ShootingOptions& o) {
  Integrator integ(o.integrator, std::max(T * 1e-4, 1e-8));
  double t = 0.0;
  double lo = x[0];
  double hi = x[0];
  const auto f = [&](const State& s, double) { return model.rhs(s, lambda); };
  for (int i = 1; i <= o.amplitude_samples; ++i) {
    integ.advance(f, x, t, T * i / o.amplitude_samples);
    lo = std::min(lo, x[0]);
    hi = std::max(hi, x[0]);
  }
  return 0.5 * (hi - lo);
}

struct FlowLinearisation {
  State end{};
  Eigen::Matrix2d monodromy;
};

inline FlowLinearisation linearise_flow(const PlantModel& model, double lambda, const State& x0, double T,
                                        const ShootingOptions& o) {
  FlowLinearisation out;
  out.end = flow(model, lambda, x0, T, o.integrator);
  for (int j = 0; j < 2; ++j) {
    const double h = o.monodromy_step * std::max(1.0, std::abs(x0[j]));
    State xp = x0;
    xp[j] += h;
    const State e = flow(model, lambda, xp, T, o.integrator);
    out.monodromy(0, j) = (e[0] - out.end[0]) / h;
    out.monodromy(1, j) = (e[1] - out.end[1]) / h;
  }
  return out;
}

/// Multipliers, amplitude and stability of a converged orbit.
inline ShootingOrbit characterise_orbit(const PlantModel& model, double lambda, const State& x0, double T,
                                        const ShootingOptions& o) {
  const auto lin = linearise_flow(model, lambda, x0, T, o);
  ShootingOrbit orb;
  orb.lambda = lambda;
  orb.anchor = x0;
  orb.period = T;
  orb.residual = norm2({lin.end[0] - x0[0], lin.end[1] - x0[1]});
  const auto mu = eigenvalues2(lin.monodromy);
  const bool first_trivial = std::abs(mu[0] - 1.0) <= std::abs(mu[1] - 1.0);
  orb.trivial_multiplier = first_trivial ? mu[0] : mu[1];
  orb.multiplier = first_trivial ? mu[1] : mu[0];
  if (std::abs(orb.trivial_multiplier - 1.0) > o.trivial_tolerance) {
    throw Error(Errc::ShootingDiverged,
                fmt::format("no multiplier near +1 at parameter {} (closest {:.4g}{:+.4g}i)", lambda,
                            orb.trivial_multiplier.real(), orb.trivial_multiplier.imag()));
  }
  orb.stable = std::abs(orb.multiplier) < 1.0;
  orb.amplitude = orbit_amplitude(model, lambda, x0, T, o);
  return orb;
}

inline void check_period(double T, double lambda) {
  if (!(T >= 1e-6)) throw Error(Errc::PeriodCollapse, fmt::format("period {:.3g} at parameter {}", T, lambda));
}

}  // namespace detail

/// Newton on [flow_T(x0) - x0; <f(x_prev), x0 - x_prev>] for (x0, T), where
/// x_prev is the guess anchor.
inline ShootingOrbit shoot_periodic_orbit(const PlantModel& model, double lambda, State anchor, double period,
                                          const ShootingOptions& o = {}) {
  detail::check_period(period, lambda);
  const State prev = anchor;
  State fp;
  try {
    fp = model.rhs(prev, lambda);
  } catch (const Error& e) {
    throw Error(Errc::ShootingDiverged, e.what());
  }
  State x0 = anchor;
  double T = period;
  double res = INFINITY;
  int it = 0;
  try {
    for (; it <= o.max_iterations; ++it) {
      const auto lin = detail::linearise_flow(model, lambda, x0, T, o);
      Eigen::Vector3d F;
      F << lin.end[0] - x0[0], lin.end[1] - x0[1], fp[0] * (x0[0] - prev[0]) + fp[1] * (x0[1] - prev[1]);
      res = F.norm();
      if (res < o.tolerance || it == o.max_iterations) break;
      const State fe = model.rhs(lin.end, lambda);
      Eigen::Matrix3d J;
      J.topLeftCorner<2, 2>() = lin.monodromy - Eigen::Matrix2d::Identity();
      J(0, 2) = fe[0];
      J(1, 2) = fe[1];
      J(2, 0) = fp[0];
      J(2, 1) = fp[1];
      J(2, 2) = 0.0;
      const Eigen::Vector3d d = J.fullPivLu().solve(-F);
      if (!d.allFinite()) break;
      x0[0] += d(0);
      x0[1] += d(1);
      T += d(2);
      detail::check_period(T, lambda);
      if (d.norm() < 1e-14 * std::max(1.0, T)) {
        ++it;
        break;
      }
    }
  } catch (const Error& e) {
    if (e.code() == Errc::PeriodCollapse) throw;
    throw Error(Errc::ShootingDiverged, fmt::format("at parameter {}: {}", lambda, e.what()));
  }
  if (!(res < o.residual_bound)) {
    throw Error(Errc::ShootingDiverged,
                fmt::format("residual {:.3g} after {} iterations at parameter {}", res, it, lambda));
  }
  auto orb = detail::characterise_orbit(model, lambda, x0, T, o);
  orb.iterations = it;
  return orb;
}

/// Shoot from a simulated open-loop cycle at `lambda`.
inline ShootingOrbit shoot_from_simulation(const PlantModel& model, double lambda, State initial,
                                           const ShootingOptions& o = {}) {
  Plant plant(model, initial);
  const auto cyc = plant.capture_open_loop_cycle(lambda);
  return shoot_periodic_orbit(model, lambda, {cyc.cycle.x.front(), cyc.cycle.z.front()}, cyc.period, o);
}

enum class OracleTermination {
  None,
  AmplitudeFloor,
  HopfPassage,
  StepsizeUnderflow,
  ParameterBound,
  PointLimit,
  PeriodCollapse,
};

constexpr std::string_view to_string(OracleTermination t) {
  switch (t) {
    case OracleTermination::None: return "none";
    case OracleTermination::AmplitudeFloor: return "amplitude-floor";
    case OracleTermination::HopfPassage: return "hopf-passage";
    case OracleTermination::StepsizeUnderflow: return "stepsize-underflow";
    case OracleTermination::ParameterBound: return "parameter-bound";
    case OracleTermination::PointLimit: return "point-limit";
    case OracleTermination::PeriodCollapse: return "period-collapse";
  }
  return "?";
}

struct ShootingContinuationOptions {
  /// Steps are measured in scaled coordinates (x0, T / T_seed, lambda / parameter_scale).
  double stepsize = 0.02;
  double min_stepsize = 1e-6;
  double max_stepsize = 0.1;
  double grow = 1.3;
  double shrink = 0.5;
  /// Newton iterations per correction; fewer than `fast_iterations` lets the step grow.
  int max_iterations = 8;
  int fast_iterations = 3;
  /// Rejects a correction longer than this fraction of the step.
  double max_correction = 0.5;
  /// Initial direction of travel in the parameter.
  bool increasing = true;
  double lambda_min = -INFINITY;
  double lambda_max = INFINITY;
  /// Stop once the orbit has shrunk to this amplitude (approaching a Hopf point).
  double amplitude_floor = 5e-3;
  int max_points = 2000;
  /// Parameter scale; zero means |lambda| of the seed.
  double parameter_scale = 0.0;
  ShootingOptions shooting{};
};

struct ShootingBranch {
  std::vector<ShootingOrbit> points;
  OracleTermination termination = OracleTermination::None;
  std::string termination_detail;
};

namespace detail {

struct ArclengthFrame {
  double period_scale;
  double parameter_scale;

  Eigen::Vector4d pack(const State& x0, double T, double lambda) const {
    return {x0[0], x0[1], T / period_scale, lambda / parameter_scale};
  }
  State anchor(const Eigen::Vector4d& u) const { return {u(0), u(1)}; }
  double period(const Eigen::Vector4d& u) const { return u(2) * period_scale; }
  double lambda(const Eigen::Vector4d& u) const { return u(3) * parameter_scale; }
};

/// Rows: periodicity (2), phase relative to `prev` (1), in scaled coordinates.
inline Eigen::Matrix<double, 3, 4> shooting_jacobian(const PlantModel& model, const ArclengthFrame& fr,
                                                     const Eigen::Vector4d& u, const State& fp,
                                                     const ShootingOptions& o, Eigen::Vector3d& F,
                                                     const State& prev) {
  const State x0 = fr.anchor(u);
  const double T = fr.period(u);
  const double lambda = fr.lambda(u);
  const auto lin = linearise_flow(model, lambda, x0, T, o);
  const State fe = model.rhs(lin.end, lambda);
  const double dl = 1e-6 * fr.parameter_scale;
  const State el = flow(model, lambda + dl, x0, T, o.integrator);
  F << lin.end[0] - x0[0], lin.end[1] - x0[1], fp[0] * (x0[0] - prev[0]) + fp[1] * (x0[1] - prev[1]);
  Eigen::Matrix<double, 3, 4> J = Eigen::Matrix<double, 3, 4>::Zero();
  J.block<2, 2>(0, 0) = lin.monodromy - Eigen::Matrix2d::Identity();
  J(0, 2) = fr.period_scale * fe[0];
  J(1, 2) = fr.period_scale * fe[1];
  J(0, 3) = fr.parameter_scale * (el[0] - lin.end[0]) / dl;
  J(1, 3) = fr.parameter_scale * (el[1] - lin.end[1]) / dl;
  J(2, 0) = fp[0];
  J(2, 1) = fp[1];
  return J;
}

}  // namespace detail

/// Pseudo-arclength continuation of a periodic orbit in (x0, T, lambda) with
/// secant prediction and adaptive steps.
inline ShootingBranch continue_periodic_shooting(const PlantModel& model, const ShootingOrbit& seed,
                                                 const ShootingContinuationOptions& o = {}) {
  if (!(o.min_stepsize > 0 && o.min_stepsize <= o.stepsize && o.stepsize <= o.max_stepsize && o.grow >= 1 &&
        o.shrink > 0 && o.shrink < 1 && o.max_iterations >= 1 && o.max_points >= 1)) {
    throw Error(Errc::ValidationError, "inconsistent shooting continuation settings");
  }
  const detail::ArclengthFrame fr{seed.period,
                                  o.parameter_scale > 0 ? o.parameter_scale : std::max(std::abs(seed.lambda), 1e-12)};
  ShootingBranch out;
  out.points.push_back(seed);
  Eigen::Vector4d u = fr.pack(seed.anchor, seed.period, seed.lambda);

  // Kernel of the periodicity and phase rows at an accepted point.
  const auto kernel_tangent = [&](const ShootingOrbit& p, const Eigen::Vector4d& at) {
    Eigen::Vector3d F;
    const State fp = model.rhs(p.anchor, p.lambda);
    const auto J = detail::shooting_jacobian(model, fr, at, fp, o.shooting, F, p.anchor);
    Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(J, Eigen::ComputeFullV);
    return Eigen::Vector4d(svd.matrixV().col(3));
  };
  Eigen::Vector4d tangent = kernel_tangent(seed, u);
  if ((tangent(3) < 0.0) == o.increasing) tangent = -tangent;
  bool secant = true;

  double h = o.stepsize;
  while (static_cast<int>(out.points.size()) < o.max_points) {
    const auto& cur = out.points.back();
    const State prev = cur.anchor;
    const State fp = model.rhs(prev, cur.lambda);
    const Eigen::Vector4d pred = u + h * tangent;
    Eigen::Vector4d v = pred;
    bool ok = false;
    bool collapsed = false;
    int it = 0;
    std::string why;
    try {
      for (; it < o.max_iterations; ++it) {
        detail::check_period(fr.period(v), fr.lambda(v));
        Eigen::Vector3d F;
        const auto J3 = detail::shooting_jacobian(model, fr, v, fp, o.shooting, F, prev);
        if (F.norm() < o.shooting.tolerance) {
          ok = true;
          break;
        }
        Eigen::Matrix4d J;
        J.topRows<3>() = J3;
        J.row(3) = tangent.transpose();
        Eigen::Vector4d G;
        G << F, tangent.dot(v - pred);
        const Eigen::Vector4d d = J.fullPivLu().solve(-G);
        if (!d.allFinite()) break;
        v += d;
        if (d.norm() < 1e-13) {
          ok = F.norm() < o.shooting.residual_bound;
          ++it;
          break;
        }
      }
      if (!ok) why = "Newton did not converge";
      if (ok && (v - pred).norm() > o.max_correction * h) {
        ok = false;
        why = fmt::format("correction {:.3g} exceeds {:.3g}", (v - pred).norm(), o.max_correction * h);
      }
    } catch (const Error& e) {
      ok = false;
      collapsed = e.code() == Errc::PeriodCollapse;
      why = e.what();
    }
    std::optional<ShootingOrbit> orb;
    if (ok) {
      try {
        orb = detail::characterise_orbit(model, fr.lambda(v), fr.anchor(v), fr.period(v), o.shooting);
        orb->iterations = it;
      } catch (const Error& e) {
        why = e.what();
      }
    }
    if (!orb) {
      h *= o.shrink;
      if (h < o.min_stepsize) {
        out.termination = collapsed ? OracleTermination::PeriodCollapse : OracleTermination::StepsizeUnderflow;
        out.termination_detail =
            fmt::format("stepsize {:.3g} at parameter {} ({})", h, cur.lambda, why.empty() ? "no convergence" : why);
        return out;
      }
      // A secant can lag a sharp turn; retry along the local tangent.
      if (secant) {
        const Eigen::Vector4d k = kernel_tangent(cur, u);
        tangent = k.dot(tangent) < 0.0 ? Eigen::Vector4d(-k) : k;
        secant = false;
      }
      continue;
    }
    secant = true;
    // Continuing through a Hopf point retraces the same orbits half a period
    // out of phase: the amplitude bottoms out exactly where lambda turns.
    if (out.points.size() >= 2) {
      const auto& a = out.points[out.points.size() - 2];
      const bool amplitude_minimum = cur.amplitude < a.amplitude && orb->amplitude > cur.amplitude;
      const bool turned = (cur.lambda - a.lambda) * (orb->lambda - cur.lambda) < 0.0;
      if (amplitude_minimum && turned) {
        out.termination = OracleTermination::HopfPassage;
        out.termination_detail = fmt::format("amplitude minimum {:.3g} at parameter {}", cur.amplitude, cur.lambda);
        return out;
      }
    }
    tangent = (v - u).normalized();
    u = v;
    out.points.push_back(*orb);
    if (it <= o.fast_iterations) h = std::min(h * o.grow, o.max_stepsize);
    if (orb->amplitude < o.amplitude_floor) {
      out.termination = OracleTermination::AmplitudeFloor;
      out.termination_detail = fmt::format("amplitude {:.3g} at parameter {}", orb->amplitude, orb->lambda);
      return out;
    }
    if (orb->lambda < o.lambda_min || orb->lambda > o.lambda_max) {
      out.termination = OracleTermination::ParameterBound;
      out.termination_detail = fmt::format("parameter {} outside [{}, {}]", orb->lambda, o.lambda_min, o.lambda_max);
      return out;
    }
  }
  out.termination = OracleTermination::PointLimit;
  out.termination_detail = fmt::format("{} points", out.points.size());
  return out;
}

/// Parameter values where the branch reverses direction in lambda, located at
/// the vertex of the parabola through the three points around each reversal.
inline std::vector<double> branch_folds(const std::vector<double>& lambda, const std::vector<double>& arclength) {
  std::vector<double> folds;
  for (std::size_t i = 1; i + 1 < lambda.size(); ++i) {
    const double d0 = lambda[i] - lambda[i - 1];
    const double d1 = lambda[i + 1] - lambda[i];
    if (d0 == 0.0 || d1 == 0.0 || (d0 > 0) == (d1 > 0)) continue;
    const double s0 = arclength[i - 1], s1 = arclength[i], s2 = arclength[i + 1];
    const double l0 = lambda[i - 1], l1 = lambda[i], l2 = lambda[i + 1];
    // Divided differences of lambda(s).
    const double f01 = (l1 - l0) / (s1 - s0);
    const double f12 = (l2 - l1) / (s2 - s1);
    const double a = (f12 - f01) / (s2 - s0);
    if (a == 0.0) {
      folds.push_back(l1);
      continue;
    }
    const double b = f01 - a * (s0 + s1);
    const double sv = -b / (2.0 * a);
    folds.push_back(l0 + f01 * (sv - s0) + a * (sv - s0) * (sv - s1));
  }
  return folds;
}

/// Amplitude of the oracle branch interpolated linearly in lambda. The branch is
/// split into pieces monotone in lambda; of the pieces covering `lambda`, the
/// one closest to `near_amplitude` is used. Empty when no piece covers it.
inline std::optional<double> amplitude_at(const std::vector<ShootingOrbit>& branch, double lambda,
                                          double near_amplitude) {
  std::optional<double> best;
  for (std::size_t i = 1; i < branch.size(); ++i) {
    const double l0 = branch[i - 1].lambda;
    const double l1 = branch[i].lambda;
    if (lambda < std::min(l0, l1) || lambda > std::max(l0, l1) || l0 == l1) continue;
    const double w = (lambda - l0) / (l1 - l0);
    const double a = (1.0 - w) * branch[i - 1].amplitude + w * branch[i].amplitude;
    if (!best || std::abs(a - near_amplitude) < std::abs(*best - near_amplitude)) best = a;
  }
  return best;
}

// ------------------------------------------------------------------- Fourier

struct FourierSeries {
  double a0 = 0.0;
  std::vector<double> a;
  std::vector<double> b;
  double omega = 2.0 * std::numbers::pi;

  std::size_t harmonics() const { return a.size(); }
  std::size_t coefficient_count() const { return 2 * a.size() + 1; }

  double operator()(double t) const {
    double v = a0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double w = omega * static_cast<double>(k + 1) * t;
      v += a[k] * std::cos(w) + b[k] * std::sin(w);
    }
    return v;
  }
};

struct FourierFit {
  FourierSeries series;
  /// Residual sum of squares.
  double error = 0.0;
};

/// Least-squares truncated Fourier series with `n` harmonics over one period
/// (the unit interval by default).
inline FourierFit fourier_fit(const SampleSet& samples, std::size_t n, double period = 1.0) {
  if (samples.t.size() != samples.x.size()) {
    throw Error(Errc::ValidationError, "sample abscissae and ordinates differ in length");
  }
  if (!(period > 0.0)) throw Error(Errc::ValidationError, "period must be positive");
  const std::size_t m = 2 * n + 1;
  if (samples.size() < m) {
    throw Error(Errc::InsufficientSamples, fmt::format("{} samples for {} Fourier coefficients", samples.size(), m));
  }
  const double omega = 2.0 * std::numbers::pi / period;
  const auto rows = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd A(rows, static_cast<Eigen::Index>(m));
  for (Eigen::Index j = 0; j < rows; ++j) {
    const double t = samples.t[static_cast<std::size_t>(j)];
    A(j, 0) = 1.0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double w = omega * static_cast<double>(k) * t;
      A(j, static_cast<Eigen::Index>(2 * k - 1)) = std::cos(w);
      A(j, static_cast<Eigen::Index>(2 * k)) = std::sin(w);
    }
  }
  const Eigen::Map<const Eigen::VectorXd> X(samples.x.data(), rows);
  const Eigen::VectorXd c = detail::solve_least_squares(A, X);
  FourierFit fit;
  fit.series.omega = omega;
  fit.series.a0 = c(0);
  for (std::size_t k = 1; k <= n; ++k) {
    fit.series.a.push_back(c(static_cast<Eigen::Index>(2 * k - 1)));
    fit.series.b.push_back(c(static_cast<Eigen::Index>(2 * k)));
  }
  fit.error = (X - A * c).squaredNorm();
  return fit;
}

}  // namespace cbc
