#pragma once

// Adaptive Dormand-Prince integration of planar systems. Steps are clipped
// to caller-supplied segment ends so that piecewise-constant inputs (held
// measurement noise) never straddle a step.

#include <algorithm>
#include <cmath>

#include <boost/numeric/odeint/stepper/controlled_runge_kutta.hpp>
#include <boost/numeric/odeint/stepper/runge_kutta_dopri5.hpp>
#include <fmt/format.h>

#include "cbc/error.hpp"
#include "cbc/models.hpp"

namespace cbc {

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Step sizes below this raise StiffnessFailure.
  double min_step = 1e-12;
  /// Accepted plus rejected steps allowed in one advance() call.
  long max_steps = 5'000'000;
};

class Integrator {
 public:
  explicit Integrator(IntegratorOptions opts = {}, double initial_step = 1e-3)
      : opts_(opts),
        stepper_(Controlled::error_checker_type(opts.atol, opts.rtol, 1.0, 1.0)),
        step_(initial_step) {}

  const IntegratorOptions& options() const { return opts_; }
  double step_hint() const { return step_; }
  void set_step_hint(double h) { step_ = h; }

  /// Integrate x' = f(x, t) from t to t_end in place. The step size is carried
  /// over between calls; the first derivative is always recomputed, so f may
  /// change between calls.
  template <class Rhs>
  void advance(Rhs&& f, State& x, double& t, double t_end) {
    if (!(t_end >= t)) throw Error(Errc::ValidationError, "integration end precedes start");
    auto sys = [&f](const State& s, State& d, double tt) { d = f(s, tt); };
    State dxdt;
    sys(x, dxdt, t);
    long steps = 0;
    while (t_end - t > 1e-13 * std::max(1.0, std::abs(t_end))) {
      const double remaining = t_end - t;
      double dt = std::min(step_, remaining);
      const bool clipped = dt < step_;
      bool failed = false;
      for (;;) {
        if (++steps > opts_.max_steps) {
          throw Error(Errc::StiffnessFailure, fmt::format("step budget exhausted at t = {}", t));
        }
        if (stepper_.try_step(sys, x, dxdt, t, dt) == boost::numeric::odeint::success) break;
        failed = true;
        if (dt < opts_.min_step) {
          throw Error(Errc::StiffnessFailure, fmt::format("step size {:.3g} underflow at t = {}", dt, t));
        }
      }
      if (failed || !clipped) step_ = dt;
      if (!std::isfinite(x[0]) || !std::isfinite(x[1])) {
        throw Error(Errc::NonFinite, fmt::format("non-finite state at t = {}", t));
      }
    }
    t = t_end;
  }

 private:
  using Controlled = boost::numeric::odeint::controlled_runge_kutta<boost::numeric::odeint::runge_kutta_dopri5<State>>;
  IntegratorOptions opts_;
  Controlled stepper_;
  double step_;
};

}  // namespace cbc
