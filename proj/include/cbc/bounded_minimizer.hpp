#pragma once

// Box-constrained limited-memory quasi-Newton minimisation with
// finite-difference gradients (projected L-BFGS with Armijo backtracking
// along the projected path).

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/Dense>

namespace cbc {

struct BoundedMinimizerOptions {
  int max_iterations = 200;
  int memory = 8;
  /// Stop when f_k - f_{k+1} <= f_tolerance * max(|f_k|, |f_{k+1}|, 1).
  double f_tolerance = 1e-10;
  /// Stop when the projected gradient infinity norm falls below this.
  double pg_tolerance = 1e-12;
  /// Forward-difference gradient step.
  double fd_step = 1e-7;
  /// Largest coordinate move of the first step (no curvature information yet).
  double initial_step = 0.05;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

template <class Objective>
MinimizeResult minimize_bounded(Objective&& objective, Eigen::VectorXd x, const Eigen::VectorXd& lower,
                                const Eigen::VectorXd& upper, const BoundedMinimizerOptions& opts = {}) {
  const Eigen::Index n = x.size();
  MinimizeResult result;
  auto eval = [&](const Eigen::VectorXd& p) {
    ++result.evaluations;
    return objective(p);
  };
  auto project = [&](Eigen::VectorXd p) { return p.cwiseMax(lower).cwiseMin(upper).eval(); };
  auto gradient = [&](const Eigen::VectorXd& p, double fp) {
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd q = p;
      double h = opts.fd_step;
      if (q(i) + h > upper(i)) h = -h;
      q(i) += h;
      g(i) = (eval(q) - fp) / h;
    }
    return g;
  };
  auto active = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& g, Eigen::Index i) {
    return (p(i) <= lower(i) && g(i) > 0.0) || (p(i) >= upper(i) && g(i) < 0.0);
  };

  x = project(std::move(x));
  double f = eval(x);
  Eigen::VectorXd g = gradient(x, f);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history;

  for (result.iterations = 0; result.iterations < opts.max_iterations; ++result.iterations) {
    const Eigen::VectorXd pg = project(x - g) - x;
    if (!std::isfinite(f) || pg.lpNorm<Eigen::Infinity>() <= opts.pg_tolerance) {
      result.converged = std::isfinite(f);
      break;
    }

    Eigen::VectorXd gf = g;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (active(x, g, i)) gf(i) = 0.0;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = gf;
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      const auto& [s, y] = history[k];
      alpha[k] = s.dot(q) / y.dot(s);
      q -= alpha[k] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      q *= s.dot(y) / y.squaredNorm();
    } else {
      const double gmax = q.lpNorm<Eigen::Infinity>();
      if (gmax > 0.0) q *= opts.initial_step / gmax;
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto& [s, y] = history[k];
      const double beta = y.dot(q) / y.dot(s);
      q += (alpha[k] - beta) * s;
    }
    Eigen::VectorXd d = -q;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (active(x, g, i)) d(i) = 0.0;
    }
    if (!(g.dot(d) < 0.0)) {
      history.clear();
      d = -gf;
      const double gmax = d.lpNorm<Eigen::Infinity>();
      if (gmax > 0.0) d *= opts.initial_step / gmax;
    }

    double step = 1.0;
    Eigen::VectorXd x_new;
    double f_new = f;
    bool decreased = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(x + step * d);
      f_new = eval(x_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(x_new - x)) {
        decreased = true;
        break;
      }
      step *= 0.5;
    }
    if (!decreased) {
      if (!history.empty()) {
        history.clear();
        continue;
      }
      result.converged = true;
      break;
    }

    const Eigen::VectorXd g_new = gradient(x_new, f_new);
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    const double change = f - f_new;
    x = std::move(x_new);
    g = g_new;
    const double previous = f;
    f = f_new;
    if (s.dot(y) > 1e-12 * y.squaredNorm() && s.dot(y) > 0.0) {
      history.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
    }
    if (change <= opts.f_tolerance * std::max({std::abs(previous), std::abs(f), 1.0})) {
      result.converged = true;
      ++result.iterations;
      break;
    }
  }
  result.x = std::move(x);
  result.f = f;
  return result;
}

}  // namespace cbc
