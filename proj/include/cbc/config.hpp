#pragma once

// Experiment configuration: strict TOML with model- and direction-dependent
// defaults. Unknown keys are fatal.
//
//   model = "gene" | "oregonator"          (default gene)
//   direction = "forward" | "backward"      (default forward)
//   seed = 0
//   output = "out"
//   [gene] tau_y, alpha, gamma_x, sigma
//   [oregonator] epsilon, q
//   [plant] initial_state = [x, y], rtol, atol
//   [controller] k_p, noise_variance, origin = "max-min", manual_origin = [x, z]
//   [discretisation] coefficients, restarts, max_iterations, refit_threshold, always_multistart,
//                    min_knot_spacing
//   [steady_state] tolerance, max_windings, min_windings, samples_per_winding, stall_periods
//   [continuation] start = [a, b], mode, stepsize, max_stepsize, min_stepsize,
//                  acceptance_ratio, grow, shrink, newton_cap, fd_step, tolerance,
//                  norm, parameter_weight, accept_capped, amplitude_floor, lambda_min, lambda_max,
//                  max_points, max_consecutive_failures
//   [oracle] seed_parameter, lambda_min, lambda_max, stepsize, max_stepsize, amplitude_floor
//   [noise_compare] parameter, variance, seeds, coefficients = [7, ...]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include "cbc/continuation.hpp"
#include "cbc/embedding.hpp"
#include "cbc/error.hpp"
#include "cbc/knots.hpp"
#include "cbc/models.hpp"
#include "cbc/oracle.hpp"
#include "cbc/random.hpp"

namespace cbc {

struct OracleSettings {
  double seed_parameter = 0.03;
  double lambda_min = 0.005;
  double lambda_max = 0.06;
  double stepsize = 0.02;
  double max_stepsize = 0.02;
  double amplitude_floor = 5e-3;
};

struct NoiseCompareSettings {
  double parameter = 1.0;
  double variance = 0.1;
  int seeds = 20;
  std::vector<int> coefficients{7};
};

struct ExperimentConfig {
  PlantModel model = PlantModel::defaults(ModelKind::Gene);
  bool backward = false;
  std::uint64_t seed = 0;
  std::string output = "out";
  State initial_state{0.5, 1.5};
  IntegratorOptions integrator;
  ControllerSettings controller;
  KnotOptimizationConfig knots;
  ContinuationConfig continuation;
  OracleSettings oracle;
  NoiseCompareSettings noise_compare;

  std::size_t coefficients() const { return knots.n_interior + 1; }
};

/// Splits the top-level seed between its consumers.
inline void apply_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.knots.seed = derive_seed(seed, "knot-restarts");
  c.controller.noise_seed = derive_seed(seed, "controller-noise");
}

/// Settings used where a config leaves them unset.
inline ExperimentConfig default_config(ModelKind kind, bool backward) {
  ExperimentConfig c;
  c.model = PlantModel::defaults(kind);
  c.backward = backward;
  auto& cc = c.continuation;
  cc.backward = backward;
  cc.lambda_min = 0.0;
  if (kind == ModelKind::Gene) {
    c.initial_state = {0.5, 1.5};
    c.controller.k_p = 0.1;
    c.controller.heuristic = backward ? OriginHeuristic::MinMax : OriginHeuristic::MaxMin;
    c.knots.n_interior = 9;
    cc.lambda_first = 0.03;
    cc.lambda_second = 0.0301;
    cc.mode = StepsizeMode::Adaptive;
    cc.stepsize = 0.1;
    cc.max_stepsize = backward ? 0.1 : 0.2;
    cc.fd_step = 5e-3;
    cc.parameter_weight = 100.0;
    // Capped corrections near the fold land off the branch and derail the secant.
    cc.accept_capped = false;
    c.oracle = {0.03, 0.005, 0.06, 0.02, 0.02, 5e-3};
  } else {
    c.initial_state = {0.2, 0.2};
    c.controller.k_p = 4.0;
    c.controller.heuristic = backward ? OriginHeuristic::MaxMax : OriginHeuristic::Middle;
    c.knots.n_interior = 6;
    // Backward runs need separated knots to round the fold; forward runs stall near the Hopf point with them.
    c.knots.min_spacing = backward ? 0.02 : 0.0;
    cc.lambda_first = 0.75;
    cc.lambda_second = 0.755;
    cc.mode = StepsizeMode::Fixed;
    cc.stepsize = backward ? 0.05 : 0.1;
    cc.max_stepsize = cc.stepsize;
    cc.fd_step = 1e-2;
    cc.parameter_weight = 1.0;
    c.oracle = {1.0, 0.3, 3.0, 0.02, 0.02, 5e-3};
  }
  cc.min_stepsize = 1e-3;
  apply_seed(c, 0);
  return c;
}

namespace detail {

inline Error config_error(Errc code, const toml::source_region& where, std::string_view key, std::string_view what) {
  if (where.begin.line > 0) {
    return Error(code, fmt::format("line {}: key '{}': {}", where.begin.line, key, what));
  }
  return Error(code, fmt::format("key '{}': {}", key, what));
}

/// Typed access to one TOML table that remembers which keys were read.
class TableReader {
 public:
  TableReader(const toml::table& table, std::string path) : table_(&table), path_(std::move(path)) {}

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : fmt::format("{}.{}", path_, key);
  }

  const toml::node* node(std::string_view key) {
    const toml::node* n = table_->get(key);
    if (n) seen_.insert(std::string(key));
    return n;
  }

  void read(std::string_view key, double& out) {
    if (const auto* n = node(key)) {
      if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) out = *v;
      else throw config_error(Errc::ParseError, n->source(), key_path(key), "expected a number");
    }
  }

  void read(std::string_view key, int& out) {
    if (const auto* n = node(key)) {
      const auto v = n->as_integer();
      if (!v || v->get() < std::numeric_limits<int>::min() || v->get() > std::numeric_limits<int>::max()) {
        throw config_error(Errc::ParseError, n->source(), key_path(key), "expected an integer");
      }
      out = static_cast<int>(v->get());
    }
  }

  void read(std::string_view key, std::uint64_t& out) {
    if (const auto* n = node(key)) {
      const auto v = n->as_integer();
      if (!v || v->get() < 0) throw config_error(Errc::ParseError, n->source(), key_path(key), "expected a non-negative integer");
      out = static_cast<std::uint64_t>(v->get());
    }
  }

  void read(std::string_view key, bool& out) {
    if (const auto* n = node(key)) {
      const auto v = n->as_boolean();
      if (!v) throw config_error(Errc::ParseError, n->source(), key_path(key), "expected true or false");
      out = v->get();
    }
  }

  void read(std::string_view key, std::string& out) {
    if (const auto* n = node(key)) {
      const auto v = n->as_string();
      if (!v) throw config_error(Errc::ParseError, n->source(), key_path(key), "expected a string");
      out = v->get();
    }
  }

  /// Numeric array of exactly `size` entries (any length when size is 0).
  std::optional<std::vector<double>> numbers(std::string_view key, std::size_t size) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    const auto bad = [&] {
      return config_error(Errc::ParseError, n->source(), key_path(key),
                          size ? fmt::format("expected an array of {} numbers", size) : "expected an array of numbers");
    };
    if (!arr || (size && arr->size() != size)) throw bad();
    std::vector<double> out;
    for (const auto& e : *arr) {
      const auto v = e.value<double>();
      if (!v || !(e.is_floating_point() || e.is_integer())) throw bad();
      out.push_back(*v);
    }
    return out;
  }

  std::optional<TableReader> table(std::string_view key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    const auto* t = n->as_table();
    if (!t) throw config_error(Errc::ParseError, n->source(), key_path(key), "expected a table");
    return TableReader(*t, key_path(key));
  }

  /// Rejects every key that was never read.
  void finish() const {
    for (const auto& [k, v] : *table_) {
      if (!seen_.contains(std::string(k.str()))) {
        throw config_error(Errc::ParseError, v.source(), key_path(k.str()), "unknown key");
      }
    }
  }

 private:
  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum, class Parse>
Enum read_enum(TableReader& r, std::string_view key, Enum fallback, Parse parse, std::string_view choices) {
  std::string s;
  const auto* n = r.node(key);
  if (!n) return fallback;
  if (const auto v = n->as_string()) s = v->get();
  const auto parsed = parse(s);
  if (!parsed) {
    throw config_error(Errc::ParseError, n->source(), r.key_path(key), fmt::format("expected one of {}", choices));
  }
  return *parsed;
}

inline std::optional<bool> parse_direction(std::string_view s) {
  if (s == "forward") return false;
  if (s == "backward") return true;
  return std::nullopt;
}

inline std::optional<StepsizeMode> parse_mode(std::string_view s) {
  if (s == "fixed") return StepsizeMode::Fixed;
  if (s == "adaptive") return StepsizeMode::Adaptive;
  return std::nullopt;
}

inline std::optional<ResidualNorm> parse_norm(std::string_view s) {
  if (s == "l2") return ResidualNorm::L2;
  if (s == "max") return ResidualNorm::Max;
  return std::nullopt;
}

inline void require(bool ok, std::string_view what) {
  if (!ok) throw Error(Errc::ValidationError, std::string(what));
}

}  // namespace detail

/// Checks every invariant of a config; raises ValidationError naming the first violated one.
inline void validate_config(const ExperimentConfig& c) {
  using detail::require;
  require(c.controller.k_p >= 0.0 && std::isfinite(c.controller.k_p), "controller.k_p must be non-negative");
  require(c.controller.noise_variance >= 0.0, "controller.noise_variance must be non-negative");
  require(c.controller.heuristic != OriginHeuristic::Manual || c.controller.manual_origin.has_value(),
          "controller.origin = \"manual\" needs controller.manual_origin");
  require(c.knots.n_interior >= 3, "discretisation.coefficients must be at least 4");
  require(c.knots.restarts >= 1, "discretisation.restarts must be positive");
  require(c.knots.max_iterations >= 1, "discretisation.max_iterations must be positive");
  require(c.knots.refit_threshold >= 1.0, "discretisation.refit_threshold must be at least 1");
  require(c.knots.min_spacing >= 0.0 && c.knots.min_spacing * static_cast<double>(c.knots.n_interior) < 1.0,
          "discretisation.min_knot_spacing must be non-negative and leave room for every knot");
  const auto& s = c.controller.steady;
  require(s.coefficient_tolerance > 0.0, "steady_state.tolerance must be positive");
  require(s.min_windings >= 1 && s.max_windings >= s.min_windings,
          "steady_state.max_windings must be at least steady_state.min_windings >= 1");
  require(s.samples_per_winding >= 16, "steady_state.samples_per_winding must be at least 16");
  require(s.stall_periods > 1.0, "steady_state.stall_periods must exceed 1");
  require(c.integrator.rtol > 0.0 && c.integrator.atol > 0.0, "plant tolerances must be positive");
  require(!c.output.empty(), "output must name a directory");
  const auto& o = c.oracle;
  require(o.lambda_min < o.lambda_max, "oracle.lambda_min must be below oracle.lambda_max");
  require(o.stepsize > 0.0 && o.stepsize <= o.max_stepsize, "oracle stepsizes must satisfy 0 < stepsize <= max_stepsize");
  require(o.amplitude_floor >= 0.0, "oracle.amplitude_floor must be non-negative");
  const auto& nc = c.noise_compare;
  require(nc.variance >= 0.0, "noise_compare.variance must be non-negative");
  require(nc.seeds >= 1, "noise_compare.seeds must be positive");
  require(!nc.coefficients.empty(), "noise_compare.coefficients must not be empty");
  for (int n : nc.coefficients) require(n >= 3 && n % 2 == 1, "noise_compare.coefficients must be odd and at least 3");
  const auto& cc = c.continuation;
  require(cc.min_stepsize > 0.0 && cc.min_stepsize < cc.stepsize && cc.stepsize <= cc.max_stepsize,
          "continuation stepsizes must satisfy 0 < min_stepsize < stepsize <= max_stepsize");
  require(cc.tolerance > 0.0 && cc.fd_step > 0.0, "continuation.tolerance and continuation.fd_step must be positive");
  require(cc.lambda_first != cc.lambda_second, "continuation.start must name two distinct parameters");
  require(cc.lambda_min < cc.lambda_max, "continuation.lambda_min must be below continuation.lambda_max");
  cc.validate();
}

/// Parses TOML text; `source` names the document in diagnostics.
inline ExperimentConfig parse_config_text(std::string_view text, std::string_view source = "config") {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw Error(Errc::ParseError,
                fmt::format("line {}: {}", e.source().begin.line, e.description()));
  }
  detail::TableReader top(root, "");
  const ModelKind kind = detail::read_enum(top, "model", ModelKind::Gene, parse_model, "\"gene\", \"oregonator\"");
  const bool backward =
      detail::read_enum(top, "direction", false, detail::parse_direction, "\"forward\", \"backward\"");
  ExperimentConfig c = default_config(kind, backward);
  top.read("seed", c.seed);
  top.read("output", c.output);

  if (kind == ModelKind::Gene) {
    GeneParams p = c.model.gene();
    if (auto t = top.table("gene")) {
      t->read("tau_y", p.tau_y);
      t->read("alpha", p.alpha);
      t->read("gamma_x", p.gamma_x);
      t->read("sigma", p.sigma_gene);
      t->finish();
    }
    detail::require(p.tau_y > 0 && p.alpha > 0 && p.gamma_x > 0 && p.sigma_gene > 0,
                    "gene parameters must be positive");
    c.model = PlantModel(p);
  } else {
    OregonatorParams p = c.model.oregonator();
    if (auto t = top.table("oregonator")) {
      t->read("epsilon", p.epsilon);
      t->read("q", p.q);
      t->finish();
    }
    detail::require(p.epsilon > 0 && p.q > 0, "oregonator parameters must be positive");
    c.model = PlantModel(p);
  }

  if (auto t = top.table("plant")) {
    if (auto v = t->numbers("initial_state", 2)) c.initial_state = {(*v)[0], (*v)[1]};
    t->read("rtol", c.integrator.rtol);
    t->read("atol", c.integrator.atol);
    t->finish();
  }

  if (auto t = top.table("controller")) {
    t->read("k_p", c.controller.k_p);
    t->read("noise_variance", c.controller.noise_variance);
    c.controller.heuristic = detail::read_enum(*t, "origin", c.controller.heuristic, parse_heuristic,
                                               "\"mean\", \"min-max\", \"max-min\", \"max-max\", \"min-min\", "
                                               "\"middle\", \"manual\"");
    if (auto v = t->numbers("manual_origin", 2)) c.controller.manual_origin = std::pair{(*v)[0], (*v)[1]};
    t->finish();
  }

  if (auto t = top.table("discretisation")) {
    int n = static_cast<int>(c.knots.n_interior) + 1;
    t->read("coefficients", n);
    detail::require(n >= 4, "discretisation.coefficients must be at least 4");
    c.knots.n_interior = static_cast<std::size_t>(n - 1);
    t->read("restarts", c.knots.restarts);
    t->read("max_iterations", c.knots.max_iterations);
    t->read("refit_threshold", c.knots.refit_threshold);
    t->read("always_multistart", c.knots.always_multistart);
    t->read("min_knot_spacing", c.knots.min_spacing);
    t->finish();
  }

  if (auto t = top.table("steady_state")) {
    auto& s = c.controller.steady;
    t->read("tolerance", s.coefficient_tolerance);
    t->read("max_windings", s.max_windings);
    t->read("min_windings", s.min_windings);
    t->read("samples_per_winding", s.samples_per_winding);
    t->read("stall_periods", s.stall_periods);
    s.min_samples_per_winding = s.samples_per_winding / 2;
    t->finish();
  }

  if (auto t = top.table("continuation")) {
    auto& cc = c.continuation;
    if (auto v = t->numbers("start", 2)) {
      cc.lambda_first = (*v)[0];
      cc.lambda_second = (*v)[1];
    }
    cc.mode = detail::read_enum(*t, "mode", cc.mode, detail::parse_mode, "\"fixed\", \"adaptive\"");
    t->read("stepsize", cc.stepsize);
    t->read("max_stepsize", cc.max_stepsize);
    t->read("min_stepsize", cc.min_stepsize);
    t->read("acceptance_ratio", cc.acceptance_ratio);
    t->read("grow", cc.grow);
    t->read("shrink", cc.shrink);
    t->read("newton_cap", cc.newton_cap);
    t->read("fd_step", cc.fd_step);
    t->read("tolerance", cc.tolerance);
    cc.norm = detail::read_enum(*t, "norm", cc.norm, detail::parse_norm, "\"l2\", \"max\"");
    t->read("parameter_weight", cc.parameter_weight);
    t->read("accept_capped", cc.accept_capped);
    t->read("amplitude_floor", cc.amplitude_floor);
    t->read("lambda_min", cc.lambda_min);
    t->read("lambda_max", cc.lambda_max);
    t->read("max_points", cc.max_points);
    t->read("max_consecutive_failures", cc.max_consecutive_failures);
    t->finish();
  }

  if (auto t = top.table("oracle")) {
    auto& o = c.oracle;
    t->read("seed_parameter", o.seed_parameter);
    t->read("lambda_min", o.lambda_min);
    t->read("lambda_max", o.lambda_max);
    t->read("stepsize", o.stepsize);
    t->read("max_stepsize", o.max_stepsize);
    t->read("amplitude_floor", o.amplitude_floor);
    t->finish();
  }

  if (auto t = top.table("noise_compare")) {
    auto& nc = c.noise_compare;
    t->read("parameter", nc.parameter);
    t->read("variance", nc.variance);
    t->read("seeds", nc.seeds);
    if (auto v = t->numbers("coefficients", 0)) {
      nc.coefficients.clear();
      for (double x : *v) {
        detail::require(x == std::floor(x) && std::abs(x) < 1e6, "noise_compare.coefficients must be integers");
        nc.coefficients.push_back(static_cast<int>(x));
      }
    }
    t->finish();
  }
  top.finish();

  apply_seed(c, c.seed);
  validate_config(c);
  return c;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path), path.string());
}

/// Plant integration settings are shared by every consumer of a config.
inline Plant make_plant(const ExperimentConfig& c) { return Plant(c.model, c.initial_state, c.integrator); }

}  // namespace cbc
