// Command-line front end: run, oracle, knots, noise-compare, plot.
//
// Exit codes: 0 success, 2 configuration error, 3 abnormal termination,
// 4 I/O failure, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cbc/config.hpp"
#include "cbc/continuation.hpp"
#include "cbc/error.hpp"
#include "cbc/experiments.hpp"
#include "cbc/io.hpp"

namespace fs = std::filesystem;
using namespace cbc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAbnormal = 3;
constexpr int kExitIo = 4;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

/// Numbered log lines, mirrored to stderr when verbose.
class RunLog {
 public:
  RunLog(const fs::path& path, bool verbose) : out_(path), verbose_(verbose) {
    if (!out_) throw Error(Errc::IoError, fmt::format("cannot write {}", path.string()));
  }
  void operator()(const std::string& line) {
    const std::string s = fmt::format("{:05d} {}", n_++, line);
    out_ << s << '\n';
    out_.flush();
    if (verbose_) std::cerr << s << '\n';
  }
  LogSink sink() {
    return [this](const std::string& s) { (*this)(s); };
  }

 private:
  std::ofstream out_;
  bool verbose_;
  int n_ = 0;
};

fs::path prepare_output(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, fmt::format("cannot create {}: {}", dir, ec.message()));
  return fs::path(dir);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, fmt::format("cannot write {}", path.string()));
  return f;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, fmt::format("cannot read {}", path.string()));
  return f;
}

void close_checked(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw Error(Errc::IoError, fmt::format("failed writing {}", path.string()));
}

/// Loads the config, applies a seed override and returns the config text verbatim.
ExperimentConfig load(const CommonOptions& o, std::string* text = nullptr) {
  if (o.config.empty()) throw Error(Errc::ValidationError, "--config is required");
  const std::string body = read_text_file(o.config);
  ExperimentConfig c = parse_config_text(body, o.config);
  if (o.seed) apply_seed(c, *o.seed);
  if (text) *text = body;
  return c;
}

std::string output_dir(const CommonOptions& o, const ExperimentConfig& c) { return o.out.empty() ? c.output : o.out; }

std::vector<BranchRow> branch_rows(const Branch& b) {
  std::stringstream ss;
  write_branch_csv(ss, b);
  return read_branch_csv(ss);
}

int cmd_run(const CommonOptions& o, const std::string& oracle_csv) {
  std::string text;
  const ExperimentConfig c = load(o, &text);
  const fs::path dir = prepare_output(output_dir(o, c));
  {
    auto f = open_output(dir / "config.toml");
    f << text;
    close_checked(f, dir / "config.toml");
  }
  std::vector<OracleRow> oracle;
  if (!oracle_csv.empty()) {
    auto f = open_input(oracle_csv);
    oracle = read_oracle_csv(f);
  }
  RunLog log(dir / "run.log", o.verbose);
  log(fmt::format("config {} model {} direction {} seed {}", o.config, to_string(c.model.kind()),
                  c.backward ? "backward" : "forward", c.seed));
  Plant plant = make_plant(c);
  Branch branch;
  try {
    branch = run_branch(c.continuation, plant, c.knots, c.controller, log.sink());
  } catch (const Error& e) {
    log(fmt::format("error {}", e.what()));
    throw;
  }
  log(fmt::format("summary points {} rejected {} failed {} evaluations {}", branch.points.size(),
                  branch.rejected_steps, branch.failed_corrections, plant.evaluations()));

  const fs::path points = prepare_output((dir / "points").string());
  for (std::size_t i = 0; i < branch.points.size(); ++i) {
    const auto& p = branch.points[i];
    const fs::path path = points / fmt::format("point_{:04d}.spline", i);
    auto f = open_output(path);
    write_spline_dump(f, p.target_curve(), p.knot_error);
    close_checked(f, path);
  }
  {
    auto f = open_output(dir / "branch.csv");
    write_branch_csv(f, branch);
    close_checked(f, dir / "branch.csv");
  }
  {
    auto f = open_output(dir / "plot.svg");
    f << emit_plot({{c.backward ? "CBC backward" : "CBC forward", branch_rows(branch)}}, oracle,
                   c.model.parameter_name());
    close_checked(f, dir / "plot.svg");
  }
  std::cout << fmt::format("{} points, terminated: {} ({})\n", branch.points.size(), to_string(branch.termination),
                           branch.termination_detail);
  return branch.termination == Termination::Stall ? kExitAbnormal : 0;
}

int cmd_oracle(const CommonOptions& o) {
  const ExperimentConfig c = load(o);
  const fs::path dir = prepare_output(output_dir(o, c));
  RunLog log(dir / "oracle.log", o.verbose);
  const OracleRun run = run_oracle(c, log.sink());
  auto f = open_output(dir / "oracle.csv");
  write_oracle_csv(f, run.points);
  close_checked(f, dir / "oracle.csv");
  std::cout << fmt::format("{} orbits; decreasing: {}, increasing: {}\n", run.points.size(),
                           to_string(run.decreasing.termination), to_string(run.increasing.termination));
  for (double fold : run.folds) std::cout << fmt::format("fold {:.8g}\n", fold);
  for (const auto& h : run.hopf) std::cout << fmt::format("hopf {:.10g}\n", h.lambda);
  return 0;
}

/// Two-column (t, x) samples with a header line; t in [0, 1).
SampleSet read_samples(const fs::path& path) {
  auto f = open_input(path);
  std::string line;
  if (!std::getline(f, line)) throw Error(Errc::SchemaMismatch, "row 1: missing header");
  SampleSet s;
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(Errc::SchemaMismatch, fmt::format("row {}: expected 2 columns", row));
    try {
      s.push_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw Error(Errc::SchemaMismatch, fmt::format("row {}: not a number", row));
    }
  }
  return s;
}

int cmd_knots(const CommonOptions& o, const std::string& samples_path, std::optional<double> parameter) {
  const ExperimentConfig c = load(o);
  const fs::path dir = prepare_output(output_dir(o, c));
  SampleSet samples;
  if (!samples_path.empty()) {
    samples = read_samples(samples_path);
  } else {
    samples = capture_reference_cycle(c, parameter.value_or(c.continuation.lambda_first)).encoded;
  }
  const ParsimonyResult p = parsimony(samples, c.knots);
  const SplineCurve curve = fit_least_squares(PeriodicBasis(p.knots), samples).curve;
  auto f = open_output(dir / "knots.spline");
  write_spline_dump(f, curve, p.spline_error);
  close_checked(f, dir / "knots.spline");
  std::cout << fmt::format("{} coefficients: fit error {:.6e}\n", p.coefficients, p.spline_error);
  std::cout << fmt::format("fourier with {} parameters: fit error {:.6e}\n", p.fourier_equal_parameters,
                           p.fourier_equal_error);
  if (p.fourier_parameters_needed) {
    std::cout << fmt::format("fourier needs {} parameters to match\n", *p.fourier_parameters_needed);
  } else {
    std::cout << "no fourier fit tried matches\n";
  }
  return 0;
}

int cmd_noise(const CommonOptions& o) {
  const ExperimentConfig c = load(o);
  const fs::path dir = prepare_output(output_dir(o, c));
  RunLog log(dir / "noise.log", o.verbose);
  const auto trials = noise_compare(c, {}, log.sink());
  std::vector<NoiseRow> rows;
  for (const auto& t : trials) rows.push_back({t.parameters, t.seed, t.spline_rmse, t.fourier_rmse});
  auto f = open_output(dir / "noise.csv");
  write_noise_csv(f, rows);
  close_checked(f, dir / "noise.csv");
  for (int n : c.noise_compare.coefficients) {
    int wins = 0, total = 0;
    for (const auto& t : trials) {
      if (t.parameters != n) continue;
      ++total;
      wins += t.spline_wins() ? 1 : 0;
    }
    std::cout << fmt::format("{} parameters: spline lower in {}/{} seeds\n", n, wins, total);
  }
  return 0;
}

int cmd_plot(const std::vector<std::string>& branches, const std::string& oracle_csv, const std::string& svg,
             const std::string& parameter) {
  std::vector<PlotSeries> series;
  for (const auto& b : branches) {
    auto f = open_input(b);
    series.push_back({fs::path(b).stem().string(), read_branch_csv(f)});
  }
  std::vector<OracleRow> oracle;
  if (!oracle_csv.empty()) {
    auto f = open_input(oracle_csv);
    oracle = read_oracle_csv(f);
  }
  const fs::path path(svg);
  if (path.has_parent_path()) prepare_output(path.parent_path().string());
  auto f = open_output(path);
  f << emit_plot(series, oracle, parameter);
  close_checked(f, path);
  return 0;
}

int exit_code(const Error& e) {
  switch (e.code()) {
    case Errc::ParseError:
    case Errc::ValidationError: return kExitConfig;
    case Errc::IoError:
    case Errc::SchemaMismatch: return kExitIo;
    default: return kExitAbnormal;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-based continuation of periodic orbits"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", common.config, "experiment config (TOML)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "top-level seed, overrides the config");
    sub->add_flag("--verbose", common.verbose, "echo the log to stderr");
  };

  auto* run = app.add_subcommand("run", "control-based continuation run");
  add_common(run, true);
  std::string run_oracle_csv;
  run->add_option("--oracle", run_oracle_csv, "oracle CSV overlaid on the plot")->check(CLI::ExistingFile);

  auto* oracle = app.add_subcommand("oracle", "reference branch by numerical shooting");
  add_common(oracle, true);

  auto* knots = app.add_subcommand("knots", "optimized-knot spline fit of one cycle");
  add_common(knots, true);
  std::string samples;
  std::optional<double> parameter;
  knots->add_option("--samples", samples, "CSV of t,x samples instead of a simulated cycle")->check(CLI::ExistingFile);
  knots->add_option("--parameter", parameter, "parameter of the simulated open-loop cycle");

  auto* noise = app.add_subcommand("noise-compare", "spline versus Fourier fits of a noisy controlled cycle");
  add_common(noise, true);

  auto* plot = app.add_subcommand("plot", "amplitude-parameter figure from CSV files");
  std::vector<std::string> branches;
  std::string plot_oracle, svg = "plot.svg", parameter_name = "lambda";
  plot->add_option("--branch", branches, "branch CSV (repeatable)")->check(CLI::ExistingFile);
  plot->add_option("--oracle", plot_oracle, "oracle CSV")->check(CLI::ExistingFile);
  plot->add_option("--svg", svg, "output SVG path");
  plot->add_option("--parameter-name", parameter_name, "abscissa label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(common, run_oracle_csv);
    if (*oracle) return cmd_oracle(common);
    if (*knots) return cmd_knots(common, samples, parameter);
    if (*noise) return cmd_noise(common);
    if (*plot) return cmd_plot(branches, plot_oracle, svg, parameter_name);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
