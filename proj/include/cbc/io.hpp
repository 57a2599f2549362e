#pragma once

// Text formats: branch, oracle and noise-comparison CSVs, spline dumps, and
// a deterministic SVG bifurcation plot. Column names and order are fixed.

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "cbc/continuation.hpp"
#include "cbc/error.hpp"
#include "cbc/oracle.hpp"
#include "cbc/spline.hpp"

namespace cbc {

inline constexpr std::string_view kBranchHeader =
    "index,lambda,amplitude,residual_norm,rms_control_effort,newton_iters,stepsize,flags,knot_error";
inline constexpr std::string_view kOracleHeader = "lambda,x0,y0,period,amplitude,multiplier,stability";
inline constexpr std::string_view kNoiseHeader = "parameters,seed,spline_rmse,fourier_rmse";

struct BranchRow {
  int index = 0;
  double lambda = 0.0;
  double amplitude = 0.0;
  double residual_norm = 0.0;
  double rms_control_effort = 0.0;
  int newton_iters = 0;
  double stepsize = 0.0;
  /// '|'-separated subset of {initial, capped}.
  std::string flags;
  double knot_error = 0.0;
};

struct OracleRow {
  double lambda = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;
  double period = 0.0;
  double amplitude = 0.0;
  /// Modulus of the nontrivial Floquet multiplier.
  double multiplier = 0.0;
  bool stable = false;
};

struct NoiseRow {
  int parameters = 0;
  std::uint64_t seed = 0;
  double spline_rmse = 0.0;
  double fourier_rmse = 0.0;
};

namespace detail {

inline std::string num(double v) { return fmt::format("{:.17g}", v); }

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, std::size_t row, std::string_view column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::SchemaMismatch, fmt::format("row {}: column {}: '{}' is not a number", row, column, s));
}

inline long long parse_integer(const std::string& s, std::size_t row, std::string_view column) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::SchemaMismatch, fmt::format("row {}: column {}: '{}' is not an integer", row, column, s));
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

/// Reads a CSV with the given header; calls `row(fields, row_number)` per data
/// line. Row numbers count the header as row 1.
template <class F>
void read_csv(std::istream& in, std::string_view header, F&& row) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::SchemaMismatch, "row 1: missing header");
  strip_cr(line);
  if (line != header) {
    throw Error(Errc::SchemaMismatch, fmt::format("row 1: header '{}' differs from '{}'", line, header));
  }
  const std::size_t columns = split_csv(header).size();
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != columns) {
      throw Error(Errc::SchemaMismatch, fmt::format("row {}: {} fields, expected {}", n, fields.size(), columns));
    }
    row(fields, n);
  }
}

}  // namespace detail

inline std::string point_flags(const ContinuationPoint& p) {
  std::string f;
  if (p.initial) f = "initial";
  if (p.capped) f += f.empty() ? "capped" : "|capped";
  return f;
}

inline void write_branch_csv(std::ostream& out, const Branch& branch) {
  out << kBranchHeader << '\n';
  for (std::size_t i = 0; i < branch.points.size(); ++i) {
    const auto& p = branch.points[i];
    out << i << ',' << detail::num(p.lambda) << ',' << detail::num(p.amplitude) << ','
        << detail::num(p.residual_norm) << ',' << detail::num(p.rms_effort) << ',' << p.newton_iterations << ','
        << detail::num(p.stepsize) << ',' << point_flags(p) << ',' << detail::num(p.knot_error) << '\n';
  }
}

inline std::vector<BranchRow> read_branch_csv(std::istream& in) {
  std::vector<BranchRow> rows;
  detail::read_csv(in, kBranchHeader, [&](const std::vector<std::string>& f, std::size_t n) {
    BranchRow r;
    r.index = static_cast<int>(detail::parse_integer(f[0], n, "index"));
    r.lambda = detail::parse_double(f[1], n, "lambda");
    r.amplitude = detail::parse_double(f[2], n, "amplitude");
    r.residual_norm = detail::parse_double(f[3], n, "residual_norm");
    r.rms_control_effort = detail::parse_double(f[4], n, "rms_control_effort");
    r.newton_iters = static_cast<int>(detail::parse_integer(f[5], n, "newton_iters"));
    r.stepsize = detail::parse_double(f[6], n, "stepsize");
    r.flags = f[7];
    r.knot_error = detail::parse_double(f[8], n, "knot_error");
    rows.push_back(std::move(r));
  });
  return rows;
}

inline void write_oracle_csv(std::ostream& out, const std::vector<ShootingOrbit>& orbits) {
  out << kOracleHeader << '\n';
  for (const auto& o : orbits) {
    out << detail::num(o.lambda) << ',' << detail::num(o.anchor[0]) << ',' << detail::num(o.anchor[1]) << ','
        << detail::num(o.period) << ',' << detail::num(o.amplitude) << ',' << detail::num(std::abs(o.multiplier))
        << ',' << (o.stable ? "stable" : "unstable") << '\n';
  }
}

inline std::vector<OracleRow> read_oracle_csv(std::istream& in) {
  std::vector<OracleRow> rows;
  detail::read_csv(in, kOracleHeader, [&](const std::vector<std::string>& f, std::size_t n) {
    OracleRow r;
    r.lambda = detail::parse_double(f[0], n, "lambda");
    r.x0 = detail::parse_double(f[1], n, "x0");
    r.y0 = detail::parse_double(f[2], n, "y0");
    r.period = detail::parse_double(f[3], n, "period");
    r.amplitude = detail::parse_double(f[4], n, "amplitude");
    r.multiplier = detail::parse_double(f[5], n, "multiplier");
    if (f[6] != "stable" && f[6] != "unstable") {
      throw Error(Errc::SchemaMismatch, fmt::format("row {}: column stability: '{}'", n, f[6]));
    }
    r.stable = f[6] == "stable";
    rows.push_back(r);
  });
  return rows;
}

inline void write_noise_csv(std::ostream& out, const std::vector<NoiseRow>& rows) {
  out << kNoiseHeader << '\n';
  for (const auto& r : rows) {
    out << r.parameters << ',' << r.seed << ',' << detail::num(r.spline_rmse) << ',' << detail::num(r.fourier_rmse)
        << '\n';
  }
}

inline std::vector<NoiseRow> read_noise_csv(std::istream& in) {
  std::vector<NoiseRow> rows;
  detail::read_csv(in, kNoiseHeader, [&](const std::vector<std::string>& f, std::size_t n) {
    NoiseRow r;
    r.parameters = static_cast<int>(detail::parse_integer(f[0], n, "parameters"));
    const auto s = detail::parse_integer(f[1], n, "seed");
    r.seed = static_cast<std::uint64_t>(s);
    r.spline_rmse = detail::parse_double(f[2], n, "spline_rmse");
    r.fourier_rmse = detail::parse_double(f[3], n, "fourier_rmse");
    rows.push_back(r);
  });
  return rows;
}

// ------------------------------------------------------------- spline dumps

struct SplineDump {
  std::vector<double> interior_knots;
  Eigen::VectorXd coefficients;
  double fit_error = 0.0;

  SplineCurve curve() const { return SplineCurve(PeriodicBasis(interior_knots), coefficients); }
};

inline void write_spline_dump(std::ostream& out, const SplineCurve& curve, double fit_error) {
  out << "interior_knots";
  for (double k : curve.basis().knots().interior()) out << ' ' << detail::num(k);
  out << "\ncoefficients";
  for (Eigen::Index i = 0; i < curve.coefficients().size(); ++i) out << ' ' << detail::num(curve.coefficients()(i));
  out << "\nfit_error " << detail::num(fit_error) << '\n';
}

inline SplineDump read_spline_dump(std::istream& in) {
  SplineDump d;
  std::string line;
  const std::string_view names[] = {"interior_knots", "coefficients", "fit_error"};
  std::vector<double> values[3];
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(in, line)) throw Error(Errc::SchemaMismatch, fmt::format("line {}: missing {}", i + 1, names[i]));
    detail::strip_cr(line);
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != names[i]) {
      throw Error(Errc::SchemaMismatch, fmt::format("line {}: expected '{}', found '{}'", i + 1, names[i], key));
    }
    std::string tok;
    while (ls >> tok) values[i].push_back(detail::parse_double(tok, static_cast<std::size_t>(i + 1), names[i]));
  }
  if (values[2].size() != 1 || values[1].size() != values[0].size() + 1) {
    throw Error(Errc::SchemaMismatch, "coefficient count must be one more than the knot count");
  }
  d.interior_knots = values[0];
  d.coefficients = Eigen::Map<const Eigen::VectorXd>(values[1].data(), static_cast<Eigen::Index>(values[1].size()));
  d.fit_error = values[2][0];
  return d;
}

// ---------------------------------------------------------------------- SVG

struct PlotSeries {
  std::string label;
  std::vector<BranchRow> rows;
};

namespace detail {

/// Tick spacing of 1, 2 or 5 times a power of ten giving about five ticks.
inline double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

inline std::string fixed(double v) { return fmt::format("{:.2f}", v); }

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string tick_label(double v, double step) {
  const int digits = std::max(0, -static_cast<int>(std::floor(std::log10(step) + 1e-9)));
  if (std::abs(v) < 1e-12 * step) v = 0.0;
  return fmt::format("{:.{}f}", v, digits);
}

}  // namespace detail

/// Amplitude against parameter: CBC points as markers, oracle orbits as solid
/// (stable) or dashed (unstable) lines. Byte-identical output for identical input.
inline std::string emit_plot(const std::vector<PlotSeries>& series, const std::vector<OracleRow>& oracle,
                             std::string_view parameter_name = "lambda") {
  constexpr double W = 640, H = 480, L = 70, R = 20, T = 20, B = 55;
  double x0 = INFINITY, x1 = -INFINITY, y0 = 0.0, y1 = -INFINITY;
  for (const auto& s : series) {
    for (const auto& r : s.rows) {
      x0 = std::min(x0, r.lambda);
      x1 = std::max(x1, r.lambda);
      y1 = std::max(y1, r.amplitude);
    }
  }
  for (const auto& o : oracle) {
    x0 = std::min(x0, o.lambda);
    x1 = std::max(x1, o.lambda);
    y1 = std::max(y1, o.amplitude);
  }
  if (!(x1 > x0)) {
    const double c = std::isfinite(x0) ? x0 : 0.5;
    x0 = c - 0.5;
    x1 = c + 0.5;
  }
  if (!(y1 > y0)) y1 = 1.0;
  const double xs = detail::nice_step(x1 - x0);
  const double ys = detail::nice_step(y1 - y0);
  x0 = std::floor(x0 / xs) * xs;
  x1 = std::ceil(x1 / xs) * xs;
  y1 = std::ceil(y1 / ys) * ys;
  const auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H, W, H);
  svg += fmt::format("<g stroke=\"black\" stroke-width=\"1\" fill=\"none\"><path d=\"M{} {}H{}M{} {}V{}\"/></g>\n",
                     detail::fixed(L), detail::fixed(H - B), detail::fixed(W - R), detail::fixed(L),
                     detail::fixed(H - B), detail::fixed(T));
  svg += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  const int nx = static_cast<int>(std::lround((x1 - x0) / xs));
  for (int i = 0; i <= nx; ++i) {
    const double v = x0 + i * xs;
    svg += fmt::format("<path d=\"M{} {}v5\" stroke=\"black\"/><text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                       detail::fixed(px(v)), detail::fixed(H - B), detail::fixed(px(v)), detail::fixed(H - B + 18),
                       detail::tick_label(v, xs));
  }
  const int ny = static_cast<int>(std::lround((y1 - y0) / ys));
  for (int i = 0; i <= ny; ++i) {
    const double v = y0 + i * ys;
    svg += fmt::format("<path d=\"M{} {}h-5\" stroke=\"black\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                       detail::fixed(L), detail::fixed(py(v)), detail::fixed(L - 8), detail::fixed(py(v) + 4),
                       detail::tick_label(v, ys));
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", detail::fixed((L + W - R) / 2),
                     detail::fixed(H - 12), detail::xml_escape(parameter_name));
  svg += fmt::format("<text transform=\"translate(16 {}) rotate(-90)\" text-anchor=\"middle\">amplitude</text>\n",
                     detail::fixed((T + H - B) / 2));
  svg += "</g>\n";

  // Oracle: one polyline per run of equal stability.
  for (std::size_t i = 0; i + 1 < oracle.size();) {
    const bool stable = oracle[i].stable;
    std::string d = fmt::format("M{} {}", detail::fixed(px(oracle[i].lambda)), detail::fixed(py(oracle[i].amplitude)));
    std::size_t j = i + 1;
    for (; j < oracle.size(); ++j) {
      d += fmt::format("L{} {}", detail::fixed(px(oracle[j].lambda)), detail::fixed(py(oracle[j].amplitude)));
      if (oracle[j].stable != stable) break;
    }
    svg += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{}/>\n", d,
                       stable ? "#2a9d3a" : "#7b3fa0", stable ? "" : " stroke-dasharray=\"4 3\"");
    i = j < oracle.size() ? j : oracle.size();
  }

  static constexpr std::string_view colours[] = {"#000000", "#d1495b", "#00798c", "#edae49"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto colour = colours[s % std::size(colours)];
    svg += fmt::format("<g fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\">\n", colour);
    for (const auto& r : series[s].rows) {
      svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"3\"/>\n", detail::fixed(px(r.lambda)),
                         detail::fixed(py(r.amplitude)));
    }
    svg += "</g>\n";
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                       detail::fixed(W - R - 150), detail::fixed(T + 14 * (s + 1)), colour, detail::xml_escape(series[s].label));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace cbc
