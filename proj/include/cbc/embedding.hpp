#pragma once

// Angle encoding of planar states: polar-origin heuristics, the embedding
// scale factor, and conversion of timed samples to angle-indexed samples.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "cbc/error.hpp"
#include "cbc/spline.hpp"

namespace cbc {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
/// Slack (rad) when deciding whether a record closes a full winding.
inline constexpr double kWindingSlack = 1e-9;

enum class OriginHeuristic { Mean, MinMax, MaxMin, MaxMax, MinMin, Middle, Manual };

constexpr std::string_view to_string(OriginHeuristic h) {
  switch (h) {
    case OriginHeuristic::Mean: return "mean";
    case OriginHeuristic::MinMax: return "min-max";
    case OriginHeuristic::MaxMin: return "max-min";
    case OriginHeuristic::MaxMax: return "max-max";
    case OriginHeuristic::MinMin: return "min-min";
    case OriginHeuristic::Middle: return "middle";
    case OriginHeuristic::Manual: return "manual";
  }
  return "unknown";
}

inline std::optional<OriginHeuristic> parse_heuristic(std::string_view name) {
  for (auto h : {OriginHeuristic::Mean, OriginHeuristic::MinMax, OriginHeuristic::MaxMin, OriginHeuristic::MaxMax,
                 OriginHeuristic::MinMin, OriginHeuristic::Middle, OriginHeuristic::Manual}) {
    if (to_string(h) == name) return h;
  }
  return std::nullopt;
}

/// Polar origin (mu_x, mu_z), scale sigma, and the heuristic that placed them.
struct AngleEmbedding {
  double mu_x = 0.0;
  double mu_z = 0.0;
  double sigma = 1.0;
  OriginHeuristic heuristic = OriginHeuristic::Manual;

  friend bool operator==(const AngleEmbedding&, const AngleEmbedding&) = default;
};

/// Timed planar samples (t_j, x_j, z_j).
struct PlanarSamples {
  std::vector<double> time;
  std::vector<double> x;
  std::vector<double> z;

  std::size_t size() const { return time.size(); }
  bool empty() const { return time.empty(); }
  void push_back(double t, double xv, double zv) {
    time.push_back(t);
    x.push_back(xv);
    z.push_back(zv);
  }
  void clear() {
    time.clear();
    x.clear();
    z.clear();
  }
};

/// atan2(sigma (z - mu_z), x - mu_x) wrapped to [0, 2 pi).
inline double encode_angle(const AngleEmbedding& e, double x, double z) {
  const double dx = x - e.mu_x;
  const double dz = z - e.mu_z;
  if (std::abs(dx) < 1e-12 && std::abs(dz) < 1e-12) {
    throw Error(Errc::OriginCoincidence, fmt::format("state ({}, {}) sits on the polar origin", x, z));
  }
  double phi = std::atan2(e.sigma * dz, dx);
  if (phi < 0.0) phi += kTwoPi;
  if (phi >= kTwoPi) phi -= kTwoPi;
  return phi;
}

/// Unit-domain coordinate t = phi / 2 pi of a state.
inline double encode_unit(const AngleEmbedding& e, double x, double z) { return encode_angle(e, x, z) / kTwoPi; }

/// Polar origin and scale for a reference cycle. `manual_origin` is required
/// for (and only used by) the manual heuristic.
inline AngleEmbedding compute_embedding(const PlanarSamples& cycle, OriginHeuristic heuristic,
                                        std::optional<std::pair<double, double>> manual_origin = std::nullopt) {
  if (cycle.size() < 3) throw Error(Errc::DegenerateCycle, "cycle has fewer than three samples");
  const auto [xmin_it, xmax_it] = std::minmax_element(cycle.x.begin(), cycle.x.end());
  const auto [zmin_it, zmax_it] = std::minmax_element(cycle.z.begin(), cycle.z.end());
  const double x_ptp = *xmax_it - *xmin_it;
  const double z_ptp = *zmax_it - *zmin_it;
  if (x_ptp < 1e-9 || z_ptp < 1e-9) {
    throw Error(Errc::DegenerateCycle, fmt::format("flat cycle (x range {:.3g}, z range {:.3g})", x_ptp, z_ptp));
  }
  const std::size_t i_xmin = static_cast<std::size_t>(xmin_it - cycle.x.begin());
  const std::size_t i_xmax = static_cast<std::size_t>(xmax_it - cycle.x.begin());
  const std::size_t i_zmin = static_cast<std::size_t>(zmin_it - cycle.z.begin());
  const std::size_t i_zmax = static_cast<std::size_t>(zmax_it - cycle.z.begin());

  AngleEmbedding e;
  e.heuristic = heuristic;
  e.sigma = x_ptp / z_ptp;
  switch (heuristic) {
    case OriginHeuristic::MinMax:
      e.mu_x = cycle.x[i_zmin];
      e.mu_z = cycle.z[i_xmax];
      break;
    case OriginHeuristic::MaxMin:
      e.mu_x = cycle.x[i_zmax];
      e.mu_z = cycle.z[i_xmin];
      break;
    case OriginHeuristic::MaxMax:
      e.mu_x = cycle.x[i_zmax];
      e.mu_z = cycle.z[i_xmax];
      break;
    case OriginHeuristic::MinMin:
      e.mu_x = cycle.x[i_zmin];
      e.mu_z = cycle.z[i_xmin];
      break;
    case OriginHeuristic::Middle:
      e.mu_x = 0.5 * (*xmin_it + *xmax_it);
      e.mu_z = 0.5 * (*zmin_it + *zmax_it);
      break;
    case OriginHeuristic::Mean: {
      // Time-weighted (trapezoidal) means over the record.
      double sx = 0.0, sz = 0.0, span = 0.0;
      for (std::size_t j = 1; j < cycle.size(); ++j) {
        const double dt = cycle.time[j] - cycle.time[j - 1];
        sx += 0.5 * dt * (cycle.x[j] + cycle.x[j - 1]);
        sz += 0.5 * dt * (cycle.z[j] + cycle.z[j - 1]);
        span += dt;
      }
      if (!(span > 0.0)) throw Error(Errc::DegenerateCycle, "cycle has zero duration");
      e.mu_x = sx / span;
      e.mu_z = sz / span;
      break;
    }
    case OriginHeuristic::Manual:
      if (!manual_origin) throw Error(Errc::ValidationError, "manual origin heuristic needs an explicit origin");
      e.mu_x = manual_origin->first;
      e.mu_z = manual_origin->second;
      return e;
  }
  if (!(e.mu_x > *xmin_it && e.mu_x < *xmax_it && e.mu_z > *zmin_it && e.mu_z < *zmax_it)) {
    throw Error(Errc::OriginOutsideCycle,
                fmt::format("{} origin ({:.6g}, {:.6g}) not strictly inside the cycle's bounding box",
                            to_string(heuristic), e.mu_x, e.mu_z));
  }
  return e;
}

/// Continuous (unwrapped) angles of a timed record.
inline std::vector<double> unwrapped_angles(const AngleEmbedding& e, const PlanarSamples& samples) {
  std::vector<double> out(samples.size());
  double previous = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const double phi = encode_angle(e, samples.x[j], samples.z[j]);
    if (j == 0) {
      out[j] = phi;
    } else {
      double d = phi - previous;
      if (d > std::numbers::pi) d -= kTwoPi;
      if (d < -std::numbers::pi) d += kTwoPi;
      out[j] = out[j - 1] + d;
    }
    previous = phi;
  }
  return out;
}

/// Angle-indexed samples (phi / 2 pi, x) of every record entry, with no
/// winding restriction. For records already known to span one period.
inline SampleSet encode_pointwise(const AngleEmbedding& e, const PlanarSamples& samples) {
  SampleSet out;
  for (std::size_t j = 0; j < samples.size(); ++j) out.push_back(encode_unit(e, samples.x[j], samples.z[j]), samples.x[j]);
  return out;
}

/// Angle-indexed samples (phi / 2 pi, x) from the final complete winding of a record.
inline SampleSet encode_samples(const AngleEmbedding& e, const PlanarSamples& samples) {
  if (samples.empty()) throw Error(Errc::IncompleteWinding, "empty record");
  const auto unwrapped = unwrapped_angles(e, samples);
  const double last = unwrapped.back();
  const double total = last - unwrapped.front();
  if (std::abs(total) < kTwoPi - kWindingSlack) {
    throw Error(Errc::IncompleteWinding, fmt::format("record winds through {:.4f} rad, less than 2 pi", total));
  }
  const double direction = total > 0.0 ? 1.0 : -1.0;
  SampleSet out;
  for (std::size_t j = samples.size(); j-- > 0;) {
    if (direction * (last - unwrapped[j]) >= kTwoPi - kWindingSlack) break;
    out.push_back(encode_unit(e, samples.x[j], samples.z[j]), samples.x[j]);
  }
  std::reverse(out.t.begin(), out.t.end());
  std::reverse(out.x.begin(), out.x.end());
  return out;
}

}  // namespace cbc
