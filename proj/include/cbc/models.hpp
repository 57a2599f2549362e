#pragma once

// Planar slow-fast test models. Control enters additively on dx/dt only.

#include <array>
#include <cmath>
#include <optional>
#include <string_view>

#include <fmt/format.h>

#include "cbc/error.hpp"

namespace cbc {

using State = std::array<double, 2>;

/// Synthetic gene oscillator; gamma_y is the continuation parameter.
struct GeneParams {
  double tau_y = 10.0;
  double alpha = 11.0;
  double gamma_x = 0.105;
  double sigma_gene = 2.0;
};

/// Reduced two-variable Oregonator; f is the continuation parameter.
struct OregonatorParams {
  double epsilon = 0.1;
  double q = 0.025;
};

enum class ModelKind { Gene, Oregonator };

constexpr std::string_view to_string(ModelKind k) { return k == ModelKind::Gene ? "gene" : "oregonator"; }

inline std::optional<ModelKind> parse_model(std::string_view name) {
  if (name == "gene") return ModelKind::Gene;
  if (name == "oregonator") return ModelKind::Oregonator;
  return std::nullopt;
}

/// |x + q| below this is treated as hitting the Oregonator pole.
inline constexpr double kPoleGuard = 1e-9;

class PlantModel {
 public:
  PlantModel() = default;
  explicit PlantModel(GeneParams p) : kind_(ModelKind::Gene), gene_(p) { validate(); }
  explicit PlantModel(OregonatorParams p) : kind_(ModelKind::Oregonator), oregonator_(p) { validate(); }

  static PlantModel defaults(ModelKind kind) {
    return kind == ModelKind::Gene ? PlantModel(GeneParams{}) : PlantModel(OregonatorParams{});
  }

  ModelKind kind() const { return kind_; }
  const GeneParams& gene() const { return gene_; }
  const OregonatorParams& oregonator() const { return oregonator_; }
  std::string_view name() const { return to_string(kind_); }
  std::string_view parameter_name() const { return kind_ == ModelKind::Gene ? "gamma_y" : "f"; }

  /// Rough oscillation period, used only to size the first sampling interval.
  double nominal_period() const { return kind_ == ModelKind::Gene ? 200.0 : 3.0; }

  State rhs(const State& s, double lambda, double u = 0.0) const {
    const double x = s[0];
    const double y = s[1];
    State d;
    if (kind_ == ModelKind::Gene) {
      const auto& p = gene_;
      const double x2 = x * x;
      const double x4 = x2 * x2;
      const double y2 = y * y;
      const double h = (1.0 + x2 + p.alpha * p.sigma_gene * x4) / ((1.0 + x2 + p.sigma_gene * x4) * (1.0 + y2 * y2));
      d[0] = h - p.gamma_x * x + u;
      d[1] = (h - lambda * y) / p.tau_y;
    } else {
      const auto& p = oregonator_;
      if (std::abs(x + p.q) < kPoleGuard) {
        throw Error(Errc::PoleProximity, fmt::format("x = {} at the pole x = -q", x));
      }
      d[0] = (x * (1.0 - x) - lambda * y * (x - p.q) / (x + p.q)) / p.epsilon + u;
      d[1] = x - y;
    }
    if (!std::isfinite(d[0]) || !std::isfinite(d[1])) {
      throw Error(Errc::NonFinite, fmt::format("non-finite derivative at ({}, {}), parameter {}", x, y, lambda));
    }
    return d;
  }

 private:
  void validate() const {
    const bool ok = kind_ == ModelKind::Gene
                        ? (gene_.tau_y > 0 && gene_.alpha > 0 && gene_.gamma_x > 0 && gene_.sigma_gene > 0)
                        : (oregonator_.epsilon > 0 && oregonator_.q > 0);
    if (!ok) throw Error(Errc::ValidationError, "model parameters must be positive");
  }

  ModelKind kind_ = ModelKind::Oregonator;
  GeneParams gene_{};
  OregonatorParams oregonator_{};
};

}  // namespace cbc
