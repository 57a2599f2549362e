#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cbc {

/// Failure categories raised by the toolkit.
enum class Errc {
  TooFewKnots,
  NonMonotone,
  OutOfDomain,
  DomainViolation,
  RankDeficient,
  InsufficientSamples,
  AllRestartsFailed,
  OriginCoincidence,
  DegenerateCycle,
  OriginOutsideCycle,
  IncompleteWinding,
  PoleProximity,
  NonFinite,
  StiffnessFailure,
  NotConverged,
  StalledAtEquilibrium,
  DegenerateSecant,
  CorrectionFailed,
  SingularJacobian,
  InitializationFailed,
  NoEquilibriumFound,
  ShootingDiverged,
  PeriodCollapse,
  ParseError,
  ValidationError,
  SchemaMismatch,
  IoError,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::TooFewKnots: return "TooFewKnots";
    case Errc::NonMonotone: return "NonMonotone";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::DomainViolation: return "DomainViolation";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::AllRestartsFailed: return "AllRestartsFailed";
    case Errc::OriginCoincidence: return "OriginCoincidence";
    case Errc::DegenerateCycle: return "DegenerateCycle";
    case Errc::OriginOutsideCycle: return "OriginOutsideCycle";
    case Errc::IncompleteWinding: return "IncompleteWinding";
    case Errc::PoleProximity: return "PoleProximity";
    case Errc::NonFinite: return "NonFinite";
    case Errc::StiffnessFailure: return "StiffnessFailure";
    case Errc::NotConverged: return "NotConverged";
    case Errc::StalledAtEquilibrium: return "StalledAtEquilibrium";
    case Errc::DegenerateSecant: return "DegenerateSecant";
    case Errc::CorrectionFailed: return "CorrectionFailed";
    case Errc::SingularJacobian: return "SingularJacobian";
    case Errc::InitializationFailed: return "InitializationFailed";
    case Errc::NoEquilibriumFound: return "NoEquilibriumFound";
    case Errc::ShootingDiverged: return "ShootingDiverged";
    case Errc::PeriodCollapse: return "PeriodCollapse";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cbc
