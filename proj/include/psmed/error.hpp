#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace psmed {

enum class ErrorKind {
  MissingColumn,
  NonBinaryTreatment,
  InvalidValue,
  StrongMonotonicityViolated,
  EmptyCell,
  DimensionMismatch,
  RankDeficient,
  DegenerateVariance,
  NegativeScore,
  QuadratureOverflow,
  ExtremePropensity,
  DensityRatioOverflow,
  EmptyStratumEstimate,
  DivisionByZero,
  BadFoldCount,
  UnsupportedMediator,
  UnsupportedTarget,
  ImpliedNegativePmf,
  TooManyFailedReplicates,
  InvalidDgp,
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::StrongMonotonicityViolated: return "StrongMonotonicityViolated";
    case ErrorKind::EmptyCell: return "EmptyCell";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::NegativeScore: return "NegativeScore";
    case ErrorKind::QuadratureOverflow: return "QuadratureOverflow";
    case ErrorKind::ExtremePropensity: return "ExtremePropensity";
    case ErrorKind::DensityRatioOverflow: return "DensityRatioOverflow";
    case ErrorKind::EmptyStratumEstimate: return "EmptyStratumEstimate";
    case ErrorKind::DivisionByZero: return "DivisionByZero";
    case ErrorKind::BadFoldCount: return "BadFoldCount";
    case ErrorKind::UnsupportedMediator: return "UnsupportedMediator";
    case ErrorKind::UnsupportedTarget: return "UnsupportedTarget";
    case ErrorKind::ImpliedNegativePmf: return "ImpliedNegativePmf";
    case ErrorKind::TooManyFailedReplicates: return "TooManyFailedReplicates";
    case ErrorKind::InvalidDgp: return "InvalidDgp";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace psmed
