#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace saddle_td {

enum class ErrorKind {
  DimensionMismatch,
  NonFiniteValue,
  EmptyDataset,
  BadGamma,
  InvalidArgument,
  MissingTrace,
  IndexOutOfRange,
  BadTileConfig,
  SingularC,
  SingularSystem,
  NonPositiveSpectrum,
  NotDiagonalizable,
  HNotPositiveDefinite,
  NotConverged,
  SingularProjection,
  RhoUnsupported,
  AbsoluteContinuityViolated,
  IoError,
  SchemaMismatch,
};

constexpr std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::BadGamma: return "BadGamma";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MissingTrace: return "MissingTrace";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::BadTileConfig: return "BadTileConfig";
    case ErrorKind::SingularC: return "SingularC";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NonPositiveSpectrum: return "NonPositiveSpectrum";
    case ErrorKind::NotDiagonalizable: return "NotDiagonalizable";
    case ErrorKind::HNotPositiveDefinite: return "HNotPositiveDefinite";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::SingularProjection: return "SingularProjection";
    case ErrorKind::RhoUnsupported: return "RhoUnsupported";
    case ErrorKind::AbsoluteContinuityViolated: return "AbsoluteContinuityViolated";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

/// Process exit code for an error surfaced by the command-line tool:
/// 2 validation, 3 solver precondition, 4 I/O, 5 numerical.
constexpr int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RhoUnsupported:
    case ErrorKind::AbsoluteContinuityViolated:
      return 3;
    case ErrorKind::IoError:
    case ErrorKind::SchemaMismatch:
      return 4;
    case ErrorKind::SingularC:
    case ErrorKind::SingularSystem:
    case ErrorKind::NonPositiveSpectrum:
    case ErrorKind::NotDiagonalizable:
    case ErrorKind::HNotPositiveDefinite:
    case ErrorKind::NotConverged:
    case ErrorKind::SingularProjection:
      return 5;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace saddle_td
