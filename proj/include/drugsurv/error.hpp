#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drugsurv {

enum class Errc {
  MissingColumn,
  TypeError,
  RangeViolation,
  EmptyCohort,
  InvalidSpec,
  SchemaMismatch,
  DegenerateCovariance,
  DegenerateLabels,
  NonConvergence,
  SingularSystem,
  FingerprintMismatch,
  WrongKind,
  VersionMismatch,
  CorruptFile,
  TooFewRows,
  LengthMismatch,
  Empty,
  OneClassOnly,
  ZeroVariance,
  UnknownFeature,
  TargetUnreachable,
  InvalidConfig,
  IoError,
};

constexpr std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::TypeError: return "TypeError";
    case Errc::RangeViolation: return "RangeViolation";
    case Errc::EmptyCohort: return "EmptyCohort";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::DegenerateCovariance: return "DegenerateCovariance";
    case Errc::DegenerateLabels: return "DegenerateLabels";
    case Errc::NonConvergence: return "NonConvergence";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::FingerprintMismatch: return "FingerprintMismatch";
    case Errc::WrongKind: return "WrongKind";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::CorruptFile: return "CorruptFile";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::Empty: return "Empty";
    case Errc::OneClassOnly: return "OneClassOnly";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::UnknownFeature: return "UnknownFeature";
    case Errc::TargetUnreachable: return "TargetUnreachable";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` names the failure; the message carries
/// the location (row/column, fold, field) where one exists.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return errc_name(code_); }
  /// The message without the leading error name.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

/// CSV diagnostics carry the 1-based data row and the column name.
class RowError : public Error {
 public:
  RowError(Errc code, std::size_t row, std::string column, const std::string& detail)
      : Error(code, "row " + std::to_string(row) + ", column '" + column + "': " + detail),
        row_(row),
        column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

}  // namespace drugsurv
