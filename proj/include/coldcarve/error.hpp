#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coldcarve {

enum class ErrorCode {
  InvalidArgument,
  MalformedXml,
  SchemaViolation,
  TooSmall,
  LengthMismatch,
  EvenTrialCount,
  NotFound,
  Unrepairable,
  NoMatch,
  ShapeMismatch,
  InvalidDistribution,
  UnlabeledData,
  ArchitectureMismatch,
  ZeroTeacherAccuracy,
  Io,
  Config,
  EmptyResults,
  SchemaError,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` lets callers
// (CLI exit-code mapping, python bindings) dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace coldcarve
