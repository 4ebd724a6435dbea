#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dfa {

enum class ErrorCode {
  InvalidArgument,
  AlreadyObserved,
  IndexOutOfRange,
  TooFewRows,
  SingularCovariance,
  NotPositiveDefinite,
  OverlappingSets,
  EmptyTarget,
  DimensionMismatch,
  TargetObserved,
  NotNormalized,
  SupportMismatch,
  NoCandidates,
  InvalidNode,
  CyclicGraph,
  NoValidExtension,
  NoRemainingSteps,
  Misaligned,
  EmptyValidation,
  ParseError,
  RaggedRows,
  Io,
};

std::string_view to_string(ErrorCode code);

// Broad failure category; the CLI maps these onto exit codes.
enum class ErrorCategory { Config, Data, Numeric };

ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dfa
