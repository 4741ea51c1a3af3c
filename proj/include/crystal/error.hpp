#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crystal {

enum class ErrorCode {
  // model_io
  MissingFile,
  SchemaViolation,
  DuplicateSampleId,
  LengthMismatch,
  UnknownSampleId,
  ChannelBroken,
  NonFiniteScore,
  // interpreter
  InsufficientSamples,
  TooManyFeatures,
  EmptyCluster,
  DegenerateFit,
  SingularFit,
  InvalidConfig,
  // insights_design
  DuplicateOriginalFeature,
  InconsistentSuperFeature,
  WeightOutOfRange,
  UnknownModelFeature,
  UnpairedUserFeature,
  MalformedPlaceholder,
  DuplicateInsightType,
  BadExpression,
  UnknownIdentifier,
  UnboundPlaceholder,
  MissingTemplate,
  // narrative_engine
  MissingUserValue,
  // exporter
  IoFailure,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Input, design and config problems, as opposed to failures while running.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace crystal
