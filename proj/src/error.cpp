#include "crystal/error.hpp"

namespace crystal {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DuplicateSampleId: return "DuplicateSampleId";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnknownSampleId: return "UnknownSampleId";
    case ErrorCode::ChannelBroken: return "ChannelBroken";
    case ErrorCode::NonFiniteScore: return "NonFiniteScore";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::TooManyFeatures: return "TooManyFeatures";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::SingularFit: return "SingularFit";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DuplicateOriginalFeature: return "DuplicateOriginalFeature";
    case ErrorCode::InconsistentSuperFeature: return "InconsistentSuperFeature";
    case ErrorCode::WeightOutOfRange: return "WeightOutOfRange";
    case ErrorCode::UnknownModelFeature: return "UnknownModelFeature";
    case ErrorCode::UnpairedUserFeature: return "UnpairedUserFeature";
    case ErrorCode::MalformedPlaceholder: return "MalformedPlaceholder";
    case ErrorCode::DuplicateInsightType: return "DuplicateInsightType";
    case ErrorCode::BadExpression: return "BadExpression";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::MissingTemplate: return "MissingTemplate";
    case ErrorCode::MissingUserValue: return "MissingUserValue";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ChannelBroken:
    case ErrorCode::NonFiniteScore:
    case ErrorCode::InsufficientSamples:
    case ErrorCode::TooManyFeatures:
    case ErrorCode::EmptyCluster:
    case ErrorCode::DegenerateFit:
    case ErrorCode::SingularFit:
    case ErrorCode::MissingUserValue:
    case ErrorCode::IoFailure:
      return false;
    default:
      return true;
  }
}

}  // namespace crystal
