#include "explainbench/error.hpp"

namespace explainbench {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kMalformedManifest: return "malformed_manifest";
    case ErrorCode::kInvariantViolation: return "invariant_violation";
    case ErrorCode::kMissingColumn: return "missing_column";
    case ErrorCode::kEmptyAfterCleaning: return "empty_after_cleaning";
    case ErrorCode::kBadFraction: return "bad_fraction";
    case ErrorCode::kUnknownCategory: return "unknown_category";
    case ErrorCode::kMalformedOneHot: return "malformed_one_hot";
    case ErrorCode::kNonFiniteLoss: return "non_finite_loss";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kSchemaViolation: return "schema_violation";
    case ErrorCode::kCorruptNumber: return "corrupt_number";
    case ErrorCode::kUnsupportedCombination: return "unsupported_combination";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kTooManyFeatures: return "too_many_features";
    case ErrorCode::kSingularSystem: return "singular_system";
    case ErrorCode::kScaleMismatch: return "scale_mismatch";
    case ErrorCode::kAllPerturbationsDegenerate: return "all_perturbations_degenerate";
    case ErrorCode::kMalformedConfig: return "malformed_config";
    case ErrorCode::kUnknownMethod: return "unknown_method";
    case ErrorCode::kMissingManifest: return "missing_manifest";
    case ErrorCode::kIoFailure: return "io_failure";
    case ErrorCode::kPortInUse: return "port_in_use";
    case ErrorCode::kUnknownDataset: return "unknown_dataset";
    case ErrorCode::kUnknownModel: return "unknown_model";
    case ErrorCode::kDuplicateMethod: return "duplicate_method";
    case ErrorCode::kBadRequest: return "bad_request";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kInternal: return "internal";
  }
  return "internal";
}

bool is_data_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInternal:
    case ErrorCode::kSingularSystem:
      return false;
    default:
      return true;
  }
}

}  // namespace explainbench
