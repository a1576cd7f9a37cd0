#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace explainbench {

// Error kinds raised across the suite. The CLI maps them onto exit codes and
// the service onto HTTP statuses, so every throw site picks one of these.
enum class ErrorCode {
  // datasets
  kMissingFile,
  kMalformedManifest,
  kInvariantViolation,
  kMissingColumn,
  kEmptyAfterCleaning,
  kBadFraction,
  kUnknownCategory,
  kMalformedOneHot,
  // models
  kNonFiniteLoss,
  kDimensionMismatch,
  kSchemaViolation,
  kCorruptNumber,
  // explainers / metrics
  kUnsupportedCombination,
  kOutOfRange,
  kTooManyFeatures,
  kSingularSystem,
  kScaleMismatch,
  kAllPerturbationsDegenerate,
  // benchmark
  kMalformedConfig,
  kUnknownMethod,
  kMissingManifest,
  kIoFailure,
  // service
  kPortInUse,
  kUnknownDataset,
  kUnknownModel,
  kDuplicateMethod,
  kBadRequest,
  kNotFound,
  // anything that should never happen
  kInternal,
};

// snake_case identifier used in JSON error bodies and result markers.
std::string_view error_code_name(ErrorCode code);

// True for errors caused by user data or configuration (CLI exit code 2).
bool is_data_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace explainbench
