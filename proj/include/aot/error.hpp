#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aot {

enum class ErrorCode {
  kNoBoxedAnswer,
  kNoSteps,
  kNonSequentialSteps,
  kNoCodeFound,
  kNoMainFunction,
  kUnannotatedPiece,
  kMalformedRecord,
  kDuplicateId,
  kUnknownDataset,
  kEmptyCorpus,
  kSampleTooLarge,
  kLengthMismatch,
  kTemplateModalityMismatch,
  kWrongDemoCount,
  kBackendUnavailable,
  kExecutorUnavailable,
  kCoverageMismatch,
  kUnknownTask,
  kUnknownLabel,
  kInvalidArgument,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as aot::Error; code() identifies the
// failure class so callers (notably the CLI exit-code mapping) can branch.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace aot
