#include "aot/error.hpp"

namespace aot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoBoxedAnswer: return "NoBoxedAnswer";
    case ErrorCode::kNoSteps: return "NoSteps";
    case ErrorCode::kNonSequentialSteps: return "NonSequentialSteps";
    case ErrorCode::kNoCodeFound: return "NoCodeFound";
    case ErrorCode::kNoMainFunction: return "NoMainFunction";
    case ErrorCode::kUnannotatedPiece: return "UnannotatedPiece";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kUnknownDataset: return "UnknownDataset";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kSampleTooLarge: return "SampleTooLarge";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kTemplateModalityMismatch: return "TemplateModalityMismatch";
    case ErrorCode::kWrongDemoCount: return "WrongDemoCount";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kExecutorUnavailable: return "ExecutorUnavailable";
    case ErrorCode::kCoverageMismatch: return "CoverageMismatch";
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace aot
