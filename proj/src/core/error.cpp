#include "rest/core/error.hpp"

namespace rest {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kMissingFile: return "missing file";
    case ErrorCode::kMissingBlob: return "missing blob";
    case ErrorCode::kDimMismatch: return "dim mismatch";
    case ErrorCode::kDuplicateId: return "duplicate id";
    case ErrorCode::kUnknownId: return "unknown id";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kDegenerate: return "degenerate embedding";
    case ErrorCode::kNumeric: return "numeric failure";
    case ErrorCode::kProvider: return "provider failure";
  }
  return "unknown error";
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
      return 2;
    case ErrorCode::kNumeric:
      return 4;
    default:
      return 3;
  }
}

}  // namespace rest
