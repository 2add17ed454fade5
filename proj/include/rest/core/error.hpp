#pragma once

#include <stdexcept>
#include <string>

namespace rest {

// Every failure the engine reports carries one of these codes. The CLI maps
// them onto process exit codes (see exit_code_for).
enum class ErrorCode {
  kConfig,
  kInvalidArgument,
  kMissingFile,
  kMissingBlob,
  kDimMismatch,
  kDuplicateId,
  kUnknownId,
  kParse,
  kDegenerate,
  kNumeric,
  kProvider,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

const char* to_string(ErrorCode code) noexcept;

// 2 config error, 3 data error, 4 numeric failure.
int exit_code_for(ErrorCode code) noexcept;

}  // namespace rest
