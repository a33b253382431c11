#pragma once

#include <stdexcept>
#include <string>

namespace anglereloc {

enum class ErrorCode {
  kIndexMismatch,
  kDimensionMismatch,
  kMissingPose,
  kConfigError,
  kParseError,
  kNonRigid,
  kDegenerate,
  kPrecondition,
  kNoGeometry,
  kInfeasibleViewpoint,
  kIo,
};

const char* ErrorCodeName(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace anglereloc
