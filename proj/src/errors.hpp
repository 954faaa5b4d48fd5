#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sensdecay {

enum class ErrorCode {
  InvalidArgument = 1,
  DimensionMismatch = 2,
  Validation = 3,
  NotPositiveDefinite = 4,
  Numeric = 5,
  Divergence = 6,
  Solver = 7,
  Precondition = 8,
  Config = 9,
  Io = 10,
  Unsupported = 11,
  Internal = 12,
};

/// All hard failures in the library are thrown as Error; soft outcomes
/// (non-convergence, skipped bound targets) travel in report structs instead.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace sensdecay
