#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace selrag {

// Closed set of failure kinds. The C API maps each one onto a status code.
enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kDuplicateId,
  kParse,
  kIo,
  kTransport,
  kStatus,
  kScriptMiss,
  kJudge,
  kPrecondition,
  kBackend,
  kInternal,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace selrag
