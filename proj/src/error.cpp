#include "selrag/error.hpp"

namespace selrag {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kStatus: return "status";
    case ErrorCode::kScriptMiss: return "script_miss";
    case ErrorCode::kJudge: return "judge";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kBackend: return "backend";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace selrag
