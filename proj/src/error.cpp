#include "esgraph/error.hpp"

namespace esgraph {

const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kInternal:
      return "internal";
    case ErrorCategory::kConfig:
      return "config";
    case ErrorCategory::kIo:
      return "io";
    case ErrorCategory::kCheckpoint:
      return "checkpoint";
    case ErrorCategory::kFormat:
      return "format";
    case ErrorCategory::kDomain:
      return "domain";
    case ErrorCategory::kUsage:
      return "usage";
  }
  return "unknown";
}

void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace esgraph
