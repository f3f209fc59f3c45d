#pragma once

#include <stdexcept>
#include <string>

namespace esgraph {

// Error categories map 1:1 to CLI exit codes.
enum class ErrorCategory {
  kInternal = 1,
  kConfig = 2,
  kIo = 3,
  kCheckpoint = 4,
  kFormat = 5,
  kDomain = 6,
  kUsage = 7,
};

const char* to_string(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }
  int exit_code() const { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

[[noreturn]] void fail(ErrorCategory category, const std::string& message);

}  // namespace esgraph
