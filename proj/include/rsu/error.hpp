#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsu {

enum class ErrorCode {
  parse,
  validation,
  duplicate,
  not_found,
  precondition,
  backend_unavailable,
  backend_timeout,
  malformed_response,
  missing_ground_truth,
  pool_exhausted,
  network,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library. `context` names the offending file,
// record or entry when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string context = {})
      : std::runtime_error(context.empty() ? message : context + ": " + message),
        code_(code),
        context_(std::move(context)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& context() const noexcept { return context_; }

  bool is_backend_failure() const noexcept {
    return code_ == ErrorCode::backend_unavailable || code_ == ErrorCode::backend_timeout ||
           code_ == ErrorCode::malformed_response || code_ == ErrorCode::missing_ground_truth;
  }

 private:
  ErrorCode code_;
  std::string context_;
};

}  // namespace rsu
