#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsqn {

enum class ErrorCode {
  InvalidAction,
  NonFiniteInput,
  EmptyVector,
  ShapeMismatch,
  TraceMismatch,
  NotEnoughSamples,
  OutputSpiked,
  AlreadyQuantized,
  FloatModelNotSweepable,
  DimensionMismatch,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code; the CLI
// prints it as `error: <Code>: <message>`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dsqn
