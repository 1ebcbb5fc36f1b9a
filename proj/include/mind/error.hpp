// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mind {

enum class ErrorCode {
  InvalidShape,
  NonFiniteInput,
  EmptyBin,
  InsufficientFrames,
  WindowTooLong,
  EmptySequence,
  UnknownSubject,
  UnknownExpert,
  DegenerateGate,
  StaleCache,
  NonDeterministic,
  ScheduleExhausted,
  DegenerateTarget,
  NeedMultipleSubjects,
  InvalidSpec,
  IoError,
  ConfigMismatch,
  EmptyReport,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mind
