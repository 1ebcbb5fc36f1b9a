// SPDX-License-Identifier: Apache-2.0
#include "mind/error.hpp"

namespace mind {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyBin: return "EmptyBin";
    case ErrorCode::InsufficientFrames: return "InsufficientFrames";
    case ErrorCode::WindowTooLong: return "WindowTooLong";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::UnknownSubject: return "UnknownSubject";
    case ErrorCode::UnknownExpert: return "UnknownExpert";
    case ErrorCode::DegenerateGate: return "DegenerateGate";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::NonDeterministic: return "NonDeterministic";
    case ErrorCode::ScheduleExhausted: return "ScheduleExhausted";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::NeedMultipleSubjects: return "NeedMultipleSubjects";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::EmptyReport: return "EmptyReport";
  }
  return "UnknownError";
}

}  // namespace mind
