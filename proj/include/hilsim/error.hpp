#pragma once

#include <stdexcept>
#include <string>

namespace hil {

enum class ErrorCode {
  InvalidConfig,
  NonFiniteState,
  StepTooLarge,
  TrimNotFound,
  OutOfFlatEarthRange,
  DegenerateCalibration,
  DegenerateLeg,
  InvalidGains,
  FieldOutOfRange,
  NyquistViolation,
  DegenerateInput,
  MissingColumn,
  AutopilotSpawnFailure,
  LinkTimeout,
  PortUnavailable,
  MalformedCommand,
  IoFailure,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI, bindings, WebSocket service) can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hil
