#include "hilsim/error.hpp"

namespace hil {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::TrimNotFound: return "TrimNotFound";
    case ErrorCode::OutOfFlatEarthRange: return "OutOfFlatEarthRange";
    case ErrorCode::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::DegenerateLeg: return "DegenerateLeg";
    case ErrorCode::InvalidGains: return "InvalidGains";
    case ErrorCode::FieldOutOfRange: return "FieldOutOfRange";
    case ErrorCode::NyquistViolation: return "NyquistViolation";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::AutopilotSpawnFailure: return "AutopilotSpawnFailure";
    case ErrorCode::LinkTimeout: return "LinkTimeout";
    case ErrorCode::PortUnavailable: return "PortUnavailable";
    case ErrorCode::MalformedCommand: return "MalformedCommand";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace hil
