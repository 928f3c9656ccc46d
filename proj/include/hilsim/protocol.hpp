#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace hil::wire {

inline constexpr std::uint8_t kSync0 = 0xA5;
inline constexpr std::uint8_t kSync1 = 0x5A;
inline constexpr std::size_t kMaxPayload = 64;
inline constexpr std::size_t kFrameOverhead = 6;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data,
                                std::uint16_t crc = 0xFFFF) noexcept;

enum class MsgType : std::uint8_t {
  Attitude = 0x01,
  Gps = 0x02,
  Servo = 0x10,
  Objectives = 0x11,
  SetGains = 0x20,
  MissionItem = 0x21,
  MissionInfo = 0x22,
  Status = 0x30,
  GainsAck = 0x31,
};

struct AttitudeMsg {
  std::int16_t roll_cdeg = 0;
  std::int16_t pitch_cdeg = 0;
  std::uint16_t heading_cdeg = 0;  // [0, 36000)
  std::int16_t yaw_rate_cdps = 0;
  bool operator==(const AttitudeMsg&) const = default;
};

inline constexpr std::uint16_t kGpsFlagValid = 0x0001;

struct GpsMsg {
  std::int32_t lat_e7 = 0;
  std::int32_t lon_e7 = 0;
  std::int32_t alt_cm = 0;
  std::uint16_t ground_speed_cms = 0;
  std::uint16_t course_cdeg = 0;  // [0, 36000)
  std::uint16_t flags = 0;
  bool operator==(const GpsMsg&) const = default;
};

struct ServoMsg {
  std::uint16_t aileron_us = 1500;
  std::uint16_t elevator_us = 1500;
  std::uint16_t rudder_us = 1500;
  std::uint16_t throttle_us = 1000;
  bool operator==(const ServoMsg&) const = default;
};

/// Autopilot guidance objectives, echoed every control tick for logging.
struct ObjectivesMsg {
  std::int16_t roll_cdeg = 0;
  std::int16_t pitch_cdeg = 0;
  std::uint16_t heading_cdeg = 0;
  std::uint16_t speed_cms = 0;
  bool operator==(const ObjectivesMsg&) const = default;
};

struct SetGainsMsg {
  std::uint8_t loop_id = 0;  // 0 roll, 1 pitch, 2 heading, 3 speed
  float kp = 0.0f;
  float ki = 0.0f;
  float kd = 0.0f;
  float integrator_limit = 0.0f;
  std::int16_t output_min_milli = -1000;
  std::int16_t output_max_milli = 1000;
  bool operator==(const SetGainsMsg&) const = default;
};

inline constexpr std::uint8_t kWaypointFlyover = 0;
inline constexpr std::uint8_t kWaypointLoiter = 1;

struct MissionItemMsg {
  std::uint8_t index = 0;
  std::uint8_t kind = kWaypointFlyover;
  std::int32_t lat_e7 = 0;
  std::int32_t lon_e7 = 0;
  std::int32_t alt_cm = 0;
  std::uint32_t param = 0;  // loiter radius in cm, 0 for flyover
  std::uint8_t count = 1;
  std::uint8_t capture_m = 1;
  bool operator==(const MissionItemMsg&) const = default;
};

inline constexpr std::uint8_t kMissionFlagCrosstrack = 0x01;
inline constexpr std::uint8_t kMissionFlagLoiterCcw = 0x02;

struct MissionInfoMsg {
  std::uint8_t index = 0;
  std::uint8_t flags = 0;
  std::uint16_t cruise_speed_cms = 0;
  std::uint16_t loiter_duration_s = 0;  // 0 = indefinite
  std::uint8_t resume_index = 0;
  std::uint8_t reserved = 0;
  bool operator==(const MissionInfoMsg&) const = default;
};

enum class Mode : std::uint8_t { Init = 0, Nav = 1, Loiter = 2, Complete = 3 };

struct StatusMsg {
  std::uint32_t uptime_ms = 0;
  std::uint8_t current_wp = 0;
  std::uint8_t mode = 0;
  std::int16_t crosstrack_dm = 0;
  std::uint8_t loop_load_pct = 0;
  std::uint8_t fault_flags = 0;
  std::uint16_t reserved = 0;
  bool operator==(const StatusMsg&) const = default;
};

inline constexpr std::uint8_t kGainsApplied = 0;
inline constexpr std::uint8_t kGainsRejected = 1;

struct GainsAckMsg {
  SetGainsMsg gains;
  std::uint8_t result = kGainsApplied;
  bool operator==(const GainsAckMsg&) const = default;
};

using Message = std::variant<AttitudeMsg, GpsMsg, ServoMsg, ObjectivesMsg, SetGainsMsg,
                             MissionItemMsg, MissionInfoMsg, StatusMsg, GainsAckMsg>;

MsgType type_of(const Message& m) noexcept;

/// Declared payload length of a known type, 0 for unknown types.
std::size_t payload_length(std::uint8_t msg_type) noexcept;

/// Serializes sync, type, len, payload and big-endian CRC. Throws
/// FieldOutOfRange when a field violates its documented range.
std::vector<std::uint8_t> encode_frame(const Message& message);
void append_frame(std::vector<std::uint8_t>& out, const Message& message);

struct DecodeStats {
  std::uint64_t frames = 0;
  std::uint64_t corrupted = 0;
  std::uint64_t unknown = 0;
};

/// Incremental resynchronizing parser. One instance per link direction.
class StreamDecoder {
 public:
  /// Consumes bytes and appends complete messages to `out`. Returns the
  /// number of corrupted frames detected during this call.
  std::size_t feed(std::span<const std::uint8_t> bytes, std::vector<Message>& out);

  std::span<const std::uint8_t> pending() const { return buffer_; }
  const DecodeStats& stats() const { return stats_; }
  void reset() {
    buffer_.clear();
    stats_ = {};
  }

 private:
  std::vector<std::uint8_t> buffer_;
  DecodeStats stats_;
};

struct DecodeResult {
  std::vector<Message> messages;
  std::vector<std::uint8_t> remaining;
  std::size_t errors = 0;
};

/// Stateless form: parses `buffer`, returns the messages, the partial trailing
/// frame (if any) and the corrupted-frame count. Never throws.
DecodeResult decode_stream(std::span<const std::uint8_t> buffer);

/// Scaled-integer field descriptor: wire = round_half_away(value * scale).
struct FieldSpec {
  double scale;
  std::int64_t min_count;
  std::int64_t max_count;
};

namespace fields {
inline constexpr FieldSpec kAngleCdeg{100.0, -32768, 32767};
inline constexpr FieldSpec kHeadingCdeg{100.0, 0, 35999};
inline constexpr FieldSpec kRateCdps{100.0, -32768, 32767};
inline constexpr FieldSpec kLatitudeE7{1e7, -900000000, 900000000};
inline constexpr FieldSpec kLongitudeE7{1e7, -1800000000, 1800000000};
inline constexpr FieldSpec kAltitudeCm{100.0, INT32_MIN, INT32_MAX};
inline constexpr FieldSpec kSpeedCms{100.0, 0, 65535};
inline constexpr FieldSpec kCrosstrackDm{10.0, -32768, 32767};
inline constexpr FieldSpec kPulseUs{1.0, 1000, 2000};
inline constexpr FieldSpec kMilli{1000.0, -32768, 32767};
}  // namespace fields

/// Throws FieldOutOfRange when the scaled value falls outside the field range.
std::int64_t scale_to_wire(double value, const FieldSpec& spec);
double wire_to_physical(std::int64_t count, const FieldSpec& spec);

/// Heading in degrees to [0, 36000) centidegrees, wrapping instead of throwing.
std::uint16_t heading_to_wire(double degrees);

}  // namespace hil::wire
