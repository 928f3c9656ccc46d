#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hilsim/autopilot.hpp"
#include "hilsim/flight_dynamics.hpp"
#include "hilsim/geodesy.hpp"
#include "hilsim/sensors.hpp"

namespace hil {

enum class FaultKind : std::uint8_t {
  PowerBrownout,
  GpsDropout,
  ServoStuck,
  GyroBiasJump,
  LinkNoise,
};

enum class ServoChannel : std::uint8_t { Aileron = 0, Elevator = 1, Rudder = 2, Throttle = 3 };

const char* to_string(FaultKind kind) noexcept;
const char* to_string(ServoChannel channel) noexcept;
FaultKind fault_kind_from_string(const std::string& name);
ServoChannel servo_channel_from_string(const std::string& name);

/// Bit assigned to each fault kind in telemetry fault_flags.
constexpr std::uint32_t fault_bit(FaultKind kind) { return 1u << static_cast<unsigned>(kind); }

struct FaultEvent {
  double at_time = 0.0;
  FaultKind kind = FaultKind::PowerBrownout;
  double reset_delay = 0.0;       // POWER_BROWNOUT
  double duration = 0.0;          // GPS_DROPOUT, SERVO_STUCK, LINK_NOISE
  ServoChannel channel = ServoChannel::Aileron;
  std::uint16_t pulse_us = 1500;  // SERVO_STUCK
  double bias_jump = 0.0;         // GYRO_BIAS_JUMP, rad/s
  double byte_error_rate = 0.0;   // LINK_NOISE

  bool operator==(const FaultEvent&) const = default;
  void validate() const;
};

void to_json(nlohmann::json& j, const FaultEvent& f);
void from_json(const nlohmann::json& j, FaultEvent& f);

/// Constant wind plus first-order Gauss-Markov gusts per axis.
struct WindModel {
  Vec3 mean_ned;
  double gust_sd = 0.0;   // m/s
  double gust_tau = 2.0;  // s

  bool operator==(const WindModel&) const = default;
};

struct InitialCondition {
  double airspeed = 18.0;
  double altitude = 100.0;  // m MSL
  double heading_deg = 0.0;

  bool operator==(const InitialCondition&) const = default;
};

enum class LinkKind : std::uint8_t { Pipe, Tcp };

struct Scenario {
  AirframeConfig airframe = default_trainer();
  SensorEnvironment environment;
  Mission mission;
  GeoOrigin origin;
  InitialCondition initial;
  double time_scale = 0.0;
  double duration_limit = 600.0;
  std::vector<FaultEvent> faults;
  std::uint64_t seed = 42;
  WindModel wind;
  std::map<LoopId, PidGains> gains;  // overrides sent over the link at start
  bool stop_on_complete = true;
  LinkKind link = LinkKind::Tcp;

  void validate() const;
};

/// Parses a scenario document. `airframe` may be an inline object or a path
/// resolved relative to `base_dir`.
Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);

void to_json(nlohmann::json& j, const Mission& m);
void from_json(const nlohmann::json& j, Mission& m);
void to_json(nlohmann::json& j, const PidGains& g);
void from_json(const nlohmann::json& j, PidGains& g);
const char* to_string(LoopId loop) noexcept;
LoopId loop_id_from_string(const std::string& name);

}  // namespace hil
