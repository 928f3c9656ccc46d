#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "hilsim/geodesy.hpp"
#include "hilsim/pid.hpp"
#include "hilsim/protocol.hpp"
#include "hilsim/sensors.hpp"

namespace hil {

enum class WaypointKind : std::uint8_t { Flyover = 0, Loiter = 1 };

struct Waypoint {
  double latitude = 0.0;
  double longitude = 0.0;
  double altitude = 0.0;        // m MSL
  double capture_radius = 30.0;
  WaypointKind kind = WaypointKind::Flyover;
  double loiter_radius = 0.0;   // m, LOITER only
  double loiter_duration = 0.0; // s, 0 = indefinitely

  bool operator==(const Waypoint&) const = default;
  void validate() const;
};

struct Mission {
  std::vector<Waypoint> waypoints;
  double cruise_speed = 18.0;
  bool crosstrack_enabled = true;
  bool loiter_clockwise = true;

  bool operator==(const Mission&) const = default;
  void validate() const;
};

struct Objectives {
  double roll_cmd = 0.0;
  double pitch_cmd = 0.0;
  double heading_cmd = 0.0;
  double speed_cmd = 0.0;
};

enum class NavMode : std::uint8_t { Init = 0, Nav = 1, Loiter = 2, Complete = 3 };

struct NavState {
  Ned position;
  AttitudeEstimate attitude;
  double ground_speed = 0.0;
  std::size_t current_wp_index = 0;
  double loiter_elapsed = 0.0;
  NavMode mode = NavMode::Nav;
  double crosstrack = 0.0;  // m, last computed (0 when no leg)
  // Start of the active leg when it did not begin at a waypoint (after a
  // loiter the leg runs from the exit point).
  std::optional<Ned> leg_start;
};

struct GuidanceParams {
  double course_gain = 1.0;                 // rad roll per rad heading error
  double roll_limit = 30.0 * kDegToRad;
  double altitude_gain = 0.01;              // rad pitch per m
  // Level-flight pitch at cruise, added before the clamp so the altitude
  // loop does not need a standing error to hold it (trainer at 18 m/s).
  double cruise_pitch = 1.8 * kDegToRad;
  double pitch_limit = 15.0 * kDegToRad;
  double crosstrack_gain = 0.01;            // rad per m of crosstrack error
  double crosstrack_max = 45.0 * kDegToRad;
  double loiter_lookahead = 40.0;           // m
  double final_loiter_radius = 80.0;        // m, when the last waypoint is a flyover
  // A timed loiter is left only once the heading points within this angle of
  // the next waypoint; pi leaves as soon as the duration has elapsed.
  double loiter_exit_alignment = 25.0 * kDegToRad;
};

struct SequencerOutput {
  Objectives objectives;
  NavState nav;
};

/// Signed perpendicular distance from `position` to the horizontal line
/// prev->next, positive right of track. Throws DegenerateLeg when the
/// waypoints are within 1 m horizontally.
double crosstrack_error(const Ned& prev_wp, const Ned& next_wp, const Ned& position);

/// Waypoint sequencer (upper layer). Waypoints are mapped into the NED frame
/// of `nav_origin`; `nav.position` must be in the same frame.
SequencerOutput sequencer_step(const NavState& nav, const Mission& mission,
                               const GeoOrigin& nav_origin, double dt,
                               const GuidanceParams& params = {});

enum class LoopId : std::uint8_t { Roll = 0, Pitch = 1, Heading = 2, Speed = 3 };
inline constexpr std::size_t kLoopCount = 4;

struct LoopGains {
  std::array<PidGains, kLoopCount> loops;
  PidGains& operator[](LoopId id) { return loops[static_cast<std::size_t>(id)]; }
  const PidGains& operator[](LoopId id) const { return loops[static_cast<std::size_t>(id)]; }
};

struct LoopStates {
  std::array<PidState, kLoopCount> loops;
  PidState& operator[](LoopId id) { return loops[static_cast<std::size_t>(id)]; }
};

/// Shipped gains, tuned closed-loop against the default trainer.
LoopGains default_gains();

/// Neutral offsets added to each loop's output before pulse mapping.
struct ActuatorTrim {
  double aileron = 0.0;
  double elevator = 0.0;
  double rudder = 0.0;
  double throttle = 0.1;
};

struct ServoCommand {
  std::uint16_t aileron_us = 1500;
  std::uint16_t elevator_us = 1500;
  std::uint16_t rudder_us = 1500;
  std::uint16_t throttle_us = 1000;

  bool operator==(const ServoCommand&) const = default;
};

/// Normalized surface in [-1, 1] -> [1000, 2000] us centred on 1500;
/// throttle in [0, 1] -> [1000, 2000] us.
std::uint16_t surface_to_pulse(double normalized);
std::uint16_t throttle_to_pulse(double normalized);
ControlSurfaces pulses_to_controls(const ServoCommand& servo);

/// PID layer (lower layer): four loops, roll->aileron, pitch->elevator,
/// heading->rudder (wrapped error), ground speed->throttle.
ServoCommand control_step(const Objectives& objectives, const AttitudeEstimate& estimate,
                          double ground_speed, const LoopGains& gains, LoopStates& states,
                          double dt, const ActuatorTrim& trim = {});

/// The autopilot as a message-driven state machine. All inputs arrive as wire
/// messages; every ATTITUDE message runs one control tick and produces the
/// outbound frames for that tick (SERVO always last).
class Autopilot {
 public:
  struct Config {
    double control_dt = 0.02;
    int status_divider = 10;  // STATUS every 10 ticks = 5 Hz at 50 Hz
    GuidanceParams guidance;
    ActuatorTrim trim;
    LoopGains gains = default_gains();
    double default_speed = 18.0;
  };

  Autopilot();
  explicit Autopilot(Config config);

  /// Processes one inbound message; returns any frames to send.
  std::vector<wire::Message> handle(const wire::Message& message);

  /// Applies gains to one loop and resets its integrator.
  void set_gains(LoopId loop, const PidGains& gains);
  const PidGains& gains(LoopId loop) const { return config_.gains[loop]; }

  const NavState& nav() const { return nav_; }
  const Objectives& objectives() const { return objectives_; }
  const std::optional<Mission>& mission() const { return mission_; }
  std::uint64_t ticks() const { return ticks_; }

 private:
  std::vector<wire::Message> on_attitude(const wire::AttitudeMsg& att);
  void on_gps(const wire::GpsMsg& gps);
  void on_mission_item(const wire::MissionItemMsg& item);
  void on_mission_info(const wire::MissionInfoMsg& info);
  void try_activate_mission();
  wire::GainsAckMsg on_set_gains(const wire::SetGainsMsg& msg);

  Config config_;
  LoopStates states_;
  NavState nav_;
  Objectives objectives_;
  std::optional<Mission> mission_;
  std::optional<GeoOrigin> nav_origin_;
  Geodetic last_fix_geo_;
  std::uint64_t last_fix_tick_ = 0;
  bool have_position_ = false;
  std::uint64_t ticks_ = 0;
  NavMode reported_mode_ = NavMode::Init;
  std::size_t reported_wp_ = 0;

  struct PendingItem {
    std::optional<wire::MissionItemMsg> item;
    std::optional<wire::MissionInfoMsg> info;
  };
  std::vector<PendingItem> upload_;
};

wire::SetGainsMsg gains_to_wire(LoopId loop, const PidGains& gains);
PidGains gains_from_wire(const wire::SetGainsMsg& msg, const PidGains& base = {});

/// Mission upload sequence: per waypoint one MISSION_ITEM then one MISSION_INFO.
std::vector<wire::Message> mission_to_wire(const Mission& mission, std::uint8_t resume_index = 0);

}  // namespace hil
