#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilsim/autopilot.hpp"
#include "hilsim/flight_dynamics.hpp"
#include "hilsim/process_link.hpp"
#include "hilsim/protocol.hpp"
#include "hilsim/rng.hpp"
#include "hilsim/scenario.hpp"
#include "hilsim/sensors.hpp"
#include "hilsim/sysid.hpp"
#include "hilsim/telemetry.hpp"

namespace hil {

inline constexpr double kPlantDt = 0.01;
inline constexpr double kControlDt = 0.02;
inline constexpr double kLinkTimeout = 2.0;
inline constexpr double kCrashDescentRate = 3.0;

struct LinkDirectionStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t corrupted = 0;

  bool operator==(const LinkDirectionStats&) const = default;
};

struct FaultLogEntry {
  double time = 0.0;
  std::string kind;
  std::string effect;

  bool operator==(const FaultLogEntry&) const = default;
};

struct RunReport {
  bool completed = false;
  int waypoints_captured = 0;
  double crosstrack_rms = 0.0;
  double crosstrack_max = 0.0;
  double altitude_rms_error = 0.0;
  bool crashed = false;
  bool landed = false;
  std::string end_reason;
  std::vector<FaultLogEntry> fault_log;
  LinkDirectionStats uplink;    // harness -> autopilot
  LinkDirectionStats downlink;  // autopilot -> harness
  std::uint64_t link_desyncs = 0;  // corrupted frames outside injected LINK_NOISE windows
  std::uint64_t nan_fields = 0;
  int autopilot_restarts = 0;
  std::vector<std::string> warnings;
  double wall_time = 0.0;
  double sim_time = 0.0;
};

/// JSON form of the report. `include_wall_time = false` yields the
/// deterministic part used for run-to-run comparison.
nlohmann::json report_to_json(const RunReport& report, bool include_wall_time = true);

/// Open-loop chirp injected on one servo channel on top of its trim pulse.
struct SweepInjection {
  ServoChannel axis = ServoChannel::Elevator;
  sysid::SweepSpec spec;       // amplitude in microseconds
  double start_time = 5.0;     // s
};

struct RunOptions {
  std::string autopilot_path;              // empty: default_autopilot_path()
  std::optional<double> time_scale;        // overrides the scenario
  std::optional<LinkKind> link;            // overrides the scenario
  std::optional<SweepInjection> sweep;
  std::function<void(const TelemetryRecord&)> on_record;
};

/// Snapshot of the most recent tick for the telemetry service.
struct TickSnapshot {
  TelemetryRecord record;
  NavMode mode = NavMode::Init;
  int current_wp = 0;
  double crosstrack = 0.0;
  LoopGains gains;
};

/// One closed-loop HIL run. The plant, sensors and fault schedule live here;
/// the autopilot lives in its own process and is reached only through the link.
class HilSession {
 public:
  HilSession(Scenario scenario, RunOptions options);
  ~HilSession();
  HilSession(const HilSession&) = delete;
  HilSession& operator=(const HilSession&) = delete;

  /// Advances one control tick (two plant steps). Returns false once the run
  /// has ended (duration limit, crash/landing, or completion).
  bool step();
  bool finished() const { return finished_; }

  /// Forces the run to end now with the given reason.
  void stop(const std::string& reason);
  RunReport report() const;

  double sim_time() const { return tick_ * kControlDt; }
  const TickSnapshot& snapshot() const { return snapshot_; }
  const Scenario& scenario() const { return scenario_; }

  // Live commands, applied between ticks.
  void set_gains(LoopId loop, const PidGains& gains);
  void upload_mission(const Mission& mission);
  void inject_fault(FaultEvent fault);
  void set_time_scale(double time_scale);
  double time_scale() const { return time_scale_; }
  /// Re-bases real-time pacing after a pause.
  void resync_clock();

 private:
  struct ActiveFault {
    FaultEvent event;
    double start = 0.0;
    double until = 0.0;
    bool finished = false;
    std::size_t log_index = 0;
    double start_altitude = 0.0;
    std::uint64_t uplink_corrupted0 = 0;
    std::uint64_t downlink_corrupted0 = 0;
  };

  void start_autopilot(double now);
  void apply_due_faults(double now);
  void begin_fault(const FaultEvent& fault, double now);
  void finish_fault(ActiveFault& active, double now, const std::string& suffix = {});
  void update_fault_windows(double now);
  void send_frames(std::vector<std::uint8_t> bytes, std::size_t frame_count, double now);
  void exchange(double now);
  void absorb_downlink(std::span<const std::uint8_t> raw, double now);
  ServoCommand applied_servo(double now) const;
  void plant_step(const ControlSurfaces& controls);
  void handle_message(const wire::Message& message, double now);
  void record_metrics(const TelemetryRecord& record);
  bool link_noise_active(double now) const;
  std::uint32_t active_fault_flags(double now) const;
  void corrupt(std::vector<std::uint8_t>& bytes);
  Vec3 wind_at_step();
  void map_waypoints();

  Scenario scenario_;
  RunOptions options_;
  double time_scale_;
  LinkKind link_kind_;
  std::string autopilot_path_;

  // plant and sensors
  RigidBodyState truth_;
  ControlSurfaces trim_controls_;
  GpsReceiver gps_;
  Gyro gyro_;
  Rng thermopile_rng_;
  Rng gps_rng_;
  Rng gyro_rng_;
  Rng link_rng_;
  Rng wind_rng_;
  Vec3 gust_;
  AttitudeEstimate estimate_;
  std::optional<GpsFix> pending_fix_;
  double last_ground_speed_ = 0.0;

  // link
  AutopilotProcess autopilot_;
  wire::StreamDecoder shadow_uplink_;    // mirrors the autopilot's decoder
  wire::StreamDecoder raw_downlink_;     // clean view, counts SERVO frames
  wire::StreamDecoder downlink_;         // what the harness actually trusts
  std::uint64_t attitudes_delivered_ = 0;
  std::uint64_t servos_seen_ = 0;
  std::vector<std::uint8_t> queued_uplink_;
  std::size_t queued_frames_ = 0;
  bool autopilot_up_ = false;
  double restart_at_ = 0.0;
  std::chrono::steady_clock::time_point last_frame_wall_;

  // autopilot-reported state
  ServoCommand servo_;
  Objectives objectives_;
  NavMode mode_ = NavMode::Init;
  int current_wp_ = 0;
  int max_wp_ = 0;
  double status_crosstrack_ = 0.0;
  LoopGains gains_echo_;
  std::map<LoopId, PidGains> gain_overrides_;

  // faults
  std::vector<FaultEvent> schedule_;
  std::size_t next_fault_ = 0;
  std::vector<ActiveFault> active_;

  // bookkeeping
  std::vector<Ned> wp_ned_;
  std::optional<Ned> leg_start_;
  std::uint64_t tick_ = 0;
  bool finished_ = false;
  RunReport report_;
  double xt_sum_sq_ = 0.0;
  std::uint64_t xt_samples_ = 0;
  double alt_sum_sq_ = 0.0;
  std::uint64_t alt_samples_ = 0;
  bool guard_warned_ = false;
  std::chrono::steady_clock::time_point wall_start_;
  std::chrono::steady_clock::time_point pace_base_;
  double pace_base_sim_ = 0.0;
  TickSnapshot snapshot_;
};

/// Runs a scenario to completion. Throws AutopilotSpawnFailure / LinkTimeout.
RunReport run_scenario(const Scenario& scenario, const RunOptions& options = {});

}  // namespace hil
