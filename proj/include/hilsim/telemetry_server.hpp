#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilsim/autopilot.hpp"
#include "hilsim/harness.hpp"
#include "hilsim/scenario.hpp"

namespace hil {

inline constexpr int kTelemetrySchemaVersion = 1;
inline constexpr int kTelemetryDecimation = 3;  // 50 Hz ticks -> 16.7 Hz stream

namespace command {
// Only the fields present in `fields` change; the rest keep their current value.
struct SetGains { LoopId loop; nlohmann::json fields; };
struct UploadMission { Mission mission; };
struct InjectFault { FaultEvent fault; };
struct Pause {};
struct Resume {};
struct SetTimeScale { double time_scale; };
}  // namespace command

using Command = std::variant<command::SetGains, command::UploadMission, command::InjectFault,
                             command::Pause, command::Resume, command::SetTimeScale>;

struct ParsedCommand {
  Command command;
  nlohmann::json id;  // echoed back, null when absent
  std::string name;
};

/// Validates and decodes one inbound JSON command. Throws MalformedCommand
/// with a human-readable reason.
ParsedCommand parse_command(const std::string& text);

nlohmann::json make_ack(const ParsedCommand& cmd, const nlohmann::json& applied);
nlohmann::json make_error(const std::string& reason, const std::string& echo);
nlohmann::json telemetry_json(const TickSnapshot& snapshot);

/// WebSocket service: broadcasts text frames to every client and queues
/// inbound text for the simulation thread. Runs its own I/O thread.
class TelemetryServer {
 public:
  /// Binds 127.0.0.1:port (0 = ephemeral). Throws PortUnavailable.
  explicit TelemetryServer(std::uint16_t port);
  ~TelemetryServer();
  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;

  std::uint16_t port() const;
  void broadcast(std::string text);
  std::vector<std::string> take_inbound();
  std::size_t client_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Starts the service for a running session.
std::unique_ptr<TelemetryServer> serve_telemetry(std::uint16_t port);

/// Drives a session with the service attached: drains commands between ticks,
/// publishes decimated telemetry, honours pause/resume. Returns the report.
RunReport run_served(HilSession& session, TelemetryServer& server);

/// Applies one parsed command to a session, returning the applied-values echo.
nlohmann::json apply_command(HilSession& session, const ParsedCommand& cmd, bool& paused);

/// Streams a recorded log as telemetry objects; pause/resume/set_time_scale
/// are honoured, other commands are rejected (the log is read-only).
void replay_log(const std::vector<TelemetryRecord>& records, TelemetryServer& server,
                double time_scale = 1.0);

}  // namespace hil
