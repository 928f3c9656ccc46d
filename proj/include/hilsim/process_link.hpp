#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <sys/types.h>
#include <vector>

#include "hilsim/scenario.hpp"

namespace hil {

/// A child autopilot process joined to the harness by one byte stream
/// (socketpair-free: either a pair of pipes or a loopback TCP connection).
/// The child gets nothing but its link descriptor on the command line.
class AutopilotProcess {
 public:
  /// Throws AutopilotSpawnFailure if the executable cannot be started or
  /// the link cannot be established.
  static AutopilotProcess spawn(const std::string& executable, LinkKind link);

  AutopilotProcess() = default;
  AutopilotProcess(AutopilotProcess&& other) noexcept;
  AutopilotProcess& operator=(AutopilotProcess&& other) noexcept;
  AutopilotProcess(const AutopilotProcess&) = delete;
  AutopilotProcess& operator=(const AutopilotProcess&) = delete;
  ~AutopilotProcess();

  bool running() const { return pid_ > 0; }
  pid_t pid() const { return pid_; }

  /// Writes all bytes; returns false if the peer is gone.
  bool write_all(std::span<const std::uint8_t> bytes);

  enum class ReadStatus { Data, Timeout, Closed };

  /// Waits up to `timeout` for data and appends whatever is available.
  ReadStatus read_some(std::vector<std::uint8_t>& out, std::chrono::milliseconds timeout);

  /// SIGKILL and reap.
  void kill();

 private:
  pid_t pid_ = -1;
  int read_fd_ = -1;
  int write_fd_ = -1;
};

/// Default autopilot executable: $HIL_AUTOPILOT, else `hil_autopilot` next to
/// the running executable.
std::string default_autopilot_path();

}  // namespace hil
