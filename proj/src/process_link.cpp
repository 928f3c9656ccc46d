#include "hilsim/process_link.hpp"

#include <arpa/inet.h>
#include <dlfcn.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>

#include "hilsim/error.hpp"

namespace hil {

namespace {

void ignore_sigpipe() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

[[noreturn]] void spawn_failure(const std::string& msg) {
  throw Error(ErrorCode::AutopilotSpawnFailure, msg);
}

// Forks and execs `exe --link <descriptor>`. `setup_child` runs in the child
// before exec. Exec errors come back through a close-on-exec pipe.
template <typename ChildSetup>
pid_t fork_exec(const std::string& exe, const std::string& descriptor, ChildSetup&& setup_child) {
  int status_pipe[2];
  if (::pipe2(status_pipe, O_CLOEXEC) != 0) spawn_failure(std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(status_pipe[0]);
    ::close(status_pipe[1]);
    spawn_failure(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::close(status_pipe[0]);
    setup_child();
    const char* argv[] = {exe.c_str(), "--link", descriptor.c_str(), nullptr};
    ::execv(exe.c_str(), const_cast<char* const*>(argv));
    const int err = errno;
    [[maybe_unused]] auto n = ::write(status_pipe[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(status_pipe[1]);
  int child_errno = 0;
  ssize_t n;
  do {
    n = ::read(status_pipe[0], &child_errno, sizeof child_errno);
  } while (n < 0 && errno == EINTR);
  ::close(status_pipe[0]);
  if (n > 0) {
    ::waitpid(pid, nullptr, 0);
    spawn_failure("cannot execute " + exe + ": " + std::strerror(child_errno));
  }
  return pid;
}

}  // namespace

AutopilotProcess AutopilotProcess::spawn(const std::string& executable, LinkKind link) {
  ignore_sigpipe();
  if (::access(executable.c_str(), X_OK) != 0) {
    spawn_failure("autopilot executable not found or not executable: " + executable);
  }
  AutopilotProcess p;
  if (link == LinkKind::Pipe) {
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) spawn_failure(std::strerror(errno));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      spawn_failure(std::strerror(errno));
    }
    p.pid_ = fork_exec(executable, "stdio", [&] {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
    });
    ::close(to_child[0]);
    ::close(from_child[1]);
    p.write_fd_ = to_child[1];
    p.read_fd_ = from_child[0];
    return p;
  }

  const int listener = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listener < 0) spawn_failure(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listener, 1) != 0 ||
      ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    const std::string err = std::strerror(errno);
    ::close(listener);
    spawn_failure("loopback listen: " + err);
  }
  const std::string descriptor = "tcp:127.0.0.1:" + std::to_string(ntohs(addr.sin_port));
  try {
    p.pid_ = fork_exec(executable, descriptor, [] {});
  } catch (...) {
    ::close(listener);
    throw;
  }

  int conn = -1;
  for (int waited_ms = 0; waited_ms < 10000 && conn < 0; waited_ms += 50) {
    pollfd pfd{listener, POLLIN, 0};
    if (::poll(&pfd, 1, 50) > 0) {
      conn = ::accept4(listener, nullptr, nullptr, SOCK_CLOEXEC);
    } else if (::waitpid(p.pid_, nullptr, WNOHANG) == p.pid_) {
      p.pid_ = -1;
      break;
    }
  }
  ::close(listener);
  if (conn < 0) {
    p.kill();
    spawn_failure("autopilot did not connect to " + descriptor);
  }
  const int one = 1;
  ::setsockopt(conn, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  p.read_fd_ = conn;
  p.write_fd_ = ::dup(conn);
  ::fcntl(p.write_fd_, F_SETFD, FD_CLOEXEC);
  return p;
}

AutopilotProcess::AutopilotProcess(AutopilotProcess&& o) noexcept
    : pid_(o.pid_), read_fd_(o.read_fd_), write_fd_(o.write_fd_) {
  o.pid_ = -1;
  o.read_fd_ = -1;
  o.write_fd_ = -1;
}

AutopilotProcess& AutopilotProcess::operator=(AutopilotProcess&& o) noexcept {
  if (this != &o) {
    kill();
    pid_ = o.pid_;
    read_fd_ = o.read_fd_;
    write_fd_ = o.write_fd_;
    o.pid_ = -1;
    o.read_fd_ = -1;
    o.write_fd_ = -1;
  }
  return *this;
}

AutopilotProcess::~AutopilotProcess() { kill(); }

bool AutopilotProcess::write_all(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    if (write_fd_ < 0) return false;
    const ssize_t n = ::write(write_fd_, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

AutopilotProcess::ReadStatus AutopilotProcess::read_some(std::vector<std::uint8_t>& out,
                                                         std::chrono::milliseconds timeout) {
  if (read_fd_ < 0) return ReadStatus::Closed;
  pollfd pfd{read_fd_, POLLIN, 0};
  int r;
  do {
    r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  } while (r < 0 && errno == EINTR);
  if (r == 0) return ReadStatus::Timeout;
  if (r < 0) return ReadStatus::Closed;
  std::uint8_t buf[8192];
  ssize_t n;
  do {
    n = ::read(read_fd_, buf, sizeof buf);
  } while (n < 0 && errno == EINTR);
  if (n <= 0) return ReadStatus::Closed;
  out.insert(out.end(), buf, buf + n);
  return ReadStatus::Data;
}

void AutopilotProcess::kill() {
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    while (::waitpid(pid_, nullptr, 0) < 0 && errno == EINTR) {
    }
    pid_ = -1;
  }
  close_fd(read_fd_);
  close_fd(write_fd_);
}

std::string default_autopilot_path() {
  namespace fs = std::filesystem;
  if (const char* env = std::getenv("HIL_AUTOPILOT"); env && *env) return env;
  std::vector<fs::path> dirs;
  std::error_code ec;
  const fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) dirs.push_back(exe.parent_path());
  Dl_info info{};
  if (::dladdr(reinterpret_cast<void*>(&default_autopilot_path), &info) && info.dli_fname) {
    dirs.push_back(fs::absolute(info.dli_fname, ec).parent_path());
  }
  for (const auto& d : dirs) {
    const fs::path candidate = d / "hil_autopilot";
    if (::access(candidate.c_str(), X_OK) == 0) return candidate.string();
  }
  return dirs.empty() ? std::string("hil_autopilot") : (dirs.front() / "hil_autopilot").string();
}

}  // namespace hil
