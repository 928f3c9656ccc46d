// Autopilot process. Talks to the outside world only through the wire
// protocol on a single byte stream named by --link.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hilsim/autopilot.hpp"
#include "hilsim/protocol.hpp"

namespace {

struct Link {
  int in = -1;
  int out = -1;
};

int connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (addrinfo* p = res; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

int open_serial(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDWR | O_NOCTTY);
  if (fd < 0) return -1;
  termios tio{};
  if (::tcgetattr(fd, &tio) == 0) {
    ::cfmakeraw(&tio);
    ::cfsetispeed(&tio, B115200);
    ::cfsetospeed(&tio, B115200);
    tio.c_cc[VMIN] = 1;
    tio.c_cc[VTIME] = 0;
    ::tcsetattr(fd, TCSANOW, &tio);
  }
  return fd;
}

bool open_link(const std::string& spec, Link& link) {
  if (spec == "stdio") {
    link = {STDIN_FILENO, STDOUT_FILENO};
    return true;
  }
  if (spec.rfind("tcp:", 0) == 0) {
    const std::string rest = spec.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) return false;
    const int fd = connect_tcp(rest.substr(0, colon), rest.substr(colon + 1));
    link = {fd, fd};
    return fd >= 0;
  }
  if (spec.rfind("serial:", 0) == 0) {
    const int fd = open_serial(spec.substr(7));
    link = {fd, fd};
    return fd >= 0;
  }
  return false;
}

bool write_all(int fd, const std::vector<std::uint8_t>& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autopilot process for the HIL simulator"};
  std::string link_spec;
  app.add_option("--link", link_spec, "stdio | tcp:HOST:PORT | serial:/dev/ttyX")->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  Link link;
  if (!open_link(link_spec, link)) {
    std::fprintf(stderr, "hil_autopilot: cannot open link '%s': %s\n", link_spec.c_str(), std::strerror(errno));
    return 1;
  }

  hil::Autopilot autopilot;
  hil::wire::StreamDecoder decoder;
  std::vector<hil::wire::Message> inbound;
  std::vector<std::uint8_t> outbound;
  std::uint8_t buf[4096];
  for (;;) {
    const ssize_t n = ::read(link.in, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    inbound.clear();
    decoder.feed({buf, static_cast<std::size_t>(n)}, inbound);
    outbound.clear();
    for (const auto& msg : inbound) {
      for (const auto& reply : autopilot.handle(msg)) hil::wire::append_frame(outbound, reply);
    }
    if (!outbound.empty() && !write_all(link.out, outbound)) break;
  }
  return 0;
}
