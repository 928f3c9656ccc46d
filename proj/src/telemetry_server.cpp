#include "hilsim/telemetry_server.hpp"

#include <atomic>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "hilsim/error.hpp"

namespace hil {

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

constexpr std::size_t kMaxQueuedPerClient = 512;

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::MalformedCommand, why); }

const char* mode_name(NavMode m) {
  switch (m) {
    case NavMode::Init: return "INIT";
    case NavMode::Nav: return "NAV";
    case NavMode::Loiter: return "LOITER";
    case NavMode::Complete: return "COMPLETE";
  }
  return "INIT";
}

nlohmann::json gains_json(const LoopGains& g) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kLoopCount; ++i) {
    const auto loop = static_cast<LoopId>(i);
    j[to_string(loop)] = g[loop];
  }
  return j;
}

}  // namespace

ParsedCommand parse_command(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) malformed("command must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) malformed("missing string field 'type'");

  ParsedCommand pc{command::Pause{}, j.value("id", nlohmann::json()), j["type"].get<std::string>()};
  try {
    if (pc.name == "set_gains") {
      if (!j.contains("loop") || !j["loop"].is_string()) malformed("set_gains needs string 'loop'");
      if (!j.contains("gains") || !j["gains"].is_object()) malformed("set_gains needs object 'gains'");
      static const std::set<std::string> known = {"kp", "ki", "kd", "output_min", "output_max",
                                                  "integrator_limit", "derivative_tau"};
      for (const auto& [k, v] : j["gains"].items()) {
        if (!known.count(k)) malformed("unknown gain field '" + k + "'");
        if (!v.is_number() || !std::isfinite(v.get<double>())) malformed("gain '" + k + "' must be a finite number");
      }
      if (j["gains"].empty()) malformed("set_gains needs at least one gain field");
      const auto& gj = j["gains"];
      if (gj.contains("output_min") && gj.contains("output_max") &&
          !(gj["output_min"].get<double>() < gj["output_max"].get<double>())) {
        malformed("output_min must be < output_max");
      }
      pc.command = command::SetGains{loop_id_from_string(j["loop"].get<std::string>()), j["gains"]};
    } else if (pc.name == "upload_mission") {
      if (!j.contains("mission")) malformed("upload_mission needs 'mission'");
      Mission m = j["mission"].get<Mission>();
      if (m.waypoints.empty()) malformed("mission has no waypoints");
      pc.command = command::UploadMission{std::move(m)};
    } else if (pc.name == "inject_fault") {
      if (!j.contains("fault")) malformed("inject_fault needs 'fault'");
      nlohmann::json f = j["fault"];
      if (f.is_object() && !f.contains("at_time")) f["at_time"] = 0.0;
      pc.command = command::InjectFault{f.get<FaultEvent>()};
    } else if (pc.name == "pause") {
      pc.command = command::Pause{};
    } else if (pc.name == "resume") {
      pc.command = command::Resume{};
    } else if (pc.name == "set_time_scale") {
      if (!j.contains("time_scale") || !j["time_scale"].is_number()) malformed("set_time_scale needs number 'time_scale'");
      const double x = j["time_scale"].get<double>();
      if (!(x >= 0.0) || !std::isfinite(x)) malformed("time_scale must be >= 0");
      pc.command = command::SetTimeScale{x};
    } else {
      malformed("unknown command type '" + pc.name + "'");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MalformedCommand) throw;
    malformed(e.what());
  } catch (const nlohmann::json::exception& e) {
    malformed(e.what());
  }
  return pc;
}

nlohmann::json make_ack(const ParsedCommand& cmd, const nlohmann::json& applied) {
  return {{"type", "ack"},
          {"version", kTelemetrySchemaVersion},
          {"command", cmd.name},
          {"id", cmd.id},
          {"applied", applied}};
}

nlohmann::json make_error(const std::string& reason, const std::string& echo) {
  return {{"type", "error"}, {"version", kTelemetrySchemaVersion}, {"reason", reason}, {"echo", echo}};
}

nlohmann::json telemetry_json(const TickSnapshot& s) {
  const TelemetryRecord& r = s.record;
  const RigidBodyState& t = r.truth;
  nlohmann::json j{
      {"type", "telemetry"},
      {"version", kTelemetrySchemaVersion},
      {"time", r.time},
      {"truth",
       {{"north_m", t.position.north}, {"east_m", t.position.east}, {"down_m", t.position.down},
        {"u_mps", t.velocity_body.x}, {"v_mps", t.velocity_body.y}, {"w_mps", t.velocity_body.z},
        {"roll_deg", t.attitude.roll * kRadToDeg}, {"pitch_deg", t.attitude.pitch * kRadToDeg},
        {"yaw_deg", t.attitude.yaw * kRadToDeg}, {"p_dps", t.angular_rate_body.x * kRadToDeg},
        {"q_dps", t.angular_rate_body.y * kRadToDeg}, {"r_dps", t.angular_rate_body.z * kRadToDeg}}},
      {"estimate",
       {{"roll_deg", r.estimate.roll * kRadToDeg}, {"pitch_deg", r.estimate.pitch * kRadToDeg},
        {"heading_deg", r.estimate.heading * kRadToDeg}}},
      {"objectives",
       {{"roll_deg", r.objectives.roll_cmd * kRadToDeg}, {"pitch_deg", r.objectives.pitch_cmd * kRadToDeg},
        {"heading_deg", r.objectives.heading_cmd * kRadToDeg}, {"speed_mps", r.objectives.speed_cmd}}},
      {"servo",
       {{"aileron_us", r.servo.aileron_us}, {"elevator_us", r.servo.elevator_us},
        {"rudder_us", r.servo.rudder_us}, {"throttle_us", r.servo.throttle_us}}},
      {"gps", nullptr},
      {"mode", mode_name(s.mode)},
      {"current_wp", s.current_wp},
      {"crosstrack_m", s.crosstrack},
      {"fault_flags", r.fault_flags},
      {"gains", gains_json(s.gains)},
  };
  if (r.gps) {
    j["gps"] = {{"lat_deg", r.gps->latitude}, {"lon_deg", r.gps->longitude},
                {"alt_m", r.gps->altitude}, {"speed_mps", r.gps->ground_speed},
                {"course_deg", r.gps->course_over_ground}, {"fix_time", r.gps->fix_time}};
  }
  return j;
}

struct TelemetryServer::Impl {
  struct Client : std::enable_shared_from_this<Client> {
    Client(tcp::socket socket, Impl* owner) : ws(std::move(socket)), impl(owner) {}

    void start() {
      ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->impl->clients.insert(self);
        self->impl->client_count.store(self->impl->clients.size());
        self->read();
      });
    }

    void read() {
      ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->drop();
          return;
        }
        if (self->ws.got_text()) {
          std::lock_guard lock(self->impl->inbound_mu);
          self->impl->inbound.push_back(beast::buffers_to_string(self->buffer.data()));
        }
        self->buffer.consume(self->buffer.size());
        self->read();
      });
    }

    void send(std::shared_ptr<const std::string> msg) {
      if (queue.size() >= kMaxQueuedPerClient) queue.erase(queue.begin() + 1);
      queue.push_back(std::move(msg));
      if (queue.size() == 1) write();
    }

    void write() {
      ws.text(true);
      ws.async_write(net::buffer(*queue.front()),
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) {
                         self->drop();
                         return;
                       }
                       self->queue.pop_front();
                       if (!self->queue.empty()) self->write();
                     });
    }

    void drop() {
      impl->clients.erase(shared_from_this());
      impl->client_count.store(impl->clients.size());
    }

    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buffer;
    std::deque<std::shared_ptr<const std::string>> queue;
    Impl* impl;
  };

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Client>(std::move(socket), this)->start();
      accept();
    });
  }

  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  std::set<std::shared_ptr<Client>> clients;  // io thread only
  std::atomic<std::size_t> client_count{0};
  std::mutex inbound_mu;
  std::vector<std::string> inbound;
  std::uint16_t port = 0;
};

TelemetryServer::TelemetryServer(std::uint16_t port) : impl_(std::make_unique<Impl>()) {
  beast::error_code ec;
  const tcp::endpoint ep(net::ip::make_address("127.0.0.1"), port);
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::PortUnavailable, "cannot listen on 127.0.0.1:" + std::to_string(port) + ": " + ec.message());
  }
  impl_->port = impl_->acceptor.local_endpoint().port();
  impl_->accept();
  impl_->thread = std::thread([impl = impl_.get()] { impl->ioc.run(); });
}

TelemetryServer::~TelemetryServer() {
  net::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    for (const auto& c : impl->clients) beast::get_lowest_layer(c->ws).socket().close(ec);
    impl->clients.clear();
  });
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint16_t TelemetryServer::port() const { return impl_->port; }

void TelemetryServer::broadcast(std::string text) {
  auto msg = std::make_shared<const std::string>(std::move(text));
  net::post(impl_->ioc, [impl = impl_.get(), msg] {
    for (const auto& c : impl->clients) c->send(msg);
  });
}

std::vector<std::string> TelemetryServer::take_inbound() {
  std::lock_guard lock(impl_->inbound_mu);
  std::vector<std::string> out;
  out.swap(impl_->inbound);
  return out;
}

std::size_t TelemetryServer::client_count() const { return impl_->client_count.load(); }

std::unique_ptr<TelemetryServer> serve_telemetry(std::uint16_t port) {
  return std::make_unique<TelemetryServer>(port);
}

nlohmann::json apply_command(HilSession& session, const ParsedCommand& cmd, bool& paused) {
  return std::visit(
      [&](const auto& c) -> nlohmann::json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, command::SetGains>) {
          nlohmann::json merged = session.snapshot().gains[c.loop];
          merged.update(c.fields);
          PidGains g = session.snapshot().gains[c.loop];
          from_json(merged, g);
          session.set_gains(c.loop, g);
          return {{"loop", to_string(c.loop)}, {"gains", g}};
        } else if constexpr (std::is_same_v<T, command::UploadMission>) {
          session.upload_mission(c.mission);
          return {{"waypoint_count", c.mission.waypoints.size()}, {"mission", c.mission}};
        } else if constexpr (std::is_same_v<T, command::InjectFault>) {
          FaultEvent f = c.fault;
          f.at_time = std::max(f.at_time, session.sim_time());
          session.inject_fault(f);
          return f;
        } else if constexpr (std::is_same_v<T, command::Pause>) {
          paused = true;
          return {{"paused", true}, {"sim_time", session.sim_time()}};
        } else if constexpr (std::is_same_v<T, command::Resume>) {
          paused = false;
          session.resync_clock();
          return {{"paused", false}, {"sim_time", session.sim_time()}};
        } else {
          session.set_time_scale(c.time_scale);
          return {{"time_scale", c.time_scale}};
        }
      },
      cmd.command);
}

RunReport run_served(HilSession& session, TelemetryServer& server) {
  bool paused = false;
  bool force_publish = false;
  std::uint64_t ticks = 0;
  while (!session.finished()) {
    for (const auto& text : server.take_inbound()) {
      try {
        const ParsedCommand cmd = parse_command(text);
        const nlohmann::json applied = apply_command(session, cmd, paused);
        server.broadcast(make_ack(cmd, applied).dump());
        force_publish = true;
      } catch (const Error& e) {
        server.broadcast(make_error(e.what(), text).dump());
      }
    }
    if (paused) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      continue;
    }
    if (!session.step()) break;
    ++ticks;
    if (force_publish || ticks % kTelemetryDecimation == 0) {
      server.broadcast(telemetry_json(session.snapshot()).dump());
      force_publish = false;
    }
  }
  const RunReport report = session.report();
  server.broadcast(nlohmann::json{{"type", "end"},
                                  {"version", kTelemetrySchemaVersion},
                                  {"report", report_to_json(report)}}
                       .dump());
  return report;
}

void replay_log(const std::vector<TelemetryRecord>& records, TelemetryServer& server,
                double time_scale) {
  using Clock = std::chrono::steady_clock;
  bool paused = false;
  auto base_wall = Clock::now();
  double base_sim = records.empty() ? 0.0 : records.front().time;
  std::size_t i = 0;
  while (i < records.size()) {
    for (const auto& text : server.take_inbound()) {
      try {
        const ParsedCommand cmd = parse_command(text);
        nlohmann::json applied;
        if (std::holds_alternative<command::Pause>(cmd.command)) {
          paused = true;
          applied = {{"paused", true}, {"sim_time", records[i].time}};
        } else if (std::holds_alternative<command::Resume>(cmd.command)) {
          paused = false;
          applied = {{"paused", false}, {"sim_time", records[i].time}};
        } else if (const auto* ts = std::get_if<command::SetTimeScale>(&cmd.command)) {
          time_scale = ts->time_scale;
          applied = {{"time_scale", time_scale}};
        } else {
          throw Error(ErrorCode::MalformedCommand, "'" + cmd.name + "' is not available during replay");
        }
        base_wall = Clock::now();
        base_sim = records[i].time;
        server.broadcast(make_ack(cmd, applied).dump());
      } catch (const Error& e) {
        server.broadcast(make_error(e.what(), text).dump());
      }
    }
    if (paused) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      continue;
    }
    const TelemetryRecord& r = records[i];
    if (time_scale > 0.0) {
      const auto due = base_wall + std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<double>((r.time - base_sim) / time_scale));
      if (Clock::now() < due) {
        std::this_thread::sleep_for(std::min<Clock::duration>(due - Clock::now(), std::chrono::milliseconds(10)));
        continue;
      }
    }
    if (i % kTelemetryDecimation == 0) {
      TickSnapshot snap;
      snap.record = r;
      server.broadcast(telemetry_json(snap).dump());
    }
    ++i;
  }
  server.broadcast(nlohmann::json{{"type", "end"}, {"version", kTelemetrySchemaVersion}}.dump());
}

}  // namespace hil
