#include <doctest.h>

#include <sys/socket.h>
#include <sys/time.h>

#include <chrono>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "hilsim/error.hpp"
#include "hilsim/telemetry_server.hpp"
#include "test_support.hpp"

using namespace hil;
using namespace hil::testing;
using nlohmann::json;

namespace {

namespace beast = boost::beast;
namespace net = boost::asio;
using tcp = net::ip::tcp;

// Blocking WebSocket client; reads fail after 10 s instead of hanging the suite.
class WsClient {
 public:
  explicit WsClient(std::uint16_t port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    timeval tv{10, 0};
    ::setsockopt(ws_.next_layer().native_handle(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ws_.handshake("127.0.0.1", "/");
  }

  void send(const std::string& text) { ws_.write(net::buffer(text)); }
  void send(const json& j) { send(j.dump()); }

  json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }

  // Reads until a message of the given type arrives.
  json read_until(const std::string& type) {
    for (;;) {
      json j = read();
      if (j.value("type", "") == type) return j;
    }
  }

 private:
  net::io_context ioc_;
  beast::websocket::stream<tcp::socket> ws_;
};

ErrorCode parse_error(const std::string& text) {
  try {
    parse_command(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected MalformedCommand for " << text);
  return ErrorCode::IoFailure;
}

void wait_for_clients(const TelemetryServer& server, std::size_t n) {
  for (int i = 0; i < 500 && server.client_count() < n; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE(server.client_count() >= n);
}

}  // namespace

TEST_SUITE("server") {

TEST_CASE("command parsing") {
  const ParsedCommand g = parse_command(R"({"type":"set_gains","id":7,"loop":"pitch","gains":{"kp":1.2}})");
  CHECK(g.name == "set_gains");
  CHECK(g.id == 7);
  const auto& sg = std::get<command::SetGains>(g.command);
  CHECK(sg.loop == LoopId::Pitch);
  CHECK(sg.fields["kp"] == 1.2);

  CHECK(std::holds_alternative<command::Pause>(parse_command(R"({"type":"pause"})").command));
  CHECK(std::get<command::SetTimeScale>(parse_command(R"({"type":"set_time_scale","time_scale":2})").command)
            .time_scale == 2.0);
  const auto f = parse_command(R"({"type":"inject_fault","fault":{"kind":"GPS_DROPOUT","duration":3}})");
  CHECK(std::get<command::InjectFault>(f.command).fault.kind == FaultKind::GpsDropout);

  for (const char* bad : {"not json{", "[1,2]", R"({"id":1})", R"({"type":"launch_missiles"})",
                          R"({"type":"set_gains","loop":"yaw","gains":{"kp":1}})",
                          R"({"type":"set_gains","loop":"roll","gains":{"kq":1}})",
                          R"({"type":"set_gains","loop":"roll","gains":{}})",
                          R"({"type":"set_gains","loop":"roll","gains":{"output_min":2,"output_max":1}})",
                          R"({"type":"upload_mission","mission":{"waypoints":[]}})",
                          R"({"type":"inject_fault","fault":{"kind":"METEOR"}})",
                          R"({"type":"set_time_scale","time_scale":-1})"}) {
    CHECK(parse_error(bad) == ErrorCode::MalformedCommand);
  }
}

TEST_CASE("telemetry object shape") {
  TickSnapshot snap;
  snap.record.time = 1.5;
  snap.gains = default_gains();
  const json j = telemetry_json(snap);
  CHECK(j["type"] == "telemetry");
  CHECK(j["version"] == kTelemetrySchemaVersion);
  CHECK(j["time"] == 1.5);
  for (const char* key : {"truth", "estimate", "objectives", "servo", "gps", "mode", "current_wp",
                          "crosstrack_m", "fault_flags", "gains"}) {
    CHECK_MESSAGE(j.contains(key), key);
  }
  CHECK(j["gps"].is_null());
  CHECK(j["gains"]["roll"]["kp"] == default_gains()[LoopId::Roll].kp);
}

TEST_CASE("second bind on a busy port fails") {
  TelemetryServer first(0);
  try {
    TelemetryServer second(first.port());
    FAIL("expected PortUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PortUnavailable);
  }
}

TEST_CASE("live session: gains, malformed input, pause and resume") {
  Scenario s = shipped("six_wp.json");
  s.duration_limit = 6.0;
  RunOptions o = lockstep_options();
  o.time_scale = 1.0;
  HilSession session(s, o);
  TelemetryServer server(0);
  WsClient client(server.port());
  WsClient observer(server.port());
  wait_for_clients(server, 2);

  RunReport report;
  std::thread sim([&] { report = run_served(session, server); });

  const json first = client.read_until("telemetry");
  CHECK(first["version"] == kTelemetrySchemaVersion);

  client.send(json{{"type", "set_gains"}, {"id", 5}, {"loop", "roll"}, {"gains", {{"kp", 0.77}}}});
  const json ack = client.read_until("ack");
  CHECK(ack["command"] == "set_gains");
  CHECK(ack["id"] == 5);
  CHECK(ack["applied"]["gains"]["kp"] == doctest::Approx(0.77));
  CHECK(ack["applied"]["gains"]["ki"] == default_gains()[LoopId::Roll].ki);
  const json after = client.read_until("telemetry");
  CHECK(after["gains"]["roll"]["kp"] == doctest::Approx(0.77).epsilon(1e-6));
  CHECK(observer.read_until("ack")["id"] == 5);

  client.send(std::string("{\"type\": \"set_gains\", oops"));
  const json err = client.read_until("error");
  CHECK(err["echo"] == "{\"type\": \"set_gains\", oops");
  CHECK(!err["reason"].get<std::string>().empty());
  const json still_streaming = client.read_until("telemetry");

  client.send(json{{"type", "pause"}});
  double last_before = still_streaming["time"].get<double>();
  json paused_ack;
  for (;;) {
    json j = client.read();
    if (j["type"] == "telemetry") last_before = j["time"].get<double>();
    if (j["type"] == "ack") {
      paused_ack = j;
      break;
    }
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(600));
  client.send(json{{"type", "resume"}});
  const json resumed_ack = client.read();  // nothing may arrive between the two acks
  CHECK(resumed_ack["type"] == "ack");
  CHECK(resumed_ack["command"] == "resume");
  CHECK(resumed_ack["applied"]["sim_time"] == paused_ack["applied"]["sim_time"]);
  const json next = client.read_until("telemetry");
  CHECK(next["time"].get<double>() - last_before <= (kTelemetryDecimation + 1) * kControlDt + 1e-9);

  const json end = client.read_until("end");
  CHECK(end["report"]["sim_time"] == doctest::Approx(6.0));
  sim.join();
  CHECK(report.end_reason == "duration limit");
}

TEST_CASE("replay streams a log and refuses live commands") {
  ScratchDir dir("replay");
  std::vector<TelemetryRecord> recs(30);
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].time = 0.02 * static_cast<double>(i);

  TelemetryServer server(0);
  WsClient client(server.port());
  wait_for_clients(server, 1);
  client.send(json{{"type", "set_gains"}, {"loop", "roll"}, {"gains", {{"kp", 1.0}}}});
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::thread replay([&] { replay_log(recs, server, 0.0); });

  int telemetry = 0;
  bool rejected = false;
  for (;;) {
    const json j = client.read();
    if (j["type"] == "error") rejected = true;
    if (j["type"] == "telemetry") ++telemetry;
    if (j["type"] == "end") break;
  }
  replay.join();
  CHECK(rejected);
  CHECK(telemetry == 10);
}

}
