#include "hilsim/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hilsim/error.hpp"

namespace hil {

namespace {

constexpr const char* kFaultNames[] = {"POWER_BROWNOUT", "GPS_DROPOUT", "SERVO_STUCK",
                                       "GYRO_BIAS_JUMP", "LINK_NOISE"};
constexpr const char* kChannelNames[] = {"aileron", "elevator", "rudder", "throttle"};
constexpr const char* kLoopNames[] = {"roll", "pitch", "heading", "speed"};

}  // namespace

const char* to_string(FaultKind kind) noexcept { return kFaultNames[static_cast<int>(kind)]; }
const char* to_string(ServoChannel channel) noexcept { return kChannelNames[static_cast<int>(channel)]; }
const char* to_string(LoopId loop) noexcept { return kLoopNames[static_cast<int>(loop)]; }

FaultKind fault_kind_from_string(const std::string& name) {
  for (int i = 0; i < 5; ++i) {
    if (name == kFaultNames[i]) return static_cast<FaultKind>(i);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown fault kind '" + name + "'");
}

ServoChannel servo_channel_from_string(const std::string& name) {
  for (int i = 0; i < 4; ++i) {
    if (name == kChannelNames[i]) return static_cast<ServoChannel>(i);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown servo channel '" + name + "'");
}

LoopId loop_id_from_string(const std::string& name) {
  for (int i = 0; i < 4; ++i) {
    if (name == kLoopNames[i]) return static_cast<LoopId>(i);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown loop '" + name + "'");
}

void FaultEvent::validate() const {
  if (!(at_time >= 0.0)) throw Error(ErrorCode::InvalidConfig, "fault at_time must be >= 0");
  if (!(reset_delay >= 0.0) || !(duration >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "fault durations must be >= 0");
  }
  if (!std::isfinite(bias_jump)) throw Error(ErrorCode::InvalidConfig, "bias_jump must be finite");
  if (!(byte_error_rate >= 0.0 && byte_error_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "byte_error_rate must be in [0, 1]");
  }
  if (pulse_us < 800 || pulse_us > 2200) {
    throw Error(ErrorCode::InvalidConfig, "stuck pulse must be within 800..2200 us");
  }
}

void to_json(nlohmann::json& j, const FaultEvent& f) {
  j = nlohmann::json{{"at_time", f.at_time}, {"kind", to_string(f.kind)}};
  switch (f.kind) {
    case FaultKind::PowerBrownout:
      j["reset_delay"] = f.reset_delay;
      break;
    case FaultKind::GpsDropout:
      j["duration"] = f.duration;
      break;
    case FaultKind::ServoStuck:
      j["channel"] = to_string(f.channel);
      j["pulse_us"] = f.pulse_us;
      j["duration"] = f.duration;
      break;
    case FaultKind::GyroBiasJump:
      j["bias_jump"] = f.bias_jump;
      break;
    case FaultKind::LinkNoise:
      j["byte_error_rate"] = f.byte_error_rate;
      j["duration"] = f.duration;
      break;
  }
}

void from_json(const nlohmann::json& j, FaultEvent& f) {
  try {
    f = FaultEvent{};
    f.at_time = j.at("at_time").get<double>();
    f.kind = fault_kind_from_string(j.at("kind").get<std::string>());
    f.reset_delay = j.value("reset_delay", 0.0);
    f.duration = j.value("duration", 0.0);
    if (j.contains("channel")) f.channel = servo_channel_from_string(j.at("channel").get<std::string>());
    f.pulse_us = j.value("pulse_us", std::uint16_t{1500});
    f.bias_jump = j.value("bias_jump", 0.0);
    f.byte_error_rate = j.value("byte_error_rate", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("fault: ") + e.what());
  }
  f.validate();
}

void to_json(nlohmann::json& j, const Mission& m) {
  j = nlohmann::json{{"cruise_speed", m.cruise_speed},
                     {"crosstrack_enabled", m.crosstrack_enabled},
                     {"loiter_clockwise", m.loiter_clockwise},
                     {"waypoints", nlohmann::json::array()}};
  for (const auto& wp : m.waypoints) {
    nlohmann::json w{{"latitude", wp.latitude},
                     {"longitude", wp.longitude},
                     {"altitude", wp.altitude},
                     {"capture_radius", wp.capture_radius},
                     {"kind", wp.kind == WaypointKind::Loiter ? "LOITER" : "FLYOVER"}};
    if (wp.kind == WaypointKind::Loiter) {
      w["loiter_radius"] = wp.loiter_radius;
      w["loiter_duration"] = wp.loiter_duration;
    }
    j["waypoints"].push_back(w);
  }
}

void from_json(const nlohmann::json& j, Mission& m) {
  try {
    m = Mission{};
    m.cruise_speed = j.value("cruise_speed", m.cruise_speed);
    m.crosstrack_enabled = j.value("crosstrack_enabled", m.crosstrack_enabled);
    m.loiter_clockwise = j.value("loiter_clockwise", m.loiter_clockwise);
    for (const auto& w : j.at("waypoints")) {
      Waypoint wp;
      wp.latitude = w.at("latitude").get<double>();
      wp.longitude = w.at("longitude").get<double>();
      wp.altitude = w.at("altitude").get<double>();
      wp.capture_radius = w.value("capture_radius", wp.capture_radius);
      const std::string kind = w.value("kind", std::string("FLYOVER"));
      if (kind == "LOITER") {
        wp.kind = WaypointKind::Loiter;
      } else if (kind != "FLYOVER") {
        throw Error(ErrorCode::InvalidConfig, "unknown waypoint kind '" + kind + "'");
      }
      wp.loiter_radius = w.value("loiter_radius", 0.0);
      wp.loiter_duration = w.value("loiter_duration", 0.0);
      m.waypoints.push_back(wp);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("mission: ") + e.what());
  }
  m.validate();
}

void to_json(nlohmann::json& j, const PidGains& g) {
  j = nlohmann::json{{"kp", g.kp},
                     {"ki", g.ki},
                     {"kd", g.kd},
                     {"output_min", g.output_min},
                     {"output_max", g.output_max},
                     {"integrator_limit", g.integrator_limit},
                     {"derivative_tau", g.derivative_tau}};
}

void from_json(const nlohmann::json& j, PidGains& g) {
  try {
    g.kp = j.value("kp", g.kp);
    g.ki = j.value("ki", g.ki);
    g.kd = j.value("kd", g.kd);
    g.output_min = j.value("output_min", g.output_min);
    g.output_max = j.value("output_max", g.output_max);
    g.integrator_limit = j.value("integrator_limit", g.integrator_limit);
    g.derivative_tau = j.value("derivative_tau", g.derivative_tau);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidGains, e.what());
  }
  g.validate();
}

void Scenario::validate() const {
  airframe.validate();
  environment.validate();
  mission.validate();
  origin.validate();
  if (mission.waypoints.empty()) throw Error(ErrorCode::InvalidConfig, "mission has no waypoints");
  if (!(duration_limit > 0.0)) throw Error(ErrorCode::InvalidConfig, "duration_limit must be > 0");
  if (!(time_scale >= 0.0) || !std::isfinite(time_scale)) {
    throw Error(ErrorCode::InvalidConfig, "time_scale must be >= 0");
  }
  if (!(initial.airspeed > 0.0)) throw Error(ErrorCode::InvalidConfig, "initial airspeed must be > 0");
  if (!(initial.altitude > origin.altitude_msl)) {
    throw Error(ErrorCode::InvalidConfig, "initial altitude must be above the origin");
  }
  if (!(wind.gust_sd >= 0.0) || !(wind.gust_tau > 0.0) || !wind.mean_ned.finite()) {
    throw Error(ErrorCode::InvalidConfig, "wind needs gust_sd >= 0, gust_tau > 0");
  }
  for (const auto& f : faults) f.validate();
  for (const auto& [loop, g] : gains) g.validate();
}

Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir) {
  Scenario s;
  try {
    if (j.contains("airframe")) {
      const auto& a = j.at("airframe");
      if (a.is_string()) {
        std::filesystem::path p = a.get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        s.airframe = load_airframe(p.string());
      } else {
        s.airframe = a.get<AirframeConfig>();
      }
    }
    s.seed = j.value("seed", s.seed);
    nlohmann::json env = j.value("environment", nlohmann::json::object());
    if (!env.contains("rng_seed")) env["rng_seed"] = s.seed;
    s.environment = env.get<SensorEnvironment>();
    s.mission = j.at("mission").get<Mission>();

    const auto& o = j.at("origin");
    s.origin.latitude = o.at("latitude").get<double>();
    s.origin.longitude = o.at("longitude").get<double>();
    s.origin.altitude_msl = o.value("altitude_msl", 0.0);

    if (j.contains("initial")) {
      const auto& i = j.at("initial");
      s.initial.airspeed = i.value("airspeed", s.initial.airspeed);
      s.initial.altitude = i.value("altitude", s.initial.altitude);
      s.initial.heading_deg = i.value("heading_deg", s.initial.heading_deg);
    }
    s.time_scale = j.value("time_scale", s.time_scale);
    s.duration_limit = j.value("duration_limit", s.duration_limit);
    if (j.contains("faults")) s.faults = j.at("faults").get<std::vector<FaultEvent>>();
    if (j.contains("wind")) {
      const auto& w = j.at("wind");
      if (w.contains("mean_ned")) {
        const auto& m = w.at("mean_ned");
        s.wind.mean_ned = {m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>()};
      }
      s.wind.gust_sd = w.value("gust_sd", s.wind.gust_sd);
      s.wind.gust_tau = w.value("gust_tau", s.wind.gust_tau);
    }
    if (j.contains("gains")) {
      for (const auto& [name, g] : j.at("gains").items()) {
        PidGains base = default_gains()[loop_id_from_string(name)];
        from_json(g, base);
        s.gains[loop_id_from_string(name)] = base;
      }
    }
    s.stop_on_complete = j.value("stop_on_complete", s.stop_on_complete);
    const std::string link = j.value("link", std::string("tcp"));
    if (link == "tcp") {
      s.link = LinkKind::Tcp;
    } else if (link == "pipe") {
      s.link = LinkKind::Pipe;
    } else {
      throw Error(ErrorCode::InvalidConfig, "link must be 'tcp' or 'pipe'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open scenario " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  return scenario_from_json(j, std::filesystem::path(path).parent_path().string());
}

}  // namespace hil
