#include "hilsim/autopilot.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "hilsim/error.hpp"

namespace hil {

void Waypoint::validate() const {
  if (!(std::abs(latitude) <= 90.0) || !(std::abs(longitude) <= 180.0) || !std::isfinite(altitude)) {
    throw Error(ErrorCode::InvalidConfig, "waypoint coordinates out of range");
  }
  if (!(capture_radius > 0.0)) throw Error(ErrorCode::InvalidConfig, "capture_radius must be > 0");
  if (kind == WaypointKind::Loiter && !(loiter_radius > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "loiter radius must be > 0");
  }
  if (!(loiter_duration >= 0.0)) throw Error(ErrorCode::InvalidConfig, "loiter duration must be >= 0");
}

void Mission::validate() const {
  if (!(cruise_speed > 0.0)) throw Error(ErrorCode::InvalidConfig, "cruise_speed must be > 0");
  if (waypoints.size() > 255) throw Error(ErrorCode::InvalidConfig, "at most 255 waypoints");
  for (const auto& wp : waypoints) wp.validate();
}

double crosstrack_error(const Ned& prev_wp, const Ned& next_wp, const Ned& position) {
  const double dn = next_wp.north - prev_wp.north;
  const double de = next_wp.east - prev_wp.east;
  const double len = std::hypot(dn, de);
  if (len < 1.0) throw Error(ErrorCode::DegenerateLeg, "leg endpoints coincide horizontally");
  const double rn = position.north - prev_wp.north;
  const double re = position.east - prev_wp.east;
  return (dn * re - de * rn) / len;
}

namespace {

Ned waypoint_ned(const Waypoint& wp, const GeoOrigin& origin) {
  return geodetic_to_ned({wp.latitude, wp.longitude, wp.altitude}, origin);
}

double bearing(const Ned& from, const Ned& to) {
  return std::atan2(to.east - from.east, to.north - from.north);
}

// Heading command that converges onto a circle of `radius` around `center`.
double loiter_heading(const Ned& center, double radius, const Ned& position, bool clockwise,
                      double lookahead, double& radial_error) {
  const double rn = position.north - center.north;
  const double re = position.east - center.east;
  const double r = std::hypot(rn, re);
  radial_error = r - radius;
  const double dir = clockwise ? 1.0 : -1.0;
  const double from_center = std::atan2(re, rn);
  const double correction = std::atan(radial_error / lookahead);
  return wrap_pi(from_center + dir * (kPi / 2.0 + correction));
}

}  // namespace

SequencerOutput sequencer_step(const NavState& nav, const Mission& mission,
                               const GeoOrigin& nav_origin, double dt,
                               const GuidanceParams& params) {
  const auto& wps = mission.waypoints;
  if (wps.empty()) throw Error(ErrorCode::InvalidConfig, "sequencer needs a nonempty mission");

  SequencerOutput out;
  out.nav = nav;
  NavState& n = out.nav;
  const std::size_t count = wps.size();
  n.current_wp_index = std::min(n.current_wp_index, count);

  if (n.current_wp_index < count) {
    const Waypoint& wp = wps[n.current_wp_index];
    if (n.mode == NavMode::Loiter) {
      n.loiter_elapsed += dt;
      if (wp.loiter_duration > 0.0 && n.loiter_elapsed >= wp.loiter_duration) {
        bool aligned = true;
        if (n.current_wp_index + 1 < count) {
          const Ned next = waypoint_ned(wps[n.current_wp_index + 1], nav_origin);
          const double off = wrap_pi(n.attitude.heading - bearing(n.position, next));
          aligned = std::abs(off) <= params.loiter_exit_alignment;
        }
        if (aligned) {
          ++n.current_wp_index;
          n.loiter_elapsed = 0.0;
          n.mode = NavMode::Nav;
          n.leg_start = n.position;
        }
      }
    } else {
      n.mode = NavMode::Nav;
      const double dist = n.position.horizontal_distance_to(waypoint_ned(wp, nav_origin));
      if (dist < wp.capture_radius) {
        n.loiter_elapsed = 0.0;
        if (wp.kind == WaypointKind::Flyover) {
          ++n.current_wp_index;
          n.leg_start.reset();
        } else {
          n.mode = NavMode::Loiter;
        }
      }
    }
  }
  if (n.current_wp_index >= count) n.mode = NavMode::Complete;

  double heading_cmd = n.attitude.heading;
  double target_altitude = 0.0;
  n.crosstrack = 0.0;

  if (n.mode == NavMode::Complete || n.mode == NavMode::Loiter) {
    const Waypoint& wp = n.mode == NavMode::Complete ? wps.back() : wps[n.current_wp_index];
    const double radius = wp.kind == WaypointKind::Loiter ? wp.loiter_radius
                                                          : params.final_loiter_radius;
    heading_cmd = loiter_heading(waypoint_ned(wp, nav_origin), radius, n.position,
                                 mission.loiter_clockwise, params.loiter_lookahead, n.crosstrack);
    target_altitude = wp.altitude;
  } else {
    const Waypoint& wp = wps[n.current_wp_index];
    const Ned target = waypoint_ned(wp, nav_origin);
    heading_cmd = bearing(n.position, target);
    target_altitude = wp.altitude;
    if (mission.crosstrack_enabled && n.current_wp_index > 0) {
      const Ned prev = n.leg_start ? *n.leg_start : waypoint_ned(wps[n.current_wp_index - 1], nav_origin);
      if (prev.horizontal_distance_to(target) >= 1.0) {
        n.crosstrack = crosstrack_error(prev, target, n.position);
        const double correction = std::clamp(params.crosstrack_gain * n.crosstrack,
                                             -params.crosstrack_max, params.crosstrack_max);
        heading_cmd = wrap_pi(heading_cmd - correction);
      }
    }
  }

  const double altitude = nav_origin.altitude_msl - n.position.down;
  Objectives& o = out.objectives;
  o.heading_cmd = heading_cmd;
  o.roll_cmd = std::clamp(params.course_gain * wrap_pi(heading_cmd - n.attitude.heading),
                          -params.roll_limit, params.roll_limit);
  o.pitch_cmd = std::clamp(params.cruise_pitch + params.altitude_gain * (target_altitude - altitude),
                           -params.pitch_limit, params.pitch_limit);
  o.speed_cmd = mission.cruise_speed;
  return out;
}

LoopGains default_gains() {
  LoopGains g;
  g[LoopId::Roll] = {1.0, 0.1, 0.05, -1.0, 1.0, 0.2, 0.05};
  g[LoopId::Pitch] = {1.5, 0.3, 0.1, -1.0, 1.0, 0.3, 0.05};
  g[LoopId::Heading] = {0.3, 0.0, 0.0, -0.5, 0.5, 0.0, 0.05};
  g[LoopId::Speed] = {0.08, 0.04, 0.0, -0.1, 0.9, 0.5, 0.05};
  return g;
}

std::uint16_t surface_to_pulse(double normalized) {
  if (!std::isfinite(normalized)) normalized = 0.0;
  return static_cast<std::uint16_t>(std::clamp<long>(std::lround(1500.0 + 500.0 * normalized), 1000, 2000));
}

std::uint16_t throttle_to_pulse(double normalized) {
  if (!std::isfinite(normalized)) normalized = 0.0;
  return static_cast<std::uint16_t>(std::clamp<long>(std::lround(1000.0 + 1000.0 * normalized), 1000, 2000));
}

ControlSurfaces pulses_to_controls(const ServoCommand& s) {
  return ControlSurfaces{(s.aileron_us - 1500.0) / 500.0, (s.elevator_us - 1500.0) / 500.0,
                         (s.rudder_us - 1500.0) / 500.0, (s.throttle_us - 1000.0) / 1000.0}
      .clamped();
}

ServoCommand control_step(const Objectives& objectives, const AttitudeEstimate& estimate,
                          double ground_speed, const LoopGains& gains, LoopStates& states,
                          double dt, const ActuatorTrim& trim) {
  auto run = [&](LoopId id, double setpoint, double measurement, bool wrap) {
    const PidResult r = pid_step(gains[id], states[id], setpoint, measurement, dt, wrap);
    states[id] = r.state;
    return r.output;
  };
  ServoCommand s;
  s.aileron_us = surface_to_pulse(trim.aileron + run(LoopId::Roll, objectives.roll_cmd, estimate.roll, false));
  s.elevator_us = surface_to_pulse(trim.elevator + run(LoopId::Pitch, objectives.pitch_cmd, estimate.pitch, false));
  s.rudder_us = surface_to_pulse(trim.rudder + run(LoopId::Heading, objectives.heading_cmd, estimate.heading, true));
  s.throttle_us = throttle_to_pulse(trim.throttle + run(LoopId::Speed, objectives.speed_cmd, ground_speed, false));
  return s;
}

wire::SetGainsMsg gains_to_wire(LoopId loop, const PidGains& g) {
  auto milli = [](double v) {
    return static_cast<std::int16_t>(std::clamp<long long>(std::llround(v * 1000.0), -32768, 32767));
  };
  wire::SetGainsMsg m;
  m.loop_id = static_cast<std::uint8_t>(loop);
  m.kp = static_cast<float>(g.kp);
  m.ki = static_cast<float>(g.ki);
  m.kd = static_cast<float>(g.kd);
  m.integrator_limit = static_cast<float>(g.integrator_limit);
  m.output_min_milli = milli(g.output_min);
  m.output_max_milli = milli(g.output_max);
  return m;
}

PidGains gains_from_wire(const wire::SetGainsMsg& m, const PidGains& base) {
  PidGains g = base;
  g.kp = m.kp;
  g.ki = m.ki;
  g.kd = m.kd;
  g.integrator_limit = m.integrator_limit;
  g.output_min = m.output_min_milli / 1000.0;
  g.output_max = m.output_max_milli / 1000.0;
  return g;
}

std::vector<wire::Message> mission_to_wire(const Mission& mission, std::uint8_t resume_index) {
  mission.validate();
  std::vector<wire::Message> out;
  const auto count = static_cast<std::uint8_t>(mission.waypoints.size());
  std::uint8_t flags = 0;
  if (mission.crosstrack_enabled) flags |= wire::kMissionFlagCrosstrack;
  if (!mission.loiter_clockwise) flags |= wire::kMissionFlagLoiterCcw;
  for (std::uint8_t i = 0; i < count; ++i) {
    const Waypoint& wp = mission.waypoints[i];
    wire::MissionItemMsg item;
    item.index = i;
    item.count = count;
    item.kind = static_cast<std::uint8_t>(wp.kind);
    item.lat_e7 = static_cast<std::int32_t>(wire::scale_to_wire(wp.latitude, wire::fields::kLatitudeE7));
    item.lon_e7 = static_cast<std::int32_t>(wire::scale_to_wire(wp.longitude, wire::fields::kLongitudeE7));
    item.alt_cm = static_cast<std::int32_t>(wire::scale_to_wire(wp.altitude, wire::fields::kAltitudeCm));
    item.param = wp.kind == WaypointKind::Loiter
                     ? static_cast<std::uint32_t>(std::llround(wp.loiter_radius * 100.0))
                     : 0u;
    item.capture_m = static_cast<std::uint8_t>(std::clamp<long long>(std::llround(wp.capture_radius), 1, 255));
    out.emplace_back(item);

    wire::MissionInfoMsg info;
    info.index = i;
    info.flags = flags;
    info.cruise_speed_cms = static_cast<std::uint16_t>(wire::scale_to_wire(mission.cruise_speed, wire::fields::kSpeedCms));
    info.loiter_duration_s = static_cast<std::uint16_t>(std::clamp<long long>(std::llround(wp.loiter_duration), 0, 65535));
    info.resume_index = resume_index;
    out.emplace_back(info);
  }
  return out;
}

Autopilot::Autopilot() : Autopilot(Config{}) {}

Autopilot::Autopilot(Config config) : config_(std::move(config)) {
  for (std::size_t i = 0; i < kLoopCount; ++i) config_.gains.loops[i].validate();
  nav_.mode = NavMode::Init;
}

void Autopilot::set_gains(LoopId loop, const PidGains& gains) {
  gains.validate();
  config_.gains[loop] = gains;
  states_[loop].integrator = 0.0;
}

std::vector<wire::Message> Autopilot::handle(const wire::Message& message) {
  std::vector<wire::Message> out;
  if (const auto* att = std::get_if<wire::AttitudeMsg>(&message)) {
    out = on_attitude(*att);
  } else if (const auto* gps = std::get_if<wire::GpsMsg>(&message)) {
    on_gps(*gps);
  } else if (const auto* gains = std::get_if<wire::SetGainsMsg>(&message)) {
    out.emplace_back(on_set_gains(*gains));
  } else if (const auto* item = std::get_if<wire::MissionItemMsg>(&message)) {
    on_mission_item(*item);
  } else if (const auto* info = std::get_if<wire::MissionInfoMsg>(&message)) {
    on_mission_info(*info);
  }
  return out;
}

void Autopilot::on_gps(const wire::GpsMsg& gps) {
  if (!(gps.flags & wire::kGpsFlagValid)) return;
  last_fix_geo_ = {wire::wire_to_physical(gps.lat_e7, wire::fields::kLatitudeE7),
                   wire::wire_to_physical(gps.lon_e7, wire::fields::kLongitudeE7),
                   wire::wire_to_physical(gps.alt_cm, wire::fields::kAltitudeCm)};
  nav_.ground_speed = wire::wire_to_physical(gps.ground_speed_cms, wire::fields::kSpeedCms);
  last_fix_tick_ = ticks_;
  have_position_ = true;
}

wire::GainsAckMsg Autopilot::on_set_gains(const wire::SetGainsMsg& msg) {
  wire::GainsAckMsg ack;
  ack.gains = msg;
  if (msg.loop_id >= kLoopCount) {
    ack.result = wire::kGainsRejected;
    return ack;
  }
  const auto loop = static_cast<LoopId>(msg.loop_id);
  try {
    set_gains(loop, gains_from_wire(msg, config_.gains[loop]));
    ack.gains = gains_to_wire(loop, config_.gains[loop]);
    ack.result = wire::kGainsApplied;
  } catch (const Error&) {
    ack.result = wire::kGainsRejected;
  }
  return ack;
}

void Autopilot::on_mission_item(const wire::MissionItemMsg& item) {
  if (item.count == 0 || item.index >= item.count) return;
  if (upload_.size() != item.count) upload_.assign(item.count, PendingItem{});
  upload_[item.index].item = item;
  try_activate_mission();
}

void Autopilot::on_mission_info(const wire::MissionInfoMsg& info) {
  if (info.index >= upload_.size()) return;
  upload_[info.index].info = info;
  try_activate_mission();
}

void Autopilot::try_activate_mission() {
  if (upload_.empty()) return;
  for (const auto& p : upload_) {
    if (!p.item || !p.info) return;
  }
  Mission m;
  const wire::MissionInfoMsg& head = *upload_.front().info;
  m.cruise_speed = wire::wire_to_physical(head.cruise_speed_cms, wire::fields::kSpeedCms);
  m.crosstrack_enabled = head.flags & wire::kMissionFlagCrosstrack;
  m.loiter_clockwise = !(head.flags & wire::kMissionFlagLoiterCcw);
  for (const auto& p : upload_) {
    Waypoint wp;
    wp.latitude = wire::wire_to_physical(p.item->lat_e7, wire::fields::kLatitudeE7);
    wp.longitude = wire::wire_to_physical(p.item->lon_e7, wire::fields::kLongitudeE7);
    wp.altitude = wire::wire_to_physical(p.item->alt_cm, wire::fields::kAltitudeCm);
    wp.capture_radius = p.item->capture_m;
    wp.kind = p.item->kind == wire::kWaypointLoiter ? WaypointKind::Loiter : WaypointKind::Flyover;
    wp.loiter_radius = p.item->param / 100.0;
    wp.loiter_duration = p.info->loiter_duration_s;
    m.waypoints.push_back(wp);
  }
  upload_.clear();
  try {
    m.validate();
  } catch (const Error&) {
    return;
  }
  nav_origin_ = GeoOrigin{m.waypoints.front().latitude, m.waypoints.front().longitude, 0.0};
  nav_.current_wp_index = std::min<std::size_t>(head.resume_index, m.waypoints.size());
  nav_.loiter_elapsed = 0.0;
  nav_.leg_start.reset();
  nav_.mode = NavMode::Nav;
  mission_ = std::move(m);
}

std::vector<wire::Message> Autopilot::on_attitude(const wire::AttitudeMsg& att) {
  const auto started = std::chrono::steady_clock::now();
  const double dt = config_.control_dt;
  ++ticks_;

  AttitudeEstimate est;
  est.roll = wire::wire_to_physical(att.roll_cdeg, wire::fields::kAngleCdeg) * kDegToRad;
  est.pitch = wire::wire_to_physical(att.pitch_cdeg, wire::fields::kAngleCdeg) * kDegToRad;
  est.heading = wrap_pi(wire::wire_to_physical(att.heading_cdeg, wire::fields::kHeadingCdeg) * kDegToRad);
  est.estimate_time = static_cast<double>(ticks_) * dt;
  nav_.attitude = est;

  bool navigating = false;
  if (mission_ && have_position_ && nav_origin_) {
    try {
      nav_.position = geodetic_to_ned(last_fix_geo_, *nav_origin_);
      const SequencerOutput so = sequencer_step(nav_, *mission_, *nav_origin_, dt, config_.guidance);
      nav_ = so.nav;
      objectives_ = so.objectives;
      navigating = true;
    } catch (const Error&) {
      navigating = false;
    }
  }
  if (!navigating) {
    if (!mission_) nav_.mode = NavMode::Init;
    objectives_ = {0.0, 0.0, est.heading, mission_ ? mission_->cruise_speed : config_.default_speed};
  }

  const ServoCommand servo = control_step(objectives_, est, nav_.ground_speed, config_.gains,
                                          states_, dt, config_.trim);

  std::vector<wire::Message> out;
  const bool changed = nav_.mode != reported_mode_ || nav_.current_wp_index != reported_wp_;
  reported_mode_ = nav_.mode;
  reported_wp_ = nav_.current_wp_index;
  if (changed || ticks_ % static_cast<std::uint64_t>(config_.status_divider) == 0) {
    wire::StatusMsg st;
    st.uptime_ms = static_cast<std::uint32_t>(ticks_ * static_cast<std::uint64_t>(dt * 1000.0 + 0.5));
    st.current_wp = static_cast<std::uint8_t>(std::min<std::size_t>(nav_.current_wp_index, 255));
    st.mode = static_cast<std::uint8_t>(nav_.mode);
    st.crosstrack_dm = static_cast<std::int16_t>(
        std::clamp<long long>(std::llround(nav_.crosstrack * 10.0), -32768, 32767));
    const double busy =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    st.loop_load_pct = static_cast<std::uint8_t>(std::clamp(busy / dt * 100.0, 0.0, 100.0));
    std::uint8_t flags = 0;
    if (!have_position_ || ticks_ - last_fix_tick_ > static_cast<std::uint64_t>(2.0 / dt)) flags |= 0x01;
    if (!mission_) flags |= 0x02;
    st.fault_flags = flags;
    out.emplace_back(st);
  }

  wire::ObjectivesMsg obj;
  obj.roll_cdeg = static_cast<std::int16_t>(std::clamp<long long>(std::llround(objectives_.roll_cmd * kRadToDeg * 100.0), -32768, 32767));
  obj.pitch_cdeg = static_cast<std::int16_t>(std::clamp<long long>(std::llround(objectives_.pitch_cmd * kRadToDeg * 100.0), -32768, 32767));
  obj.heading_cdeg = wire::heading_to_wire(objectives_.heading_cmd * kRadToDeg);
  obj.speed_cms = static_cast<std::uint16_t>(std::clamp<long long>(std::llround(objectives_.speed_cmd * 100.0), 0, 65535));
  out.emplace_back(obj);

  out.emplace_back(wire::ServoMsg{servo.aileron_us, servo.elevator_us, servo.rudder_us, servo.throttle_us});
  return out;
}

}  // namespace hil
