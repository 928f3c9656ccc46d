#include "hilsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "hilsim/error.hpp"
#include "hilsim/geodesy.hpp"

namespace hil {

namespace {

using Clock = std::chrono::steady_clock;

// Independent random streams so that enabling one noise source never shifts
// the draws of another.
enum RngStream : std::uint64_t { kThermopile = 1, kGps, kGyro, kLink, kWind };

std::string format(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

wire::AttitudeMsg attitude_frame(const AttitudeEstimate& est, double yaw_rate) {
  wire::AttitudeMsg m;
  m.roll_cdeg = static_cast<std::int16_t>(wire::scale_to_wire(est.roll * kRadToDeg, wire::fields::kAngleCdeg));
  m.pitch_cdeg = static_cast<std::int16_t>(wire::scale_to_wire(est.pitch * kRadToDeg, wire::fields::kAngleCdeg));
  m.heading_cdeg = wire::heading_to_wire(est.heading * kRadToDeg);
  const double rate = std::clamp(yaw_rate * kRadToDeg, -327.0, 327.0);
  m.yaw_rate_cdps = static_cast<std::int16_t>(wire::scale_to_wire(rate, wire::fields::kRateCdps));
  return m;
}

wire::GpsMsg gps_frame(const GpsFix& fix) {
  wire::GpsMsg m;
  m.lat_e7 = static_cast<std::int32_t>(wire::scale_to_wire(fix.latitude, wire::fields::kLatitudeE7));
  m.lon_e7 = static_cast<std::int32_t>(wire::scale_to_wire(fix.longitude, wire::fields::kLongitudeE7));
  m.alt_cm = static_cast<std::int32_t>(wire::scale_to_wire(fix.altitude, wire::fields::kAltitudeCm));
  m.ground_speed_cms = static_cast<std::uint16_t>(
      wire::scale_to_wire(std::min(fix.ground_speed, 650.0), wire::fields::kSpeedCms));
  m.course_cdeg = wire::heading_to_wire(fix.course_over_ground);
  m.flags = fix.valid ? wire::kGpsFlagValid : 0;
  return m;
}

double trim_pulse_exact(const ControlSurfaces& trim, ServoChannel ch) {
  switch (ch) {
    case ServoChannel::Aileron: return 1500.0 + 500.0 * trim.aileron;
    case ServoChannel::Elevator: return 1500.0 + 500.0 * trim.elevator;
    case ServoChannel::Rudder: return 1500.0 + 500.0 * trim.rudder;
    case ServoChannel::Throttle: return 1000.0 + 1000.0 * trim.throttle;
  }
  return 1500.0;
}

std::uint16_t& channel_ref(ServoCommand& s, ServoChannel ch) {
  switch (ch) {
    case ServoChannel::Aileron: return s.aileron_us;
    case ServoChannel::Elevator: return s.elevator_us;
    case ServoChannel::Rudder: return s.rudder_us;
    case ServoChannel::Throttle: break;
  }
  return s.throttle_us;
}

std::uint64_t count_nan(const TelemetryRecord& r) {
  const RigidBodyState& s = r.truth;
  const double values[] = {r.time,
                           s.position.north, s.position.east, s.position.down,
                           s.velocity_body.x, s.velocity_body.y, s.velocity_body.z,
                           s.attitude.roll, s.attitude.pitch, s.attitude.yaw,
                           s.angular_rate_body.x, s.angular_rate_body.y, s.angular_rate_body.z,
                           r.estimate.roll, r.estimate.pitch, r.estimate.heading,
                           r.objectives.roll_cmd, r.objectives.pitch_cmd, r.objectives.heading_cmd,
                           r.objectives.speed_cmd};
  std::uint64_t n = 0;
  for (double v : values) n += std::isfinite(v) ? 0 : 1;
  if (r.gps) {
    for (double v : {r.gps->latitude, r.gps->longitude, r.gps->altitude, r.gps->ground_speed,
                     r.gps->course_over_ground, r.gps->fix_time}) {
      n += std::isfinite(v) ? 0 : 1;
    }
  }
  return n;
}

}  // namespace

HilSession::HilSession(Scenario scenario, RunOptions options)
    : scenario_(std::move(scenario)),
      options_(std::move(options)),
      time_scale_(options_.time_scale.value_or(scenario_.time_scale)),
      link_kind_(options_.link.value_or(scenario_.link)),
      autopilot_path_(options_.autopilot_path.empty() ? default_autopilot_path()
                                                      : options_.autopilot_path),
      gps_(scenario_.origin, scenario_.environment),
      gyro_(scenario_.environment),
      thermopile_rng_(Rng::derive(scenario_.environment.rng_seed, kThermopile)),
      gps_rng_(Rng::derive(scenario_.environment.rng_seed, kGps)),
      gyro_rng_(Rng::derive(scenario_.environment.rng_seed, kGyro)),
      link_rng_(Rng::derive(scenario_.environment.rng_seed, kLink)),
      wind_rng_(Rng::derive(scenario_.environment.rng_seed, kWind)) {
  scenario_.validate();
  if (!(time_scale_ >= 0.0)) throw Error(ErrorCode::InvalidConfig, "time_scale must be >= 0");
  if (options_.sweep) {
    options_.sweep->spec.validate();
    if (!(1.0 / kControlDt > 2.0 * options_.sweep->spec.f_end)) {
      throw Error(ErrorCode::NyquistViolation, "sweep end frequency above the control-rate Nyquist limit");
    }
  }

  const double height = scenario_.initial.altitude - scenario_.origin.altitude_msl;
  const TrimPoint trim = find_trim(scenario_.airframe, scenario_.initial.airspeed, height);
  truth_ = trim.state;
  truth_.attitude.yaw = wrap_pi(scenario_.initial.heading_deg * kDegToRad);
  trim_controls_ = trim.controls;
  servo_ = {surface_to_pulse(trim_controls_.aileron), surface_to_pulse(trim_controls_.elevator),
            surface_to_pulse(trim_controls_.rudder), throttle_to_pulse(trim_controls_.throttle)};

  estimate_.heading = truth_.attitude.yaw;
  pending_fix_ = gps_sample(gps_, truth_, 0.0, gps_rng_);

  schedule_ = scenario_.faults;
  std::stable_sort(schedule_.begin(), schedule_.end(),
                   [](const FaultEvent& a, const FaultEvent& b) { return a.at_time < b.at_time; });
  gains_echo_ = default_gains();
  gain_overrides_ = scenario_.gains;
  map_waypoints();

  wall_start_ = Clock::now();
  start_autopilot(0.0);
  resync_clock();
}

HilSession::~HilSession() { autopilot_.kill(); }

void HilSession::map_waypoints() {
  wp_ned_.clear();
  for (const auto& wp : scenario_.mission.waypoints) {
    wp_ned_.push_back(geodetic_to_ned({wp.latitude, wp.longitude, wp.altitude}, scenario_.origin));
  }
}

void HilSession::start_autopilot(double now) {
  autopilot_ = AutopilotProcess::spawn(autopilot_path_, link_kind_);
  autopilot_up_ = true;
  leg_start_.reset();
  shadow_uplink_.reset();
  raw_downlink_.reset();
  downlink_.reset();
  attitudes_delivered_ = 0;
  servos_seen_ = 0;
  last_frame_wall_ = Clock::now();

  // A freshly booted autopilot knows nothing: replay gain overrides and the
  // mission, resuming at the last waypoint it reported.
  queued_uplink_.clear();
  queued_frames_ = 0;
  for (const auto& [loop, g] : gain_overrides_) {
    wire::append_frame(queued_uplink_, gains_to_wire(loop, g));
    ++queued_frames_;
  }
  const auto resume = static_cast<std::uint8_t>(
      std::clamp<int>(current_wp_, 0, static_cast<int>(scenario_.mission.waypoints.size())));
  for (const auto& m : mission_to_wire(scenario_.mission, now > 0.0 ? resume : 0)) {
    wire::append_frame(queued_uplink_, m);
    ++queued_frames_;
  }
}

void HilSession::resync_clock() {
  pace_base_ = Clock::now();
  pace_base_sim_ = sim_time();
  last_frame_wall_ = pace_base_;
}

void HilSession::set_time_scale(double time_scale) {
  if (!(time_scale >= 0.0) || !std::isfinite(time_scale)) {
    throw Error(ErrorCode::InvalidConfig, "time_scale must be >= 0");
  }
  time_scale_ = time_scale;
  resync_clock();
}

void HilSession::set_gains(LoopId loop, const PidGains& gains) {
  gains.validate();
  gain_overrides_[loop] = gains;
  wire::append_frame(queued_uplink_, gains_to_wire(loop, gains));
  ++queued_frames_;
}

void HilSession::upload_mission(const Mission& mission) {
  mission.validate();
  if (mission.waypoints.empty()) throw Error(ErrorCode::InvalidConfig, "mission has no waypoints");
  scenario_.mission = mission;
  map_waypoints();
  current_wp_ = 0;
  max_wp_ = 0;
  for (const auto& m : mission_to_wire(mission, 0)) {
    wire::append_frame(queued_uplink_, m);
    ++queued_frames_;
  }
}

void HilSession::inject_fault(FaultEvent fault) {
  fault.at_time = std::max(fault.at_time, sim_time());
  fault.validate();
  const auto pos = std::upper_bound(
      schedule_.begin() + static_cast<std::ptrdiff_t>(next_fault_), schedule_.end(), fault,
      [](const FaultEvent& a, const FaultEvent& b) { return a.at_time < b.at_time; });
  schedule_.insert(pos, fault);
}

void HilSession::apply_due_faults(double now) {
  while (next_fault_ < schedule_.size() && schedule_[next_fault_].at_time <= now + 1e-9) {
    begin_fault(schedule_[next_fault_], now);
    ++next_fault_;
  }
}

void HilSession::begin_fault(const FaultEvent& f, double now) {
  ActiveFault a;
  a.event = f;
  a.start = now;
  a.until = now + f.duration;
  a.log_index = report_.fault_log.size();
  a.start_altitude = truth_.altitude() + scenario_.origin.altitude_msl;
  a.uplink_corrupted0 = report_.uplink.corrupted;
  a.downlink_corrupted0 = report_.downlink.corrupted;
  report_.fault_log.push_back({now, to_string(f.kind), "in progress"});

  switch (f.kind) {
    case FaultKind::PowerBrownout:
      if (autopilot_up_) {
        autopilot_.kill();
        autopilot_up_ = false;
        restart_at_ = now + f.reset_delay;
      } else {
        restart_at_ = std::max(restart_at_, now + f.reset_delay);
      }
      a.until = restart_at_;
      break;
    case FaultKind::GpsDropout:
      gps_.add_dropout(now, f.duration);
      break;
    case FaultKind::GyroBiasJump:
      gyro_.add_bias(f.bias_jump);
      a.until = now;
      break;
    case FaultKind::ServoStuck:
    case FaultKind::LinkNoise:
      break;
  }
  active_.push_back(a);
  if (f.kind == FaultKind::GyroBiasJump) finish_fault(active_.back(), now);
}

void HilSession::finish_fault(ActiveFault& a, double now, const std::string& suffix) {
  if (a.finished) return;
  a.finished = true;
  const FaultEvent& f = a.event;
  const double altitude = truth_.altitude() + scenario_.origin.altitude_msl;
  std::string effect;
  switch (f.kind) {
    case FaultKind::PowerBrownout:
      effect = autopilot_up_
                   ? format("autopilot killed, servos held for %.2f s, restarted cold and resumed at waypoint %d; altitude change %+.1f m",
                            now - a.start, current_wp_, altitude - a.start_altitude)
                   : format("autopilot killed, servos held for %.2f s; altitude change %+.1f m",
                            now - a.start, altitude - a.start_altitude);
      break;
    case FaultKind::GpsDropout:
      effect = format("no GPS fixes for %.2f s", now - a.start);
      break;
    case FaultKind::ServoStuck:
      effect = format("%s held at %u us for %.2f s; altitude change %+.1f m", to_string(f.channel),
                      static_cast<unsigned>(f.pulse_us), now - a.start, altitude - a.start_altitude);
      break;
    case FaultKind::GyroBiasJump:
      effect = format("gyro bias stepped by %+.4f rad/s to %+.4f rad/s", f.bias_jump, gyro_.bias());
      break;
    case FaultKind::LinkNoise:
      effect = format("byte error rate %.4g for %.2f s corrupted %llu uplink and %llu downlink frames",
                      f.byte_error_rate, now - a.start,
                      static_cast<unsigned long long>(report_.uplink.corrupted - a.uplink_corrupted0),
                      static_cast<unsigned long long>(report_.downlink.corrupted - a.downlink_corrupted0));
      break;
  }
  report_.fault_log[a.log_index].effect = effect + suffix;
}

void HilSession::update_fault_windows(double now) {
  for (auto& a : active_) {
    if (a.finished || a.event.kind == FaultKind::PowerBrownout) continue;
    if (now >= a.until - 1e-9) finish_fault(a, now);
  }
}

bool HilSession::link_noise_active(double now) const {
  for (const auto& a : active_) {
    if (a.event.kind == FaultKind::LinkNoise && now >= a.start && now < a.until - 1e-9) return true;
  }
  return false;
}

std::uint32_t HilSession::active_fault_flags(double now) const {
  std::uint32_t flags = 0;
  for (const auto& a : active_) {
    const bool instant = a.event.kind == FaultKind::GyroBiasJump;
    if (instant ? now == a.start : (now >= a.start && now < a.until - 1e-9)) {
      flags |= fault_bit(a.event.kind);
    }
  }
  if (!autopilot_up_) flags |= fault_bit(FaultKind::PowerBrownout);
  return flags;
}

void HilSession::corrupt(std::vector<std::uint8_t>& bytes) {
  double rate = 0.0;
  for (const auto& a : active_) {
    if (a.event.kind == FaultKind::LinkNoise && !a.finished) rate = std::max(rate, a.event.byte_error_rate);
  }
  for (auto& b : bytes) {
    if (link_rng_.uniform() < rate) b ^= static_cast<std::uint8_t>(1u << (link_rng_.next() % 8));
  }
}

Vec3 HilSession::wind_at_step() {
  const WindModel& w = scenario_.wind;
  if (w.gust_sd > 0.0) {
    const double a = std::exp(-kPlantDt / w.gust_tau);
    const double s = w.gust_sd * std::sqrt(1.0 - a * a);
    gust_ = {a * gust_.x + wind_rng_.normal(s), a * gust_.y + wind_rng_.normal(s),
             a * gust_.z + wind_rng_.normal(s)};
  }
  return w.mean_ned + gust_;
}

void HilSession::send_frames(std::vector<std::uint8_t> bytes, std::size_t frame_count, double now) {
  report_.uplink.frames_sent += frame_count;
  if (link_noise_active(now)) corrupt(bytes);
  std::vector<wire::Message> seen;
  const std::size_t errors = shadow_uplink_.feed(bytes, seen);
  report_.uplink.corrupted += errors;
  if (!link_noise_active(now)) report_.link_desyncs += errors;
  report_.uplink.frames_received += seen.size();
  for (const auto& m : seen) {
    if (std::holds_alternative<wire::AttitudeMsg>(m)) ++attitudes_delivered_;
  }
  if (!autopilot_.write_all(bytes)) {
    throw Error(ErrorCode::LinkTimeout, "autopilot closed the link");
  }
}

void HilSession::absorb_downlink(std::span<const std::uint8_t> raw, double now) {
  std::vector<wire::Message> clean;
  raw_downlink_.feed(raw, clean);
  report_.downlink.frames_sent += clean.size();
  for (const auto& m : clean) {
    if (std::holds_alternative<wire::ServoMsg>(m)) ++servos_seen_;
  }

  std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  if (link_noise_active(now)) corrupt(bytes);
  std::vector<wire::Message> msgs;
  const std::size_t errors = downlink_.feed(bytes, msgs);
  report_.downlink.corrupted += errors;
  if (!link_noise_active(now)) report_.link_desyncs += errors;
  report_.downlink.frames_received += msgs.size();
  for (const auto& m : msgs) handle_message(m, now);
}

void HilSession::handle_message(const wire::Message& message, double now) {
  if (const auto* s = std::get_if<wire::ServoMsg>(&message)) {
    servo_ = {s->aileron_us, s->elevator_us, s->rudder_us, s->throttle_us};
  } else if (const auto* st = std::get_if<wire::StatusMsg>(&message)) {
    const NavMode mode = static_cast<NavMode>(std::min<std::uint8_t>(st->mode, 3));
    // Mirror the autopilot's leg definition: a leg entered from a loiter
    // starts where the loiter was left.
    if (mode == NavMode::Nav && mode_ == NavMode::Loiter) {
      leg_start_ = truth_.position;
    } else if (st->current_wp != current_wp_) {
      leg_start_.reset();
    }
    mode_ = mode;
    current_wp_ = st->current_wp;
    status_crosstrack_ = wire::wire_to_physical(st->crosstrack_dm, wire::fields::kCrosstrackDm);
    const int captured = current_wp_ + (mode_ == NavMode::Loiter ? 1 : 0);
    max_wp_ = std::max(max_wp_, std::min<int>(captured, static_cast<int>(wp_ned_.size())));
    if (mode_ == NavMode::Complete) report_.completed = true;
  } else if (const auto* o = std::get_if<wire::ObjectivesMsg>(&message)) {
    objectives_.roll_cmd = o->roll_cdeg / 100.0 * kDegToRad;
    objectives_.pitch_cmd = o->pitch_cdeg / 100.0 * kDegToRad;
    objectives_.heading_cmd = wrap_pi(o->heading_cdeg / 100.0 * kDegToRad);
    objectives_.speed_cmd = o->speed_cms / 100.0;
  } else if (const auto* ack = std::get_if<wire::GainsAckMsg>(&message)) {
    if (ack->gains.loop_id < kLoopCount) {
      const auto loop = static_cast<LoopId>(ack->gains.loop_id);
      if (ack->result == wire::kGainsApplied) {
        gains_echo_[loop] = gains_from_wire(ack->gains, gains_echo_[loop]);
      } else {
        report_.warnings.push_back(format("t=%.2f: autopilot rejected gains for loop %s", now, to_string(loop)));
      }
    }
  }
}

void HilSession::exchange(double now) {
  const bool lockstep = time_scale_ <= 0.0;
  Clock::time_point deadline{};
  if (!lockstep) {
    deadline = pace_base_ + std::chrono::duration_cast<Clock::duration>(
                                std::chrono::duration<double>((now + kControlDt - pace_base_sim_) / time_scale_));
  }
  auto wait_start = Clock::now();
  std::vector<std::uint8_t> buf;
  for (;;) {
    const auto wall = Clock::now();
    std::chrono::milliseconds wait;
    if (lockstep) {
      if (!autopilot_up_ || servos_seen_ >= attitudes_delivered_) return;
      const auto left = wait_start + std::chrono::duration_cast<Clock::duration>(
                                         std::chrono::duration<double>(kLinkTimeout)) - wall;
      if (left <= Clock::duration::zero()) {
        throw Error(ErrorCode::LinkTimeout, format("no servo frame for tick at t=%.2f s", now));
      }
      wait = std::chrono::ceil<std::chrono::milliseconds>(left);
    } else {
      if (wall >= deadline) break;
      wait = std::chrono::ceil<std::chrono::milliseconds>(deadline - wall);
    }
    if (!autopilot_up_) {
      std::this_thread::sleep_for(wait);
      continue;
    }
    buf.clear();
    switch (autopilot_.read_some(buf, wait)) {
      case AutopilotProcess::ReadStatus::Data:
        wait_start = Clock::now();
        last_frame_wall_ = wait_start;
        absorb_downlink(buf, now);
        break;
      case AutopilotProcess::ReadStatus::Closed:
        throw Error(ErrorCode::LinkTimeout, "autopilot closed the link");
      case AutopilotProcess::ReadStatus::Timeout:
        break;
    }
  }
  if (autopilot_up_ && Clock::now() - last_frame_wall_ > std::chrono::duration<double>(kLinkTimeout)) {
    throw Error(ErrorCode::LinkTimeout, format("no autopilot frame for %.1f s", kLinkTimeout));
  }
}

ServoCommand HilSession::applied_servo(double now) const {
  ServoCommand s = servo_;
  if (options_.sweep) {
    const SweepInjection& sw = *options_.sweep;
    const double t = now - sw.start_time;
    if (t >= 0.0 && t <= sw.spec.duration) {
      const double pulse = trim_pulse_exact(trim_controls_, sw.axis) + sysid::sweep_value(sw.spec, t);
      channel_ref(s, sw.axis) = static_cast<std::uint16_t>(std::clamp<long>(std::lround(pulse), 1000, 2000));
    }
  }
  for (const auto& a : active_) {
    if (a.event.kind == FaultKind::ServoStuck && now >= a.start && now < a.until - 1e-9) {
      channel_ref(s, a.event.channel) = a.event.pulse_us;
    }
  }
  return s;
}

void HilSession::plant_step(const ControlSurfaces& controls) {
  const Vec3 wind = wind_at_step();
  truth_ = step_dynamics(truth_, controls, scenario_.airframe, kPlantDt, wind);
  if (!guard_warned_ && at_gimbal_guard(truth_)) {
    guard_warned_ = true;
    report_.warnings.push_back(format("t=%.2f: pitch reached the gimbal guard", truth_.time));
  }
  if (auto fix = gps_sample(gps_, truth_, truth_.time, gps_rng_)) pending_fix_ = fix;
}

void HilSession::record_metrics(const TelemetryRecord& r) {
  report_.nan_fields += count_nan(r);
  const std::size_t n = wp_ned_.size();
  if (n == 0) return;
  const auto k = static_cast<std::size_t>(current_wp_);
  const Ned prev = k >= 1 && k <= n ? leg_start_.value_or(wp_ned_[k - 1]) : Ned{};
  if (mode_ == NavMode::Nav && scenario_.mission.crosstrack_enabled && k >= 1 && k < n &&
      prev.horizontal_distance_to(wp_ned_[k]) >= 1.0) {
    const double xte = crosstrack_error(prev, wp_ned_[k], r.truth.position);
    xt_sum_sq_ += xte * xte;
    ++xt_samples_;
    report_.crosstrack_max = std::max(report_.crosstrack_max, std::abs(xte));
  }
  if (mode_ == NavMode::Nav || mode_ == NavMode::Loiter) {
    const double target = scenario_.mission.waypoints[std::min(k, n - 1)].altitude;
    const double err = r.truth.altitude() + scenario_.origin.altitude_msl - target;
    alt_sum_sq_ += err * err;
    ++alt_samples_;
  }
}

bool HilSession::step() {
  if (finished_) return false;
  const double now = static_cast<double>(tick_) * kControlDt;
  if (now >= scenario_.duration_limit - 1e-9) {
    stop("duration limit");
    return false;
  }

  apply_due_faults(now);
  if (!autopilot_up_ && now >= restart_at_ - 1e-9) {
    start_autopilot(now);
    ++report_.autopilot_restarts;
    for (auto& a : active_) {
      if (a.event.kind == FaultKind::PowerBrownout) finish_fault(a, now);
    }
  }
  update_fault_windows(now);

  // Sensors, evaluated on the state at the start of the tick. The horizon
  // model is only defined below 90 degrees of tilt.
  const double lim = kPi / 2.0 - 1e-6;
  const ThermopileQuad quad = thermopile_measure(std::clamp(truth_.attitude.roll, -lim, lim),
                                                 std::clamp(truth_.attitude.pitch, -lim, lim),
                                                 scenario_.environment, thermopile_rng_);
  const SensorEnvironment& env = scenario_.environment;
  const RollPitch rp = estimate_roll_pitch(quad, env.sky_temperature, env.ground_temperature,
                                           env.calibration_floor);
  const GyroSample gyro = gyro_.sample(truth_.angular_rate_body.z, now, gyro_rng_);
  const std::optional<GpsFix> fix = pending_fix_;
  pending_fix_.reset();
  estimate_.heading = tick_ == 0 ? estimate_.heading
                                 : fuse_heading(estimate_, gyro, fix, kControlDt, env.heading_blend,
                                                env.gps_course_min_speed);
  estimate_.roll = rp.roll;
  estimate_.pitch = rp.pitch;
  estimate_.estimate_time = now;

  if (autopilot_up_) {
    std::vector<std::uint8_t> bytes;
    std::size_t frames = queued_frames_ + 1;
    if (fix) {
      wire::append_frame(bytes, gps_frame(*fix));
      ++frames;
    }
    bytes.insert(bytes.end(), queued_uplink_.begin(), queued_uplink_.end());
    queued_uplink_.clear();
    queued_frames_ = 0;
    wire::append_frame(bytes, attitude_frame(estimate_, gyro.yaw_rate));
    send_frames(std::move(bytes), frames, now);
  }
  exchange(now);

  const ServoCommand applied = applied_servo(now);
  TelemetryRecord rec;
  rec.time = now;
  rec.truth = truth_;
  rec.estimate = estimate_;
  rec.objectives = objectives_;
  rec.servo = applied;
  rec.gps = fix;
  rec.fault_flags = active_fault_flags(now);
  record_metrics(rec);
  snapshot_ = {rec, mode_, current_wp_, status_crosstrack_, gains_echo_};
  if (options_.on_record) options_.on_record(rec);

  const ControlSurfaces controls = pulses_to_controls(applied);
  for (int i = 0; i < 2; ++i) {
    try {
      plant_step(controls);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteState) throw;
      report_.crashed = true;
      report_.warnings.push_back(e.what());
      ++tick_;
      stop("non-finite state");
      return false;
    }
    if (truth_.position.down >= 0.0) {
      const double descent = truth_.velocity_ned().z;
      ++tick_;
      if (descent > kCrashDescentRate) {
        report_.crashed = true;
        stop(format("crash: ground contact at %.1f m/s descent", descent));
      } else {
        report_.landed = true;
        stop(format("landed: ground contact at %.1f m/s descent", descent));
      }
      return false;
    }
  }
  ++tick_;

  if (scenario_.stop_on_complete && mode_ == NavMode::Complete) {
    stop("mission complete");
    return false;
  }
  return true;
}

void HilSession::stop(const std::string& reason) {
  if (finished_) return;
  finished_ = true;
  report_.end_reason = reason;
  for (auto& a : active_) finish_fault(a, sim_time(), "; run ended during the fault");
  autopilot_.kill();
  report_.wall_time = std::chrono::duration<double>(Clock::now() - wall_start_).count();
}

RunReport HilSession::report() const {
  RunReport r = report_;
  r.waypoints_captured = max_wp_;
  r.crosstrack_rms = xt_samples_ ? std::sqrt(xt_sum_sq_ / static_cast<double>(xt_samples_)) : 0.0;
  r.altitude_rms_error = alt_samples_ ? std::sqrt(alt_sum_sq_ / static_cast<double>(alt_samples_)) : 0.0;
  r.sim_time = sim_time();
  if (!finished_) r.wall_time = std::chrono::duration<double>(Clock::now() - wall_start_).count();
  return r;
}

nlohmann::json report_to_json(const RunReport& r, bool include_wall_time) {
  auto link = [](const LinkDirectionStats& s) {
    return nlohmann::json{{"frames_sent", s.frames_sent},
                          {"frames_received", s.frames_received},
                          {"corrupted", s.corrupted}};
  };
  nlohmann::json faults = nlohmann::json::array();
  for (const auto& f : r.fault_log) {
    faults.push_back({{"time", f.time}, {"kind", f.kind}, {"effect", f.effect}});
  }
  nlohmann::json j{{"completed", r.completed},
                   {"waypoints_captured", r.waypoints_captured},
                   {"crosstrack_rms", r.crosstrack_rms},
                   {"crosstrack_max", r.crosstrack_max},
                   {"altitude_rms_error", r.altitude_rms_error},
                   {"crashed", r.crashed},
                   {"landed", r.landed},
                   {"end_reason", r.end_reason},
                   {"fault_log", faults},
                   {"link_stats", {{"uplink", link(r.uplink)}, {"downlink", link(r.downlink)}}},
                   {"link_desyncs", r.link_desyncs},
                   {"nan_fields", r.nan_fields},
                   {"autopilot_restarts", r.autopilot_restarts},
                   {"warnings", r.warnings},
                   {"sim_time", r.sim_time}};
  if (include_wall_time) j["wall_time"] = r.wall_time;
  return j;
}

RunReport run_scenario(const Scenario& scenario, const RunOptions& options) {
  HilSession session(scenario, options);
  while (session.step()) {
  }
  return session.report();
}

}  // namespace hil
