#include "hilsim/sensors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include <nlohmann/json.hpp>

#include "hilsim/error.hpp"

namespace hil {

void SensorEnvironment::validate() const {
  if (!(ground_temperature > sky_temperature)) {
    throw Error(ErrorCode::InvalidConfig, "ground_temperature must exceed sky_temperature");
  }
  if (!(gps_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "gps_rate must be > 0");
  if (!(gps_delay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "gps_delay must be >= 0");
  if (thermopile_noise_sd < 0.0 || gyro_noise_sd < 0.0 || gyro_bias_walk_sd < 0.0 ||
      gps_noise.horizontal < 0.0 || gps_noise.vertical < 0.0 || gps_noise.speed < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "noise standard deviations must be >= 0");
  }
  if (!(gyro_full_scale > 0.0)) throw Error(ErrorCode::InvalidConfig, "gyro_full_scale must be > 0");
  if (!(heading_blend >= 0.0 && heading_blend <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "heading_blend must be in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const SensorEnvironment& e) {
  j = nlohmann::json{
      {"sky_temperature", e.sky_temperature},
      {"ground_temperature", e.ground_temperature},
      {"thermopile_noise_sd", e.thermopile_noise_sd},
      {"gps_noise",
       {{"horizontal", e.gps_noise.horizontal},
        {"vertical", e.gps_noise.vertical},
        {"speed", e.gps_noise.speed}}},
      {"gps_rate", e.gps_rate},
      {"gps_delay", e.gps_delay},
      {"gyro_noise_sd", e.gyro_noise_sd},
      {"gyro_bias_walk_sd", e.gyro_bias_walk_sd},
      {"gyro_initial_bias", e.gyro_initial_bias},
      {"gyro_full_scale", e.gyro_full_scale},
      {"heading_blend", e.heading_blend},
      {"gps_course_min_speed", e.gps_course_min_speed},
      {"calibration_floor", e.calibration_floor},
      {"rng_seed", e.rng_seed},
  };
}

void from_json(const nlohmann::json& j, SensorEnvironment& e) {
  const SensorEnvironment d;
  try {
    e.sky_temperature = j.value("sky_temperature", d.sky_temperature);
    e.ground_temperature = j.value("ground_temperature", d.ground_temperature);
    e.thermopile_noise_sd = j.value("thermopile_noise_sd", d.thermopile_noise_sd);
    if (j.contains("gps_noise")) {
      const auto& g = j.at("gps_noise");
      e.gps_noise.horizontal = g.value("horizontal", 0.0);
      e.gps_noise.vertical = g.value("vertical", 0.0);
      e.gps_noise.speed = g.value("speed", 0.0);
    }
    e.gps_rate = j.value("gps_rate", d.gps_rate);
    e.gps_delay = j.value("gps_delay", d.gps_delay);
    e.gyro_noise_sd = j.value("gyro_noise_sd", d.gyro_noise_sd);
    e.gyro_bias_walk_sd = j.value("gyro_bias_walk_sd", d.gyro_bias_walk_sd);
    e.gyro_initial_bias = j.value("gyro_initial_bias", d.gyro_initial_bias);
    e.gyro_full_scale = j.value("gyro_full_scale", d.gyro_full_scale);
    e.heading_blend = j.value("heading_blend", d.heading_blend);
    e.gps_course_min_speed = j.value("gps_course_min_speed", d.gps_course_min_speed);
    e.calibration_floor = j.value("calibration_floor", d.calibration_floor);
    e.rng_seed = j.value("rng_seed", d.rng_seed);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidConfig, std::string("environment: ") + ex.what());
  }
  e.validate();
}

ThermopileQuad thermopile_measure(double roll, double pitch, const SensorEnvironment& env,
                                  Rng& rng) {
  assert(std::abs(roll) < kPi / 2.0 && std::abs(pitch) < kPi / 2.0);
  const double t_sky = env.sky_temperature;
  const double t_ground = env.ground_temperature;
  const double mid = 0.5 * (t_ground + t_sky);
  const double span = 0.5 * (t_ground - t_sky);
  auto reading = [&](double ideal) {
    return std::clamp(ideal + rng.normal(env.thermopile_noise_sd), t_sky, t_ground);
  };
  ThermopileQuad q;
  q.t_forward = reading(mid - span * std::sin(pitch));
  q.t_aft = reading(mid + span * std::sin(pitch));
  q.t_right = reading(mid - span * std::sin(roll));
  q.t_left = reading(mid + span * std::sin(roll));
  return q;
}

RollPitch estimate_roll_pitch(const ThermopileQuad& quad, double t_sky, double t_ground,
                              double floor) {
  const double contrast = t_ground - t_sky;
  if (!(contrast >= floor)) {
    throw Error(ErrorCode::DegenerateCalibration,
                "sky/ground contrast " + std::to_string(contrast) + " K below floor");
  }
  auto angle = [&](double diff) {
    const double s = diff / contrast;
    return std::asin(std::isfinite(s) ? std::clamp(s, -1.0, 1.0) : 0.0);
  };
  return {angle(quad.t_left - quad.t_right), angle(quad.t_aft - quad.t_forward)};
}

GpsReceiver::GpsReceiver(GeoOrigin origin, SensorEnvironment env)
    : origin_(origin), env_(env) {
  env_.validate();
}

void GpsReceiver::add_dropout(double start, double duration) {
  dropouts_.emplace_back(start, start + duration);
}

bool GpsReceiver::in_dropout(double t) const {
  return std::any_of(dropouts_.begin(), dropouts_.end(),
                     [t](const auto& w) { return t >= w.first && t <= w.second; });
}

std::optional<GpsFix> GpsReceiver::sample(const RigidBodyState& truth, double now, Rng& rng) {
  assert(now >= last_now_);
  last_now_ = now;
  constexpr double kEpochSlack = 1e-9;
  const double period = 1.0 / env_.gps_rate;

  if (now + kEpochSlack >= static_cast<double>(next_epoch_) * period) {
    // Skip any epochs missed by a coarse caller; only the latest is measured.
    while (now + kEpochSlack >= static_cast<double>(next_epoch_ + 1) * period) ++next_epoch_;
    ++next_epoch_;
    if (!in_dropout(now)) {
      const Geodetic geo = ned_to_geodetic(truth.position, origin_);
      const Vec3 vel = truth.velocity_ned();
      const double cos_lat0 = std::cos(origin_.latitude * kDegToRad);
      GpsFix fix;
      fix.latitude = geo.latitude + rng.normal(env_.gps_noise.horizontal) / kEarthRadius * kRadToDeg;
      fix.longitude = geo.longitude + rng.normal(env_.gps_noise.horizontal) /
                                          (kEarthRadius * cos_lat0) * kRadToDeg;
      fix.altitude = geo.altitude + rng.normal(env_.gps_noise.vertical);
      fix.ground_speed = std::max(0.0, std::hypot(vel.x, vel.y) + rng.normal(env_.gps_noise.speed));
      fix.course_over_ground = wrap_360(std::atan2(vel.y, vel.x) * kRadToDeg);
      fix.fix_time = now;
      fix.valid = true;
      in_flight_.push_back(fix);
    }
  }

  std::optional<GpsFix> out;
  while (!in_flight_.empty() && in_flight_.front().fix_time + env_.gps_delay <= now + kEpochSlack) {
    out = in_flight_.front();
    in_flight_.pop_front();
  }
  return out;
}

std::optional<GpsFix> gps_sample(GpsReceiver& receiver, const RigidBodyState& truth, double now,
                                 Rng& rng) {
  return receiver.sample(truth, now, rng);
}

Gyro::Gyro(const SensorEnvironment& env)
    : noise_sd_(env.gyro_noise_sd),
      walk_sd_(env.gyro_bias_walk_sd),
      full_scale_(env.gyro_full_scale),
      bias_(env.gyro_initial_bias) {}

GyroSample Gyro::sample(double true_rate, double now, Rng& rng) {
  if (last_time_ >= 0.0 && now > last_time_ && walk_sd_ > 0.0) {
    bias_ += walk_sd_ * std::sqrt(now - last_time_) * rng.normal();
  }
  last_time_ = now;
  const double measured = true_rate + bias_ + rng.normal(noise_sd_);
  return {std::clamp(measured, -full_scale_, full_scale_), bias_, now};
}

double fuse_heading(const AttitudeEstimate& previous, const GyroSample& gyro,
                    const std::optional<GpsFix>& gps, double dt, double blend, double min_speed) {
  double h = wrap_pi(previous.heading + gyro.yaw_rate * dt);
  if (gps && gps->valid && gps->ground_speed > min_speed) {
    const double course = wrap_pi(gps->course_over_ground * kDegToRad);
    h = wrap_pi(h + blend * wrap_pi(course - h));
  }
  return std::isfinite(h) ? h : wrap_pi(previous.heading);
}

}  // namespace hil
