#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hilsim/flight_dynamics.hpp"
#include "hilsim/geodesy.hpp"
#include "hilsim/rng.hpp"

namespace hil {

struct GpsNoise {
  double horizontal = 0.0;  // m (1 sigma, per axis)
  double vertical = 0.0;    // m
  double speed = 0.0;       // m/s

  bool operator==(const GpsNoise&) const = default;
};

struct SensorEnvironment {
  double sky_temperature = 260.0;     // K
  double ground_temperature = 290.0;  // K
  double thermopile_noise_sd = 0.0;   // K
  GpsNoise gps_noise;
  double gps_rate = 4.0;              // Hz
  double gps_delay = 0.0;             // s
  double gyro_noise_sd = 0.0;         // rad/s
  double gyro_bias_walk_sd = 0.0;     // rad/s/sqrt(s)
  double gyro_initial_bias = 0.0;     // rad/s
  double gyro_full_scale = 1.31;      // rad/s
  double heading_blend = 0.05;
  double gps_course_min_speed = 3.0;  // m/s
  double calibration_floor = 1.0;     // K
  std::uint64_t rng_seed = 1;

  bool operator==(const SensorEnvironment&) const = default;
  void validate() const;
};

void to_json(nlohmann::json& j, const SensorEnvironment& e);
void from_json(const nlohmann::json& j, SensorEnvironment& e);

struct GpsFix {
  double latitude = 0.0;            // deg
  double longitude = 0.0;           // deg
  double altitude = 0.0;            // m MSL
  double ground_speed = 0.0;        // m/s
  double course_over_ground = 0.0;  // deg [0, 360)
  double fix_time = 0.0;            // s
  bool valid = false;

  bool operator==(const GpsFix&) const = default;
};

struct ThermopileQuad {
  double t_forward = 0.0;
  double t_aft = 0.0;
  double t_left = 0.0;
  double t_right = 0.0;
};

struct GyroSample {
  double yaw_rate = 0.0;  // rad/s, measured
  double bias = 0.0;      // rad/s, hidden truth
  double sample_time = 0.0;
};

struct AttitudeEstimate {
  double roll = 0.0;
  double pitch = 0.0;
  double heading = 0.0;  // [-pi, pi)
  double estimate_time = 0.0;
};

struct RollPitch {
  double roll = 0.0;
  double pitch = 0.0;
};

/// Horizon thermopile forward model. A sensor tilted towards the sky reads
/// cooler; the reading moves by (T_ground - T_sky)/2 * sin(angle) about the
/// mid temperature. Noise is Gaussian per sensor, clamped to the sky/ground span.
ThermopileQuad thermopile_measure(double roll, double pitch, const SensorEnvironment& env, Rng& rng);

/// Inverts the forward model. Throws DegenerateCalibration when the
/// sky/ground contrast is below `floor` kelvin.
RollPitch estimate_roll_pitch(const ThermopileQuad& quad, double t_sky, double t_ground,
                              double floor = 1.0);

/// GPS receiver emulation: fixes at multiples of 1/gps_rate, optional
/// delivery delay, and dropout windows during which no fix is produced.
class GpsReceiver {
 public:
  GpsReceiver(GeoOrigin origin, SensorEnvironment env);

  void add_dropout(double start, double duration);

  /// Call with non-decreasing `now`. Returns the fix due for delivery, if any.
  std::optional<GpsFix> sample(const RigidBodyState& truth, double now, Rng& rng);

 private:
  bool in_dropout(double t) const;

  GeoOrigin origin_;
  SensorEnvironment env_;
  std::int64_t next_epoch_ = 0;
  double last_now_ = -1.0;
  std::vector<std::pair<double, double>> dropouts_;
  std::deque<GpsFix> in_flight_;
};

/// Convenience wrapper matching the stateless call shape: draws the fix for
/// `now` through the receiver.
std::optional<GpsFix> gps_sample(GpsReceiver& receiver, const RigidBodyState& truth, double now,
                                 Rng& rng);

/// Yaw-rate gyro: body-axis rate plus random-walk bias and white noise,
/// saturated at full scale.
class Gyro {
 public:
  explicit Gyro(const SensorEnvironment& env);

  GyroSample sample(double true_rate, double now, Rng& rng);
  void add_bias(double jump) { bias_ += jump; }
  double bias() const { return bias_; }

 private:
  double noise_sd_;
  double walk_sd_;
  double full_scale_;
  double bias_;
  double last_time_ = -1.0;
};

/// Fixed-gain complementary heading filter: integrate the gyro, then pull a
/// fraction `blend` of the way towards the GPS course when a moving fix is present.
double fuse_heading(const AttitudeEstimate& previous, const GyroSample& gyro,
                    const std::optional<GpsFix>& gps, double dt, double blend,
                    double min_speed = 3.0);

}  // namespace hil
