#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "hilsim/error.hpp"
#include "hilsim/geodesy.hpp"
#include "hilsim/rng.hpp"
#include "hilsim/sensors.hpp"

using namespace hil;

namespace {

RigidBodyState moving_north(double speed) {
  RigidBodyState s;
  s.velocity_body = {speed, 0.0, 0.0};
  return s;
}

}  // namespace

TEST_SUITE("sensors") {

TEST_CASE("level attitude reads the mid temperature everywhere") {
  SensorEnvironment env;
  Rng rng(1);
  const ThermopileQuad q = thermopile_measure(0.0, 0.0, env, rng);
  const double mid = 0.5 * (env.sky_temperature + env.ground_temperature);
  CHECK(q.t_forward == mid);
  CHECK(q.t_aft == mid);
  CHECK(q.t_left == mid);
  CHECK(q.t_right == mid);
}

TEST_CASE("nose up makes the forward sensor cooler") {
  SensorEnvironment env;
  Rng rng(1);
  const ThermopileQuad q = thermopile_measure(0.0, 10.0 * kDegToRad, env, rng);
  CHECK(q.t_forward < q.t_aft);
}

TEST_CASE("left/right split at 80 degrees of roll") {
  SensorEnvironment env;
  Rng rng(1);
  const ThermopileQuad q = thermopile_measure(80.0 * kDegToRad, 0.0, env, rng);
  const double span = env.ground_temperature - env.sky_temperature;
  CHECK(std::abs((q.t_left - q.t_right) - span * std::sin(80.0 * kDegToRad)) < 1e-9);
}

TEST_CASE("noise-free thermopile round trip over random attitudes") {
  SensorEnvironment env;
  Rng rng(3);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> angle(-60.0 * kDegToRad, 60.0 * kDegToRad);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double roll = angle(gen), pitch = angle(gen);
    const RollPitch rp = estimate_roll_pitch(thermopile_measure(roll, pitch, env, rng),
                                             env.sky_temperature, env.ground_temperature);
    worst = std::max({worst, std::abs(rp.roll - roll), std::abs(rp.pitch - pitch)});
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("estimator edge cases") {
  const ThermopileQuad equal{275.0, 275.0, 275.0, 275.0};
  const RollPitch zero = estimate_roll_pitch(equal, 260.0, 290.0);
  CHECK(zero.roll == 0.0);
  CHECK(zero.pitch == 0.0);

  const ThermopileQuad outlier{200.0, 400.0, 400.0, 200.0};
  const RollPitch clamped = estimate_roll_pitch(outlier, 260.0, 290.0);
  CHECK(clamped.pitch == kPi / 2.0);
  CHECK(clamped.roll == kPi / 2.0);

  try {
    estimate_roll_pitch(equal, 275.0, 275.5);
    FAIL("expected DegenerateCalibration");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateCalibration);
  }
}

TEST_CASE("noisy readings stay inside the sky/ground span") {
  SensorEnvironment env;
  env.thermopile_noise_sd = 20.0;
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const ThermopileQuad q = thermopile_measure(0.5, -0.5, env, rng);
    for (double t : {q.t_forward, q.t_aft, q.t_left, q.t_right}) {
      CHECK(t >= env.sky_temperature);
      CHECK(t <= env.ground_temperature);
    }
  }
}

TEST_CASE("gps cadence: four fixes in one second at 4 Hz") {
  SensorEnvironment env;
  GpsReceiver rx({-6.9, 107.6, 700.0}, env);
  Rng rng(1);
  int fixes = 0;
  for (int i = 0; i < 200; ++i) {
    if (gps_sample(rx, moving_north(18.0), i * 0.005, rng)) ++fixes;
  }
  CHECK(fixes == 4);
}

TEST_CASE("gps cadence over long spans is floor(T * rate) +- 1") {
  for (double rate : {1.0, 4.0, 5.0, 10.0}) {
    SensorEnvironment env;
    env.gps_rate = rate;
    GpsReceiver rx({0.0, 0.0, 0.0}, env);
    Rng rng(1);
    int fixes = 0;
    double last = -1.0;
    for (int i = 0; i < 3700; ++i) {
      if (auto f = rx.sample(moving_north(10.0), i * 0.01, rng)) {
        ++fixes;
        CHECK(f->fix_time > last);
        last = f->fix_time;
      }
    }
    const int expected = static_cast<int>(std::floor(37.0 * rate));
    CHECK(std::abs(fixes - expected) <= 1);
  }
}

TEST_CASE("noise-free stationary fix at the origin is exact") {
  SensorEnvironment env;
  const GeoOrigin origin{-6.891, 107.61, 700.0};
  GpsReceiver rx(origin, env);
  Rng rng(1);
  const auto fix = rx.sample(RigidBodyState{}, 0.0, rng);
  REQUIRE(fix);
  CHECK(fix->latitude == origin.latitude);
  CHECK(fix->longitude == origin.longitude);
  CHECK(fix->altitude == origin.altitude_msl);
  CHECK(fix->ground_speed == 0.0);
  CHECK(fix->valid);
}

TEST_CASE("course over ground follows the horizontal velocity") {
  SensorEnvironment env;
  GpsReceiver rx({0.0, 0.0, 0.0}, env);
  Rng rng(1);
  RigidBodyState s;
  s.velocity_body = {10.0, 0.0, 0.0};
  s.attitude.yaw = -90.0 * kDegToRad;
  const auto fix = rx.sample(s, 0.0, rng);
  REQUIRE(fix);
  CHECK(fix->course_over_ground == doctest::Approx(270.0));
  CHECK(fix->ground_speed == doctest::Approx(10.0));
}

TEST_CASE("dropout window suppresses fixes") {
  SensorEnvironment env;
  GpsReceiver rx({0.0, 0.0, 0.0}, env);
  rx.add_dropout(2.0, 3.0);
  Rng rng(1);
  double first_after = -1.0;
  for (int i = 0; i <= 800; ++i) {
    const double t = i * 0.01;
    if (auto f = rx.sample(moving_north(15.0), t, rng)) {
      CHECK_FALSE((f->fix_time >= 2.0 && f->fix_time < 5.0));
      if (f->fix_time >= 5.0 && first_after < 0.0) first_after = f->fix_time;
    }
  }
  CHECK(first_after >= 5.0);
  CHECK(first_after <= 5.0 + 1.0 / env.gps_rate + 1e-9);
}

TEST_CASE("gps delay shifts delivery, not the timestamp") {
  SensorEnvironment env;
  env.gps_delay = 0.1;
  GpsReceiver rx({0.0, 0.0, 0.0}, env);
  Rng rng(1);
  for (int i = 0; i <= 100; ++i) {
    const double t = i * 0.01;
    if (auto f = rx.sample(moving_north(15.0), t, rng)) {
      CHECK(t - f->fix_time == doctest::Approx(0.1));
    }
  }
}

TEST_CASE("gyro saturates at full scale and holds bias without walk") {
  SensorEnvironment env;
  env.gyro_initial_bias = 0.02;
  Gyro gyro(env);
  Rng rng(1);
  CHECK(gyro.sample(5.0, 0.0, rng).yaw_rate == env.gyro_full_scale);
  CHECK(gyro.sample(-5.0, 0.02, rng).yaw_rate == -env.gyro_full_scale);
  for (int i = 2; i < 500; ++i) {
    const GyroSample g = gyro.sample(0.1, i * 0.02, rng);
    CHECK(g.bias == 0.02);
    CHECK(g.yaw_rate == doctest::Approx(0.12));
  }
}

TEST_CASE("bias random walk variance grows linearly") {
  SensorEnvironment env;
  env.gyro_bias_walk_sd = 0.01;
  double sum_sq = 0.0;
  const int runs = 400;
  for (int r = 0; r < runs; ++r) {
    Gyro gyro(env);
    Rng rng(Rng::derive(99, static_cast<std::uint64_t>(r)));
    GyroSample g;
    for (int i = 0; i <= 500; ++i) g = gyro.sample(0.0, i * 0.02, rng);
    sum_sq += g.bias * g.bias;
  }
  // Var = sd^2 * T with T = 10 s.
  CHECK(sum_sq / runs == doctest::Approx(0.01 * 0.01 * 10.0).epsilon(0.2));
}

TEST_CASE("heading integrates the gyro without gps") {
  AttitudeEstimate est;
  for (int i = 0; i < 1000; ++i) {
    est.heading = fuse_heading(est, {0.1, 0.0, i * 0.01}, std::nullopt, 0.01, 0.05);
  }
  CHECK(std::abs(est.heading - 1.0) < 1e-9);
}

TEST_CASE("heading bias rejection matches the first-order steady state") {
  // Scalar oracle: between fixes the error grows by b*T, each fix removes a
  // fraction `blend`. The pre-fix steady state is e = b*T/blend.
  const double bias = 0.01, blend = 0.05, dt = 0.01, t_gps = 0.25;
  const int per_fix = static_cast<int>(std::lround(t_gps / dt));
  double oracle = 0.0;
  AttitudeEstimate est;
  GpsFix fix;
  fix.valid = true;
  fix.ground_speed = 18.0;
  fix.course_over_ground = 0.0;
  double pre_fix_error = 0.0;
  for (int k = 1; k <= 60000; ++k) {
    const bool has_fix = k % per_fix == 0;
    if (has_fix) pre_fix_error = est.heading + bias * dt;
    est.heading = fuse_heading(est, {bias, bias, k * dt},
                               has_fix ? std::optional<GpsFix>(fix) : std::nullopt, dt, blend);
    oracle += bias * dt;
    if (has_fix) oracle -= blend * oracle;
    CHECK(est.heading == doctest::Approx(oracle).epsilon(1e-9));
  }
  const double closed_form = bias * t_gps / blend;
  CHECK(pre_fix_error == doctest::Approx(closed_form).epsilon(0.2));
}

TEST_CASE("gps correction takes the short way around") {
  AttitudeEstimate est;
  est.heading = kPi - 0.05;
  GpsFix fix;
  fix.valid = true;
  fix.ground_speed = 10.0;
  fix.course_over_ground = 180.0 + 0.05 * kRadToDeg;  // -pi + 0.05
  const double h = fuse_heading(est, {}, fix, 0.01, 0.5);
  const double applied = wrap_pi(h - est.heading);
  CHECK(applied == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(std::abs(applied) <= kPi);
}

TEST_CASE("slow gps courses are ignored and the estimate is never NaN") {
  AttitudeEstimate est;
  GpsFix slow;
  slow.valid = true;
  slow.ground_speed = 1.0;
  slow.course_over_ground = 90.0;
  CHECK(fuse_heading(est, {}, slow, 0.01, 1.0) == 0.0);
  est.heading = 3.0;
  for (int i = 0; i < 100000; ++i) {
    est.heading = fuse_heading(est, {0.7, 0.0, 0.0}, std::nullopt, 0.02, 0.05);
    REQUIRE(std::isfinite(est.heading));
    REQUIRE(est.heading >= -kPi);
    REQUIRE(est.heading < kPi);
  }
}

TEST_CASE("sensor stream is reproducible from the seed") {
  SensorEnvironment env;
  env.thermopile_noise_sd = 0.5;
  env.gps_noise = {2.0, 3.0, 0.2};
  env.gyro_noise_sd = 0.01;
  auto stream = [&](std::uint64_t seed) {
    std::vector<double> out;
    Rng rng(seed);
    GpsReceiver rx({0.0, 0.0, 0.0}, env);
    Gyro gyro(env);
    for (int i = 0; i < 200; ++i) {
      const auto q = thermopile_measure(0.1, 0.2, env, rng);
      out.push_back(q.t_forward);
      out.push_back(gyro.sample(0.1, i * 0.01, rng).yaw_rate);
      if (auto f = rx.sample(moving_north(12.0), i * 0.01, rng)) out.push_back(f->latitude);
    }
    return out;
  };
  CHECK(stream(4) == stream(4));
  CHECK(stream(4) != stream(5));
}

TEST_CASE("environment validation and json") {
  SensorEnvironment env;
  env.ground_temperature = 250.0;
  CHECK_THROWS_AS(env.validate(), Error);
  nlohmann::json j = SensorEnvironment{};
  j["gps_rate"] = 10.0;
  CHECK(j.get<SensorEnvironment>().gps_rate == 10.0);
  j["gps_rate"] = 0.0;
  CHECK_THROWS_AS(j.get<SensorEnvironment>(), Error);
}

}
