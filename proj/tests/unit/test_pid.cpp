#include <doctest.h>

#include <cmath>
#include <random>

#include "hilsim/error.hpp"
#include "hilsim/math.hpp"
#include "hilsim/pid.hpp"

using namespace hil;

TEST_SUITE("pid") {

TEST_CASE("pure proportional") {
  PidGains g;
  g.kp = 2.0;
  const PidResult r = pid_step(g, {}, 1.0, 0.75, 0.02);
  CHECK(r.output == 0.5);
  CHECK(r.error == 0.25);
}

TEST_CASE("saturated output with persistent error") {
  PidGains g;
  g.kp = 5.0;
  g.ki = 2.0;
  g.integrator_limit = 0.3;
  PidState s;
  for (int i = 0; i < 5000; ++i) {
    const PidResult r = pid_step(g, s, 10.0, 0.0, 0.02);
    REQUIRE(std::abs(r.state.integrator) <= g.integrator_limit);
    REQUIRE(r.output == g.output_max);
    s = r.state;
  }
}

TEST_CASE("closed loop on a first-order plant matches a fine-step ODE oracle") {
  // Plant dx/dt = -x + u, PI at 50 Hz with zero-order hold on u. The oracle
  // re-derives the controller and integrates the plant with 200 RK4
  // substeps per control period.
  PidGains g;
  g.kp = 2.0;
  g.ki = 1.0;
  g.output_min = -100.0;
  g.output_max = 100.0;
  g.integrator_limit = 100.0;
  const double dt = 0.02, setpoint = 1.0;

  PidState s;
  double x = 0.0;
  double x_ref = 0.0, i_ref = 0.0;
  const int sub = 200;
  const double h = dt / sub;
  double worst = 0.0;
  for (int k = 0; k < 3000; ++k) {
    const PidResult r = pid_step(g, s, setpoint, x, dt);
    s = r.state;
    const double u = r.output;
    x = x * std::exp(-dt) + u * (1.0 - std::exp(-dt));

    const double e_ref = setpoint - x_ref;
    i_ref += 1.0 * e_ref * dt;
    const double u_ref = 2.0 * e_ref + i_ref;
    for (int j = 0; j < sub; ++j) {
      auto f = [&](double xv) { return -xv + u_ref; };
      const double k1 = f(x_ref), k2 = f(x_ref + 0.5 * h * k1), k3 = f(x_ref + 0.5 * h * k2),
                   k4 = f(x_ref + h * k3);
      x_ref += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    worst = std::max(worst, std::abs(x - x_ref));
    REQUIRE(std::abs(x - x_ref) < 1e-6);
  }
  CHECK(x == doctest::Approx(setpoint).epsilon(1e-6));
  MESSAGE("max trajectory deviation " << worst);
}

TEST_CASE("integrator bound under randomized fuzz") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PidGains g;
  g.kp = 1.5;
  g.ki = 3.0;
  g.kd = 0.2;
  g.integrator_limit = 0.25;
  g.output_min = -0.6;
  g.output_max = 0.8;
  PidState s;
  for (int i = 0; i < 100000; ++i) {
    const double sp = 5.0 * u(gen), meas = 5.0 * u(gen), dt = 0.005 + 0.05 * std::abs(u(gen));
    const PidResult r = pid_step(g, s, sp, meas, dt, i % 3 == 0);
    REQUIRE(std::abs(r.state.integrator) <= g.integrator_limit);
    REQUIRE(r.output >= g.output_min);
    REQUIRE(r.output <= g.output_max);
    REQUIRE(std::isfinite(r.state.filtered_measurement));
    s = r.state;
  }
}

TEST_CASE("integrator freezes only when pushing further into saturation") {
  PidGains g;
  g.kp = 10.0;
  g.ki = 1.0;
  g.integrator_limit = 1.0;
  PidState s;
  s.integrator = 0.1;
  s.primed = true;
  const PidResult high = pid_step(g, s, 1.0, 0.0, 0.1);
  CHECK(high.state.integrator == 0.1);
  CHECK(high.output == 1.0);
  const PidResult back = pid_step(g, s, -0.01, 0.0, 0.1);
  CHECK(back.state.integrator == doctest::Approx(0.1 - 0.001));
}

TEST_CASE("heading error takes the short way around") {
  PidGains g;
  g.kp = 1.0;
  g.output_min = -10.0;
  g.output_max = 10.0;
  const PidResult r = pid_step(g, {}, -kPi + 0.1, kPi - 0.1, 0.02, true);
  CHECK(r.error == doctest::Approx(0.2));
  CHECK(r.output == doctest::Approx(0.2));
}

TEST_CASE("derivative acts on the measurement, not on setpoint steps") {
  PidGains g;
  g.kd = 1.0;
  g.output_min = -100.0;
  g.output_max = 100.0;
  PidState s = pid_step(g, {}, 0.0, 0.0, 0.02).state;
  const PidResult step = pid_step(g, s, 5.0, 0.0, 0.02);
  CHECK(step.output == 0.0);
  // Measurement rising at 1/s through the first-order filter.
  double m = 0.0;
  PidResult r;
  for (int i = 0; i < 200; ++i) {
    m += 0.02;
    r = pid_step(g, s, 0.0, m, 0.02);
    s = r.state;
  }
  CHECK(r.output == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("doubling kp halves the steady-state error of a disturbed integrator plant") {
  // dx/dt = u + d with P-only control settles at e = -d/kp.
  auto settle = [](double kp) {
    PidGains g;
    g.kp = kp;
    const double d = 0.2, dt = 0.02;
    PidState s;
    double x = 0.0;
    for (int i = 0; i < 5000; ++i) {
      const PidResult r = pid_step(g, s, 0.0, x, dt);
      s = r.state;
      x += (r.output + d) * dt;
    }
    return 0.0 - x;
  };
  const double e1 = settle(1.0), e2 = settle(2.0);
  CHECK(e1 == doctest::Approx(-0.2).epsilon(1e-9));
  CHECK(e2 == doctest::Approx(-0.1).epsilon(1e-9));
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("gain validation") {
  PidGains g;
  g.output_min = 1.0;
  g.output_max = 1.0;
  CHECK_THROWS_AS(g.validate(), Error);
  g.output_min = -1.0;
  g.integrator_limit = -0.1;
  CHECK_THROWS_AS(g.validate(), Error);
  g.integrator_limit = 0.0;
  g.kp = std::nan("");
  CHECK_THROWS_AS(g.validate(), Error);
}

}
