#include "hilsim/pid.hpp"

#include <algorithm>
#include <cmath>

#include "hilsim/error.hpp"
#include "hilsim/math.hpp"

namespace hil {

void PidGains::validate() const {
  for (double v : {kp, ki, kd, output_min, output_max, integrator_limit, derivative_tau}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidGains, "gains must be finite");
  }
  if (!(output_min < output_max)) {
    throw Error(ErrorCode::InvalidGains, "output_min must be < output_max");
  }
  if (integrator_limit < 0.0) throw Error(ErrorCode::InvalidGains, "integrator_limit must be >= 0");
  if (derivative_tau < 0.0) throw Error(ErrorCode::InvalidGains, "derivative_tau must be >= 0");
}

PidResult pid_step(const PidGains& gains, const PidState& state, double setpoint,
                   double measurement, double dt, bool wrap_error) {
  PidResult r;
  r.state = state;
  double error = setpoint - measurement;
  if (wrap_error) error = wrap_pi(error);
  r.error = error;

  double derivative = 0.0;
  if (!state.primed) {
    r.state.filtered_measurement = measurement;
    r.state.primed = true;
  } else {
    const double alpha = dt / (gains.derivative_tau + dt);
    double delta = measurement - state.filtered_measurement;
    if (wrap_error) delta = wrap_pi(delta);
    const double step = alpha * delta;
    double filtered = state.filtered_measurement + step;
    if (wrap_error) filtered = wrap_pi(filtered);
    r.state.filtered_measurement = filtered;
    derivative = step / dt;
  }

  const double proportional = gains.kp * error;
  const double damping = -gains.kd * derivative;
  double integrator = std::clamp(state.integrator + gains.ki * error * dt,
                                 -gains.integrator_limit, gains.integrator_limit);
  const double unsaturated = proportional + integrator + damping;
  // Conditional anti-windup: do not let the integrator grow further into saturation.
  const bool pushing_high = unsaturated > gains.output_max && integrator > state.integrator;
  const bool pushing_low = unsaturated < gains.output_min && integrator < state.integrator;
  if (pushing_high || pushing_low) {
    integrator = std::clamp(state.integrator, -gains.integrator_limit, gains.integrator_limit);
  }
  r.state.integrator = integrator;
  const double output = proportional + integrator + damping;
  r.output = std::isfinite(output) ? std::clamp(output, gains.output_min, gains.output_max)
                                   : std::clamp(0.0, gains.output_min, gains.output_max);
  return r;
}

}  // namespace hil
