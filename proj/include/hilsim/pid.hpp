#pragma once

namespace hil {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double output_min = -1.0;
  double output_max = 1.0;
  double integrator_limit = 0.0;
  double derivative_tau = 0.05;  // s, first-order filter on the measurement

  bool operator==(const PidGains&) const = default;

  /// Throws InvalidGains when output_min >= output_max, integrator_limit < 0
  /// or any value is non-finite.
  void validate() const;
};

struct PidState {
  double integrator = 0.0;
  double filtered_measurement = 0.0;
  bool primed = false;

  bool operator==(const PidState&) const = default;
};

struct PidResult {
  double output = 0.0;
  PidState state;
  double error = 0.0;  // error actually used (wrapped for angular loops)
};

/// One PID update. The derivative acts on the filtered measurement, the
/// integrator is clamped to +-integrator_limit and frozen while the output
/// is saturated in the direction the error pushes. With `wrap_error` the
/// error and measurement differences are wrapped to [-pi, pi).
PidResult pid_step(const PidGains& gains, const PidState& state, double setpoint,
                   double measurement, double dt, bool wrap_error = false);

}  // namespace hil
