#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "hilsim/math.hpp"

namespace hil {

/// Euler attitude in radians. Roll and yaw live in [-pi, pi); pitch is kept
/// inside (-pi/2, pi/2) by the integrator's gimbal guard.
struct Attitude {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  constexpr bool operator==(const Attitude&) const = default;
};

/// 12-state truth of the airframe plus simulation time.
struct RigidBodyState {
  Ned position;              // m, relative to scenario origin
  Vec3 velocity_body;        // m/s (u, v, w), ground-relative in body axes
  Attitude attitude;         // rad
  Vec3 angular_rate_body;    // rad/s (p, q, r)
  double time = 0.0;         // s

  bool operator==(const RigidBodyState&) const = default;
  bool finite() const;
  Vec3 velocity_ned() const;
  double altitude() const { return -position.down; }
};

/// Normalized actuator deflections.
struct ControlSurfaces {
  double aileron = 0.0;   // [-1, 1], positive rolls right
  double elevator = 0.0;  // [-1, 1], positive pitches nose up
  double rudder = 0.0;    // [-1, 1], positive yaws nose right
  double throttle = 0.0;  // [0, 1]

  bool operator==(const ControlSurfaces&) const = default;
  ControlSurfaces clamped() const;
};

/// Linear stability derivatives. Rate derivatives are referenced to the
/// usual b/2V (lateral) and c/2V (longitudinal) non-dimensional rates.
/// Control derivatives are per unit of normalized deflection.
struct StabilityDerivatives {
  double CL0 = 0.0;
  double CL_alpha = 0.0;
  double CL_max = 0.0;
  double CD0 = 0.0;
  double k_induced = 0.0;
  double Cm0 = 0.0;
  double Cm_alpha = 0.0;
  double Cm_q = 0.0;
  double Cm_de = 0.0;
  double Cl_beta = 0.0;
  double Cl_p = 0.0;
  double Cl_da = 0.0;
  double Cn_beta = 0.0;
  double Cn_r = 0.0;
  double Cn_dr = 0.0;
  double CY_beta = 0.0;

  bool operator==(const StabilityDerivatives&) const = default;
};

struct AirframeConfig {
  double mass = 0.0;        // kg
  double wing_span = 0.0;   // m
  double wing_area = 0.0;   // m^2
  Vec3 inertia_diag;        // kg m^2 (Ixx, Iyy, Izz)
  double max_thrust = 0.0;  // N
  StabilityDerivatives stability_derivatives;
  double air_density = 1.225;
  double gravity = 9.81;

  bool operator==(const AirframeConfig&) const = default;

  double mean_chord() const { return wing_area / wing_span; }
  void validate() const;
};

/// The shipped 1.8 m / 4.5 kg trainer (identical to config/trainer_1m8.json).
AirframeConfig default_trainer();

void to_json(nlohmann::json& j, const AirframeConfig& c);
void from_json(const nlohmann::json& j, AirframeConfig& c);
AirframeConfig load_airframe(const std::string& path);

/// Time derivative of the 12-state vector.
struct StateDerivative {
  Vec3 position_rate;     // NED m/s
  Vec3 linear_accel;      // body m/s^2 (du, dv, dw)
  Vec3 attitude_rate;     // rad/s (droll, dpitch, dyaw)
  Vec3 angular_accel;     // rad/s^2 (dp, dq, dr)
};

/// Air-relative flow angles computed alongside the derivatives.
struct AirData {
  double airspeed = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

StateDerivative evaluate_derivatives(const RigidBodyState& state, const ControlSurfaces& controls,
                                     const AirframeConfig& config, const Vec3& wind_ned = {});

AirData air_data(const RigidBodyState& state, const Vec3& wind_ned = {});

inline constexpr double kMaxStep = 0.1;
inline constexpr double kPitchGuard = kPi / 2.0 - 0.01;

/// One fixed RK4 step. Deterministic; throws StepTooLarge for dt > 0.1 and
/// NonFiniteState if any stage derivative is not finite.
RigidBodyState step_dynamics(const RigidBodyState& state, const ControlSurfaces& controls,
                             const AirframeConfig& config, double dt, const Vec3& wind_ned = {});

/// True when the pitch is pinned at the gimbal guard.
bool at_gimbal_guard(const RigidBodyState& state);

struct TrimPoint {
  RigidBodyState state;
  ControlSurfaces controls;
};

/// Wings-level, constant-altitude trim at the given airspeed and height above
/// the NED origin, heading north. Throws TrimNotFound when infeasible.
TrimPoint find_trim(const AirframeConfig& config, double airspeed, double altitude);

}  // namespace hil
