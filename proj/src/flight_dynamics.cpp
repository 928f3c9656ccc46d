#include "hilsim/flight_dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hilsim/error.hpp"

namespace hil {

bool RigidBodyState::finite() const {
  return std::isfinite(position.north) && std::isfinite(position.east) &&
         std::isfinite(position.down) && velocity_body.finite() && std::isfinite(attitude.roll) &&
         std::isfinite(attitude.pitch) && std::isfinite(attitude.yaw) &&
         angular_rate_body.finite() && std::isfinite(time);
}

namespace {

// Body -> NED rotation, Z-Y-X Euler sequence.
Vec3 body_to_ned(const Attitude& a, const Vec3& v) {
  const double cf = std::cos(a.roll), sf = std::sin(a.roll);
  const double ct = std::cos(a.pitch), st = std::sin(a.pitch);
  const double cp = std::cos(a.yaw), sp = std::sin(a.yaw);
  return {
      ct * cp * v.x + (sf * st * cp - cf * sp) * v.y + (cf * st * cp + sf * sp) * v.z,
      ct * sp * v.x + (sf * st * sp + cf * cp) * v.y + (cf * st * sp - sf * cp) * v.z,
      -st * v.x + sf * ct * v.y + cf * ct * v.z,
  };
}

Vec3 ned_to_body(const Attitude& a, const Vec3& v) {
  const double cf = std::cos(a.roll), sf = std::sin(a.roll);
  const double ct = std::cos(a.pitch), st = std::sin(a.pitch);
  const double cp = std::cos(a.yaw), sp = std::sin(a.yaw);
  return {
      ct * cp * v.x + ct * sp * v.y - st * v.z,
      (sf * st * cp - cf * sp) * v.x + (sf * st * sp + cf * cp) * v.y + sf * ct * v.z,
      (cf * st * cp + sf * sp) * v.x + (cf * st * sp - sf * cp) * v.y + cf * ct * v.z,
  };
}

using Vector12 = std::array<double, 12>;

Vector12 pack(const RigidBodyState& s) {
  return {s.position.north,      s.position.east,       s.position.down,
          s.velocity_body.x,     s.velocity_body.y,     s.velocity_body.z,
          s.attitude.roll,       s.attitude.pitch,      s.attitude.yaw,
          s.angular_rate_body.x, s.angular_rate_body.y, s.angular_rate_body.z};
}

RigidBodyState unpack(const Vector12& x, double time) {
  RigidBodyState s;
  s.position = {x[0], x[1], x[2]};
  s.velocity_body = {x[3], x[4], x[5]};
  s.attitude = {x[6], x[7], x[8]};
  s.angular_rate_body = {x[9], x[10], x[11]};
  s.time = time;
  return s;
}

Vector12 pack(const StateDerivative& d) {
  return {d.position_rate.x, d.position_rate.y, d.position_rate.z, d.linear_accel.x,
          d.linear_accel.y,  d.linear_accel.z,  d.attitude_rate.x, d.attitude_rate.y,
          d.attitude_rate.z, d.angular_accel.x, d.angular_accel.y, d.angular_accel.z};
}

Vector12 axpy(const Vector12& x, double a, const Vector12& k) {
  Vector12 r;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = x[i] + a * k[i];
  return r;
}

bool all_finite(const Vector12& v) {
  return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::InvalidConfig, "inertia_diag must be a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Vec3 RigidBodyState::velocity_ned() const { return body_to_ned(attitude, velocity_body); }

ControlSurfaces ControlSurfaces::clamped() const {
  auto c = [](double v, double lo, double hi) { return std::isfinite(v) ? std::clamp(v, lo, hi) : 0.0; };
  return {c(aileron, -1.0, 1.0), c(elevator, -1.0, 1.0), c(rudder, -1.0, 1.0), c(throttle, 0.0, 1.0)};
}

void AirframeConfig::validate() const {
  if (!(mass > 0.0)) throw Error(ErrorCode::InvalidConfig, "mass must be > 0");
  if (!(wing_area > 0.0)) throw Error(ErrorCode::InvalidConfig, "wing_area must be > 0");
  if (!(wing_span > 0.0)) throw Error(ErrorCode::InvalidConfig, "wing_span must be > 0");
  if (!(inertia_diag.x > 0.0 && inertia_diag.y > 0.0 && inertia_diag.z > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "inertia_diag entries must be > 0");
  }
  if (!(air_density > 0.0)) throw Error(ErrorCode::InvalidConfig, "air_density must be > 0");
  if (!(max_thrust >= 0.0)) throw Error(ErrorCode::InvalidConfig, "max_thrust must be >= 0");
  if (!std::isfinite(gravity)) throw Error(ErrorCode::InvalidConfig, "gravity must be finite");
}

AirframeConfig default_trainer() {
  AirframeConfig c;
  c.mass = 4.5;
  c.wing_span = 1.8;
  c.wing_area = 0.55;
  c.inertia_diag = {0.35, 0.45, 0.75};
  c.max_thrust = 80.0;
  auto& d = c.stability_derivatives;
  d.CL0 = 0.25;
  d.CL_alpha = 4.8;
  d.CL_max = 1.2;
  d.CD0 = 0.05;
  d.k_induced = 0.06;
  d.Cm0 = 0.04;
  d.Cm_alpha = -0.8;
  d.Cm_q = -12.0;
  d.Cm_de = 0.25;
  d.Cl_beta = -0.06;
  d.Cl_p = -0.5;
  d.Cl_da = 0.05;
  d.Cn_beta = 0.08;
  d.Cn_r = -0.12;
  d.Cn_dr = 0.04;
  d.CY_beta = -0.4;
  c.air_density = 1.225;
  c.gravity = 9.81;
  return c;
}

void to_json(nlohmann::json& j, const AirframeConfig& c) {
  const auto& d = c.stability_derivatives;
  j = nlohmann::json{
      {"mass", c.mass},
      {"wing_span", c.wing_span},
      {"wing_area", c.wing_area},
      {"inertia_diag", {c.inertia_diag.x, c.inertia_diag.y, c.inertia_diag.z}},
      {"max_thrust", c.max_thrust},
      {"stability_derivatives",
       {{"CL0", d.CL0},
        {"CL_alpha", d.CL_alpha},
        {"CL_max", d.CL_max},
        {"CD0", d.CD0},
        {"k_induced", d.k_induced},
        {"Cm0", d.Cm0},
        {"Cm_alpha", d.Cm_alpha},
        {"Cm_q", d.Cm_q},
        {"Cm_de", d.Cm_de},
        {"Cl_beta", d.Cl_beta},
        {"Cl_p", d.Cl_p},
        {"Cl_da", d.Cl_da},
        {"Cn_beta", d.Cn_beta},
        {"Cn_r", d.Cn_r},
        {"Cn_dr", d.Cn_dr},
        {"CY_beta", d.CY_beta}}},
      {"air_density", c.air_density},
      {"gravity", c.gravity},
  };
}

void from_json(const nlohmann::json& j, AirframeConfig& c) {
  try {
    c = AirframeConfig{};
    j.at("mass").get_to(c.mass);
    j.at("wing_span").get_to(c.wing_span);
    j.at("wing_area").get_to(c.wing_area);
    c.inertia_diag = vec3_from_json(j.at("inertia_diag"));
    j.at("max_thrust").get_to(c.max_thrust);
    const auto& s = j.at("stability_derivatives");
    auto& d = c.stability_derivatives;
    s.at("CL0").get_to(d.CL0);
    s.at("CL_alpha").get_to(d.CL_alpha);
    s.at("CL_max").get_to(d.CL_max);
    s.at("CD0").get_to(d.CD0);
    s.at("k_induced").get_to(d.k_induced);
    s.at("Cm0").get_to(d.Cm0);
    s.at("Cm_alpha").get_to(d.Cm_alpha);
    s.at("Cm_q").get_to(d.Cm_q);
    s.at("Cm_de").get_to(d.Cm_de);
    s.at("Cl_beta").get_to(d.Cl_beta);
    s.at("Cl_p").get_to(d.Cl_p);
    s.at("Cl_da").get_to(d.Cl_da);
    s.at("Cn_beta").get_to(d.Cn_beta);
    s.at("Cn_r").get_to(d.Cn_r);
    s.at("Cn_dr").get_to(d.Cn_dr);
    s.at("CY_beta").get_to(d.CY_beta);
    c.air_density = j.value("air_density", 1.225);
    c.gravity = j.value("gravity", 9.81);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("airframe: ") + e.what());
  }
  c.validate();
}

AirframeConfig load_airframe(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open airframe file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  return j.get<AirframeConfig>();
}

AirData air_data(const RigidBodyState& state, const Vec3& wind_ned) {
  const Vec3 air = state.velocity_body - ned_to_body(state.attitude, wind_ned);
  AirData ad;
  ad.airspeed = air.norm();
  if (ad.airspeed > 1e-9) {
    ad.alpha = std::atan2(air.z, air.x);
    ad.beta = std::asin(std::clamp(air.y / ad.airspeed, -1.0, 1.0));
  }
  return ad;
}

StateDerivative evaluate_derivatives(const RigidBodyState& state, const ControlSurfaces& controls,
                                     const AirframeConfig& config, const Vec3& wind_ned) {
  const auto& d = config.stability_derivatives;
  const Attitude& att = state.attitude;
  const Vec3& vel = state.velocity_body;
  const double p = state.angular_rate_body.x;
  const double q = state.angular_rate_body.y;
  const double r = state.angular_rate_body.z;

  const Vec3 air = vel - ned_to_body(att, wind_ned);
  const double va = air.norm();
  const double rho = config.air_density;
  const double area = config.wing_area;
  const double span = config.wing_span;
  const double chord = config.mean_chord();
  const double qbar = 0.5 * rho * va * va;

  double alpha = 0.0, beta = 0.0;
  Vec3 force;
  if (va > 1e-9) {
    alpha = std::atan2(air.z, air.x);
    beta = std::asin(std::clamp(air.y / va, -1.0, 1.0));
    const Vec3 drag_dir = -(air / va);
    const double xz = std::hypot(air.x, air.z);
    // Lift is perpendicular to the airflow within the body x-z plane.
    const Vec3 lift_dir = xz > 1e-9 ? Vec3{air.z / xz, 0.0, -air.x / xz} : Vec3{0.0, 0.0, -1.0};
    const Vec3 side_dir = (air / va).cross(lift_dir);
    const double cl = std::clamp(d.CL0 + d.CL_alpha * alpha, -d.CL_max, d.CL_max);
    const double cd = d.CD0 + d.k_induced * cl * cl;
    const double cy = d.CY_beta * beta;
    force = (drag_dir * cd + lift_dir * cl + side_dir * cy) * (qbar * area);
  }
  force.x += controls.throttle * config.max_thrust;

  // Rate-damping terms: qbar * S * ref * C * (rate * ref / 2V) = rho V S ref^2 C rate / 4.
  const double damp = 0.25 * rho * va * area;
  const double roll_moment = qbar * area * span * (d.Cl_beta * beta + d.Cl_da * controls.aileron) +
                             damp * span * span * d.Cl_p * p;
  const double pitch_moment =
      qbar * area * chord * (d.Cm0 + d.Cm_alpha * alpha + d.Cm_de * controls.elevator) +
      damp * chord * chord * d.Cm_q * q;
  const double yaw_moment = qbar * area * span * (d.Cn_beta * beta + d.Cn_dr * controls.rudder) +
                            damp * span * span * d.Cn_r * r;

  const double g = config.gravity;
  const double sf = std::sin(att.roll), cf = std::cos(att.roll);
  const double st = std::sin(att.pitch), ct = std::cos(att.pitch);
  const Vec3 gravity_body{-g * st, g * sf * ct, g * cf * ct};
  const Vec3 omega{p, q, r};

  StateDerivative out;
  out.linear_accel = force / config.mass + gravity_body - omega.cross(vel);

  const Vec3& inertia = config.inertia_diag;
  out.angular_accel = {
      (roll_moment + (inertia.y - inertia.z) * q * r) / inertia.x,
      (pitch_moment + (inertia.z - inertia.x) * p * r) / inertia.y,
      (yaw_moment + (inertia.x - inertia.y) * p * q) / inertia.z,
  };

  const double tt = st / ct;
  out.attitude_rate = {
      p + (q * sf + r * cf) * tt,
      q * cf - r * sf,
      (q * sf + r * cf) / ct,
  };
  out.position_rate = body_to_ned(att, vel);
  return out;
}

RigidBodyState step_dynamics(const RigidBodyState& state, const ControlSurfaces& controls,
                             const AirframeConfig& config, double dt, const Vec3& wind_ned) {
  if (dt > kMaxStep) {
    throw Error(ErrorCode::StepTooLarge, "dt = " + std::to_string(dt) + " s exceeds 0.1 s");
  }
  if (!(dt >= 0.0)) throw Error(ErrorCode::StepTooLarge, "dt must be >= 0");
  if (dt == 0.0) return state;

  const Vector12 x0 = pack(state);
  auto f = [&](const Vector12& x) {
    const Vector12 k = pack(evaluate_derivatives(unpack(x, state.time), controls, config, wind_ned));
    if (!all_finite(k)) throw Error(ErrorCode::NonFiniteState, "non-finite state derivative");
    return k;
  };
  const Vector12 k1 = f(x0);
  const Vector12 k2 = f(axpy(x0, 0.5 * dt, k1));
  const Vector12 k3 = f(axpy(x0, 0.5 * dt, k2));
  const Vector12 k4 = f(axpy(x0, dt, k3));
  Vector12 x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  if (!all_finite(x)) throw Error(ErrorCode::NonFiniteState, "non-finite state after step");

  RigidBodyState out = unpack(x, state.time + dt);
  out.attitude.roll = wrap_pi(out.attitude.roll);
  out.attitude.yaw = wrap_pi(out.attitude.yaw);
  out.attitude.pitch = wrap_pi(out.attitude.pitch);
  if (std::abs(out.attitude.pitch) > kPitchGuard) {
    const double sign = out.attitude.pitch > 0.0 ? 1.0 : -1.0;
    out.attitude.pitch = sign * kPitchGuard;
    // Remove the body-rate component that drives pitch further into the guard.
    const double cf = std::cos(out.attitude.roll), sf = std::sin(out.attitude.roll);
    Vec3& w = out.angular_rate_body;
    const double pitch_rate = w.y * cf - w.z * sf;
    if (pitch_rate * sign > 0.0) {
      w.y -= pitch_rate * cf;
      w.z += pitch_rate * sf;
    }
  }
  return out;
}

bool at_gimbal_guard(const RigidBodyState& state) {
  return std::abs(state.attitude.pitch) >= kPitchGuard;
}

namespace {

struct TrimUnknowns {
  double alpha;
  double elevator;
  double throttle;
};

RigidBodyState trim_state(double airspeed, double altitude, double alpha) {
  RigidBodyState s;
  s.position = {0.0, 0.0, -altitude};
  s.velocity_body = {airspeed * std::cos(alpha), 0.0, airspeed * std::sin(alpha)};
  s.attitude = {0.0, alpha, 0.0};
  return s;
}

std::array<double, 3> trim_residual(const AirframeConfig& config, double airspeed, double altitude,
                                    const TrimUnknowns& x) {
  const ControlSurfaces c{0.0, x.elevator, 0.0, x.throttle};
  const StateDerivative d = evaluate_derivatives(trim_state(airspeed, altitude, x.alpha), c, config);
  return {d.linear_accel.x, d.linear_accel.z, d.angular_accel.y};
}

bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b,
            std::array<double, 3>& x) {
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-14) return false;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int k = col; k < 3; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  for (int r = 2; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < 3; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return true;
}

}  // namespace

TrimPoint find_trim(const AirframeConfig& config, double airspeed, double altitude) {
  config.validate();
  const auto& d = config.stability_derivatives;
  if (!(airspeed > 0.0) || !std::isfinite(airspeed)) {
    throw Error(ErrorCode::TrimNotFound, "airspeed must be > 0");
  }
  const double qbar_s = 0.5 * config.air_density * airspeed * airspeed * config.wing_area;
  const double weight = config.mass * config.gravity;
  const double cl_required = weight / qbar_s;
  if (!(cl_required < d.CL_max) || d.CL_alpha <= 0.0) {
    throw Error(ErrorCode::TrimNotFound, "airspeed " + std::to_string(airspeed) +
                                             " m/s is below the stall boundary (CL required " +
                                             std::to_string(cl_required) + ")");
  }

  TrimUnknowns x{(cl_required - d.CL0) / d.CL_alpha, 0.0, 0.0};
  if (d.Cm_de != 0.0) x.elevator = -(d.Cm0 + d.Cm_alpha * x.alpha) / d.Cm_de;
  if (config.max_thrust > 0.0) {
    x.throttle = qbar_s * (d.CD0 + d.k_induced * cl_required * cl_required) / config.max_thrust;
  }

  constexpr int kMaxIterations = 50;
  constexpr double kTolerance = 1e-11;
  bool converged = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    const auto r = trim_residual(config, airspeed, altitude, x);
    if (!std::isfinite(r[0]) || !std::isfinite(r[1]) || !std::isfinite(r[2])) break;
    if (std::max({std::abs(r[0]), std::abs(r[1]), std::abs(r[2])}) < kTolerance) {
      converged = true;
      break;
    }
    std::array<std::array<double, 3>, 3> jac{};
    constexpr double h = 1e-7;
    for (int k = 0; k < 3; ++k) {
      TrimUnknowns xp = x;
      (k == 0 ? xp.alpha : k == 1 ? xp.elevator : xp.throttle) += h;
      const auto rp = trim_residual(config, airspeed, altitude, xp);
      for (int row = 0; row < 3; ++row) jac[row][k] = (rp[row] - r[row]) / h;
    }
    std::array<double, 3> delta{};
    if (!solve3(jac, {-r[0], -r[1], -r[2]}, delta)) break;
    x.alpha += delta[0];
    x.elevator += delta[1];
    x.throttle += delta[2];
  }

  if (!converged || std::abs(x.elevator) > 1.0 || x.throttle < 0.0 || x.throttle > 1.0 ||
      std::abs(x.alpha) > 0.5) {
    throw Error(ErrorCode::TrimNotFound, "no level trim within actuator limits at " +
                                             std::to_string(airspeed) + " m/s");
  }

  TrimPoint tp;
  tp.state = trim_state(airspeed, altitude, x.alpha);
  tp.controls = {0.0, x.elevator, 0.0, x.throttle};

  const StateDerivative check = evaluate_derivatives(tp.state, tp.controls, config);
  if (check.linear_accel.norm() >= 1e-3 || check.angular_accel.norm() >= 1e-3) {
    throw Error(ErrorCode::TrimNotFound, "trim residual above tolerance");
  }
  return tp;
}

}  // namespace hil
