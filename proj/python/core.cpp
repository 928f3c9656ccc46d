#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hilsim/error.hpp"
#include "hilsim/flight_dynamics.hpp"
#include "hilsim/harness.hpp"
#include "hilsim/protocol.hpp"
#include "hilsim/scenario.hpp"
#include "hilsim/sysid.hpp"
#include "hilsim/telemetry.hpp"

namespace py = pybind11;
using namespace hil;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

Scenario scenario_arg(const py::object& s) {
  if (py::isinstance<py::str>(s) || py::hasattr(s, "__fspath__")) {
    return load_scenario(py::str(py::module_::import("os").attr("fspath")(s)).cast<std::string>());
  }
  return scenario_from_json(from_python(s));
}

py::dict response_dict(const sysid::FrequencyResponse& r) {
  py::dict d;
  d["freq_hz"] = to_array(r.frequencies);
  d["mag_db"] = to_array(r.magnitude);
  d["phase_deg"] = to_array(r.phase);
  d["coherence"] = to_array(r.coherence);
  return d;
}

py::dict state_dict(const RigidBodyState& s) {
  py::dict d;
  d["north"] = s.position.north;
  d["east"] = s.position.east;
  d["down"] = s.position.down;
  d["u"] = s.velocity_body.x;
  d["v"] = s.velocity_body.y;
  d["w"] = s.velocity_body.z;
  d["roll"] = s.attitude.roll;
  d["pitch"] = s.attitude.pitch;
  d["yaw"] = s.attitude.yaw;
  d["p"] = s.angular_rate_body.x;
  d["q"] = s.angular_rate_body.y;
  d["r"] = s.angular_rate_body.z;
  d["time"] = s.time;
  return d;
}

RigidBodyState state_from(const py::dict& d) {
  auto get = [&](const char* k) { return d.contains(k) ? d[k].cast<double>() : 0.0; };
  RigidBodyState s;
  s.position = {get("north"), get("east"), get("down")};
  s.velocity_body = {get("u"), get("v"), get("w")};
  s.attitude = {get("roll"), get("pitch"), get("yaw")};
  s.angular_rate_body = {get("p"), get("q"), get("r")};
  s.time = get("time");
  return s;
}

py::dict message_dict(const wire::Message& m) {
  py::dict d;
  d["type"] = static_cast<int>(wire::type_of(m));
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, wire::AttitudeMsg>) {
          d["roll_cdeg"] = msg.roll_cdeg;
          d["pitch_cdeg"] = msg.pitch_cdeg;
          d["heading_cdeg"] = msg.heading_cdeg;
          d["yaw_rate_cdps"] = msg.yaw_rate_cdps;
        } else if constexpr (std::is_same_v<T, wire::ServoMsg>) {
          d["aileron_us"] = msg.aileron_us;
          d["elevator_us"] = msg.elevator_us;
          d["rudder_us"] = msg.rudder_us;
          d["throttle_us"] = msg.throttle_us;
        } else if constexpr (std::is_same_v<T, wire::StatusMsg>) {
          d["uptime_ms"] = msg.uptime_ms;
          d["current_wp"] = msg.current_wp;
          d["mode"] = msg.mode;
          d["crosstrack_dm"] = msg.crosstrack_dm;
          d["fault_flags"] = msg.fault_flags;
        }
      },
      m);
  return d;
}

py::bytes as_bytes(const std::vector<std::uint8_t>& v) {
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fixed-wing HIL simulator core";

  // The message starts with the error code name, e.g. "InvalidConfig: ...".
  py::register_exception<Error>(m, "HilError", PyExc_RuntimeError);

  m.def("default_autopilot_path", &default_autopilot_path);
  m.def("telemetry_columns", &telemetry_columns);

  m.def("load_scenario", [](const py::object& s) { return to_python(nlohmann::json(scenario_arg(s).mission)); },
        py::arg("scenario"), "Parse and validate a scenario; returns its mission as a dict.");

  m.def(
      "run",
      [](const py::object& scenario, std::optional<std::string> log, std::optional<std::string> link,
         std::optional<double> time_scale, std::optional<double> duration, std::optional<std::uint64_t> seed,
         std::string autopilot) {
        Scenario s = scenario_arg(scenario);
        if (duration) s.duration_limit = *duration;
        if (seed) s.seed = *seed;
        RunOptions opt;
        opt.autopilot_path = std::move(autopilot);
        opt.time_scale = time_scale.value_or(0.0);
        if (link) {
          if (*link == "pipe") opt.link = LinkKind::Pipe;
          else if (*link == "tcp") opt.link = LinkKind::Tcp;
          else throw py::value_error("link must be 'pipe' or 'tcp'");
        }
        std::optional<TelemetryCsvWriter> writer;
        if (log) {
          writer.emplace(*log);
          opt.on_record = [&](const TelemetryRecord& r) { writer->write(r); };
        }
        RunReport report;
        {
          py::gil_scoped_release release;
          report = run_scenario(s, opt);
          if (writer) writer->flush();
        }
        return to_python(report_to_json(report));
      },
      py::arg("scenario"), py::kw_only(), py::arg("log") = py::none(), py::arg("link") = py::none(),
      py::arg("time_scale") = py::none(), py::arg("duration") = py::none(), py::arg("seed") = py::none(),
      py::arg("autopilot") = "",
      "Fly a scenario (path or dict) against the autopilot process and return the run report.");

  m.def(
      "generate_sweep",
      [](double f_start, double f_end, double duration, double amplitude, double taper, double fs) {
        sysid::SweepSpec spec{f_start, f_end, duration, amplitude, taper};
        return to_array(sysid::generate_sweep(spec, fs));
      },
      py::arg("f_start"), py::arg("f_end"), py::arg("duration"), py::arg("amplitude") = 1.0,
      py::arg("taper") = 0.1, py::arg("sample_rate") = 50.0);

  m.def(
      "frequency_response",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y, double fs, std::size_t window,
         double overlap) {
        const auto uv = to_vector(u), yv = to_vector(y);
        return response_dict(sysid::estimate_frequency_response(uv, yv, fs, {window, overlap}));
      },
      py::arg("u"), py::arg("y"), py::arg("sample_rate"), py::arg("window") = 1024, py::arg("overlap") = 0.5);

  m.def(
      "identify_log",
      [](const std::string& path, const std::string& input, const std::string& output, double fs,
         std::size_t window) {
        return response_dict(sysid::identify_axis(load_csv_table(path), input, output, fs, {window, 0.5}));
      },
      py::arg("log"), py::arg("input"), py::arg("output"), py::arg("sample_rate") = 50.0, py::arg("window") = 1024);

  m.def(
      "trim",
      [](double airspeed, double altitude, std::optional<std::string> airframe) {
        const AirframeConfig cfg = airframe ? load_airframe(*airframe) : default_trainer();
        const TrimPoint t = find_trim(cfg, airspeed, altitude);
        py::dict d;
        d["state"] = state_dict(t.state);
        d["controls"] = py::dict(py::arg("aileron") = t.controls.aileron, py::arg("elevator") = t.controls.elevator,
                                 py::arg("rudder") = t.controls.rudder, py::arg("throttle") = t.controls.throttle);
        return d;
      },
      py::arg("airspeed") = 18.0, py::arg("altitude") = 100.0, py::arg("airframe") = py::none());

  m.def(
      "step",
      [](const py::dict& state, const py::dict& controls, double dt, std::optional<std::string> airframe) {
        const AirframeConfig cfg = airframe ? load_airframe(*airframe) : default_trainer();
        auto c = [&](const char* k) { return controls.contains(k) ? controls[k].cast<double>() : 0.0; };
        const ControlSurfaces cs{c("aileron"), c("elevator"), c("rudder"), c("throttle")};
        return state_dict(step_dynamics(state_from(state), cs, cfg, dt));
      },
      py::arg("state"), py::arg("controls"), py::arg("dt") = 0.01, py::arg("airframe") = py::none(),
      "One RK4 step of the 12-state plant. Angles in rad, body rates in rad/s.");

  m.def("crc16", [](const py::bytes& data) {
    const std::string s = data;
    return wire::crc16_ccitt_false({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  });
  m.def(
      "encode_servo",
      [](std::uint16_t a, std::uint16_t e, std::uint16_t r, std::uint16_t t) {
        return as_bytes(wire::encode_frame(wire::ServoMsg{a, e, r, t}));
      },
      py::arg("aileron_us"), py::arg("elevator_us"), py::arg("rudder_us"), py::arg("throttle_us"));
  m.def(
      "encode_attitude",
      [](std::int16_t roll, std::int16_t pitch, std::uint16_t heading, std::int16_t rate) {
        return as_bytes(wire::encode_frame(wire::AttitudeMsg{roll, pitch, heading, rate}));
      },
      py::arg("roll_cdeg"), py::arg("pitch_cdeg"), py::arg("heading_cdeg"), py::arg("yaw_rate_cdps"));
  m.def(
      "decode",
      [](const py::bytes& data) {
        const std::string s = data;
        const auto r = wire::decode_stream({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
        py::list msgs;
        for (const auto& msg : r.messages) msgs.append(message_dict(msg));
        return py::make_tuple(msgs, as_bytes(r.remaining), r.errors);
      },
      py::arg("data"), "Returns (messages, trailing partial frame, corrupted-frame count).");
}
