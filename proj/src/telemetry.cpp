#include "hilsim/telemetry.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "hilsim/error.hpp"
#include "hilsim/math.hpp"

namespace hil {

const std::vector<std::string>& telemetry_columns() {
  static const std::vector<std::string> cols = {
      "time_s",        "north_m",        "east_m",          "down_m",
      "u_mps",         "v_mps",          "w_mps",           "roll_deg",
      "pitch_deg",     "yaw_deg",        "p_dps",           "q_dps",
      "r_dps",         "est_roll_deg",   "est_pitch_deg",   "est_heading_deg",
      "roll_cmd_deg",  "pitch_cmd_deg",  "heading_cmd_deg", "speed_cmd_mps",
      "aileron_us",    "elevator_us",    "rudder_us",       "throttle_us",
      "gps_lat_deg",   "gps_lon_deg",    "gps_alt_m",       "gps_speed_mps",
      "gps_course_deg", "gps_time_s",    "fault_flags",
  };
  return cols;
}

std::string telemetry_header() {
  std::string h;
  for (const auto& c : telemetry_columns()) {
    if (!h.empty()) h += ',';
    h += c;
  }
  return h;
}

namespace {

void put(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  if (!line.empty()) line += ',';
  line += buf;
}

void put_empty(std::string& line) { line += ','; }

}  // namespace

std::string format_record(const TelemetryRecord& r) {
  std::string line;
  line.reserve(512);
  const RigidBodyState& s = r.truth;
  put(line, r.time);
  put(line, s.position.north);
  put(line, s.position.east);
  put(line, s.position.down);
  put(line, s.velocity_body.x);
  put(line, s.velocity_body.y);
  put(line, s.velocity_body.z);
  put(line, s.attitude.roll * kRadToDeg);
  put(line, s.attitude.pitch * kRadToDeg);
  put(line, s.attitude.yaw * kRadToDeg);
  put(line, s.angular_rate_body.x * kRadToDeg);
  put(line, s.angular_rate_body.y * kRadToDeg);
  put(line, s.angular_rate_body.z * kRadToDeg);
  put(line, r.estimate.roll * kRadToDeg);
  put(line, r.estimate.pitch * kRadToDeg);
  put(line, r.estimate.heading * kRadToDeg);
  put(line, r.objectives.roll_cmd * kRadToDeg);
  put(line, r.objectives.pitch_cmd * kRadToDeg);
  put(line, r.objectives.heading_cmd * kRadToDeg);
  put(line, r.objectives.speed_cmd);
  put(line, r.servo.aileron_us);
  put(line, r.servo.elevator_us);
  put(line, r.servo.rudder_us);
  put(line, r.servo.throttle_us);
  if (r.gps) {
    put(line, r.gps->latitude);
    put(line, r.gps->longitude);
    put(line, r.gps->altitude);
    put(line, r.gps->ground_speed);
    put(line, r.gps->course_over_ground);
    put(line, r.gps->fix_time);
  } else {
    for (int i = 0; i < 6; ++i) put_empty(line);
  }
  put(line, static_cast<double>(r.fault_flags));
  return line;
}

TelemetryCsvWriter::TelemetryCsvWriter(const std::string& path) : out_(path), path_(path) {
  if (!out_) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  out_ << telemetry_header() << '\n';
}

void TelemetryCsvWriter::write(const TelemetryRecord& record) {
  out_ << format_record(record) << '\n';
  if (!out_) throw Error(ErrorCode::IoFailure, "write failed: " + path_);
}

void TelemetryCsvWriter::flush() { out_.flush(); }

void write_log(const std::vector<TelemetryRecord>& records, const std::string& path) {
  TelemetryCsvWriter w(path);
  for (const auto& r : records) w.write(r);
  w.flush();
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

sysid::ColumnTable load_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  sysid::ColumnTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoFailure, path + " is empty");
  t.names = split_csv_line(line);
  t.columns.resize(t.names.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.names.size()) {
      throw Error(ErrorCode::IoFailure, path + ": row " + std::to_string(row) + " has " +
                                            std::to_string(cells.size()) + " cells, expected " +
                                            std::to_string(t.names.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!cells[i].empty()) {
        char* end = nullptr;
        v = std::strtod(cells[i].c_str(), &end);
        if (end == cells[i].c_str()) v = std::numeric_limits<double>::quiet_NaN();
      }
      t.columns[i].push_back(v);
    }
  }
  return t;
}

std::vector<TelemetryRecord> load_log(const std::string& path) {
  const sysid::ColumnTable t = load_csv_table(path);
  std::vector<const std::vector<double>*> cols;
  for (const auto& name : telemetry_columns()) {
    const auto* c = t.find(name);
    if (!c) throw Error(ErrorCode::MissingColumn, path + " lacks column '" + name + "'");
    cols.push_back(c);
  }
  const std::size_t n = cols.front()->size();
  std::vector<TelemetryRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    auto next = [&] { return (*cols[c++])[i]; };
    TelemetryRecord& r = out[i];
    RigidBodyState& s = r.truth;
    r.time = next();
    s.time = r.time;
    s.position.north = next();
    s.position.east = next();
    s.position.down = next();
    s.velocity_body.x = next();
    s.velocity_body.y = next();
    s.velocity_body.z = next();
    s.attitude.roll = next() * kDegToRad;
    s.attitude.pitch = next() * kDegToRad;
    s.attitude.yaw = next() * kDegToRad;
    s.angular_rate_body.x = next() * kDegToRad;
    s.angular_rate_body.y = next() * kDegToRad;
    s.angular_rate_body.z = next() * kDegToRad;
    r.estimate.roll = next() * kDegToRad;
    r.estimate.pitch = next() * kDegToRad;
    r.estimate.heading = next() * kDegToRad;
    r.estimate.estimate_time = r.time;
    r.objectives.roll_cmd = next() * kDegToRad;
    r.objectives.pitch_cmd = next() * kDegToRad;
    r.objectives.heading_cmd = next() * kDegToRad;
    r.objectives.speed_cmd = next();
    r.servo.aileron_us = static_cast<std::uint16_t>(next());
    r.servo.elevator_us = static_cast<std::uint16_t>(next());
    r.servo.rudder_us = static_cast<std::uint16_t>(next());
    r.servo.throttle_us = static_cast<std::uint16_t>(next());
    const double lat = next();
    if (std::isnan(lat)) {
      c += 5;
    } else {
      GpsFix g;
      g.valid = true;
      g.latitude = lat;
      g.longitude = next();
      g.altitude = next();
      g.ground_speed = next();
      g.course_over_ground = next();
      g.fix_time = next();
      r.gps = g;
    }
    r.fault_flags = static_cast<std::uint32_t>(next());
  }
  return out;
}

}  // namespace hil
