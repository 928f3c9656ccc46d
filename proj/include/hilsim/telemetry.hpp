#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hilsim/autopilot.hpp"
#include "hilsim/flight_dynamics.hpp"
#include "hilsim/sensors.hpp"
#include "hilsim/sysid.hpp"

namespace hil {

/// One row per control tick.
struct TelemetryRecord {
  double time = 0.0;
  RigidBodyState truth;
  AttitudeEstimate estimate;
  Objectives objectives;
  ServoCommand servo;
  std::optional<GpsFix> gps;
  std::uint32_t fault_flags = 0;
};

/// Column names in file order. Angles are logged in degrees, rates in deg/s.
const std::vector<std::string>& telemetry_columns();
std::string telemetry_header();

/// Streams records to a CSV file (RFC-4180, header row, %.17g numbers).
class TelemetryCsvWriter {
 public:
  explicit TelemetryCsvWriter(const std::string& path);
  void write(const TelemetryRecord& record);
  void flush();

 private:
  std::ofstream out_;
  std::string path_;
};

std::string format_record(const TelemetryRecord& record);

void write_log(const std::vector<TelemetryRecord>& records, const std::string& path);
std::vector<TelemetryRecord> load_log(const std::string& path);

/// Generic CSV reader with header row; empty cells load as NaN.
sysid::ColumnTable load_csv_table(const std::string& path);

/// Splits one RFC-4180 record (no embedded newlines) into fields.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

}  // namespace hil
