#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hilsim/error.hpp"
#include "hilsim/harness.hpp"
#include "hilsim/scenario.hpp"
#include "hilsim/sysid.hpp"
#include "hilsim/telemetry.hpp"
#include "hilsim/telemetry_server.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct RunArgs {
  std::string scenario;
  bool headless = false;
  std::string log;
  std::optional<double> time_scale;
  std::optional<int> serve;
  std::string link;
  std::string autopilot;
};

struct SweepArgs {
  std::string scenario;
  std::string axis = "elevator";
  double f0 = 0.1;
  double f1 = 5.0;
  double duration = 60.0;
  double amplitude = 50.0;
  double start = 5.0;
  std::string log;
  std::string link;
  std::string autopilot;
};

struct SysidArgs {
  std::string log;
  std::string input;
  std::string output;
  std::string out;
  std::size_t window = 1024;
  double overlap = 0.5;
  std::optional<double> rate;
  std::optional<double> t0;
  std::optional<double> t1;
};

struct ReplayArgs {
  std::string log;
  int serve = 0;
  double time_scale = 1.0;
};

bool is_usage_error(hil::ErrorCode c) {
  using hil::ErrorCode;
  return c == ErrorCode::InvalidConfig || c == ErrorCode::IoFailure || c == ErrorCode::MissingColumn ||
         c == ErrorCode::NyquistViolation || c == ErrorCode::InvalidGains ||
         c == ErrorCode::PortUnavailable || c == ErrorCode::DegenerateInput;
}

hil::RunOptions make_options(const std::string& link, const std::string& autopilot) {
  hil::RunOptions opts;
  opts.autopilot_path = autopilot;
  if (link == "pipe") opts.link = hil::LinkKind::Pipe;
  if (link == "tcp") opts.link = hil::LinkKind::Tcp;
  return opts;
}

int finish_run(const hil::RunReport& report) {
  std::cout << hil::report_to_json(report).dump(2) << std::endl;
  return report.crashed ? kExitFailure : kExitOk;
}

int cmd_run(const RunArgs& a) {
  hil::Scenario scenario = hil::load_scenario(a.scenario);
  hil::RunOptions opts = make_options(a.link, a.autopilot);
  opts.time_scale = a.time_scale;
  std::optional<hil::TelemetryCsvWriter> writer;
  if (!a.log.empty()) writer.emplace(a.log);
  double next_progress = 0.0;
  opts.on_record = [&](const hil::TelemetryRecord& r) {
    if (writer) writer->write(r);
    if (!a.headless && r.time >= next_progress) {
      std::fprintf(stderr, "t=%7.1f s  alt=%6.1f m  hdg=%6.1f deg\n", r.time,
                   -r.truth.position.down + scenario.origin.altitude_msl,
                   r.estimate.heading * hil::kRadToDeg);
      next_progress += 10.0;
    }
  };
  hil::HilSession session(scenario, opts);
  hil::RunReport report;
  if (a.serve) {
    auto server = hil::serve_telemetry(static_cast<std::uint16_t>(*a.serve));
    std::fprintf(stderr, "telemetry on ws://127.0.0.1:%u\n", server->port());
    report = hil::run_served(session, *server);
  } else {
    while (session.step()) {
    }
    report = session.report();
  }
  if (writer) writer->flush();
  return finish_run(report);
}

int cmd_sweep(const SweepArgs& a) {
  hil::Scenario scenario = hil::load_scenario(a.scenario);
  hil::SweepInjection sweep;
  sweep.axis = hil::servo_channel_from_string(a.axis);
  sweep.spec.f_start = a.f0;
  sweep.spec.f_end = a.f1;
  sweep.spec.duration = a.duration;
  sweep.spec.amplitude = a.amplitude;
  sweep.start_time = a.start;
  scenario.duration_limit = a.start + a.duration + 1.0;
  scenario.stop_on_complete = false;

  hil::RunOptions opts = make_options(a.link, a.autopilot);
  opts.sweep = sweep;
  opts.time_scale = 0.0;
  hil::TelemetryCsvWriter writer(a.log);
  opts.on_record = [&](const hil::TelemetryRecord& r) { writer.write(r); };
  const hil::RunReport report = hil::run_scenario(scenario, opts);
  writer.flush();
  return finish_run(report);
}

double infer_rate(const hil::sysid::ColumnTable& t) {
  const auto* time = t.find("time_s");
  if (!time || time->size() < 2) return 1.0 / hil::kControlDt;
  std::vector<double> d;
  for (std::size_t i = 1; i < time->size(); ++i) d.push_back((*time)[i] - (*time)[i - 1]);
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double dt = d[d.size() / 2];
  if (!(dt > 0.0)) throw hil::Error(hil::ErrorCode::DegenerateInput, "time_s column is not increasing");
  return 1.0 / dt;
}

int cmd_sysid(const SysidArgs& a) {
  hil::sysid::ColumnTable table = hil::load_csv_table(a.log);
  const double rate = a.rate.value_or(infer_rate(table));
  if ((a.t0 || a.t1) && table.find("time_s")) {
    const std::vector<double> time = *table.find("time_s");
    hil::sysid::ColumnTable cut;
    cut.names = table.names;
    cut.columns.resize(table.columns.size());
    for (std::size_t r = 0; r < time.size(); ++r) {
      if (a.t0 && time[r] < *a.t0) continue;
      if (a.t1 && time[r] > *a.t1) continue;
      for (std::size_t c = 0; c < table.columns.size(); ++c) cut.columns[c].push_back(table.columns[c][r]);
    }
    table = std::move(cut);
  }
  hil::sysid::WelchOptions opts;
  opts.window_len = a.window;
  opts.overlap = a.overlap;
  const auto resp = hil::sysid::identify_axis(table, a.input, a.output, rate, opts);
  hil::sysid::write_bode_csv(resp, a.out);

  // DC carries whatever trend survived mean removal; leave it out of the peak.
  std::optional<std::size_t> peak;
  for (std::size_t i = 0; i < resp.magnitude.size(); ++i) {
    if (resp.frequencies[i] > 0.0 && (!peak || resp.magnitude[i] > resp.magnitude[*peak])) peak = i;
  }
  nlohmann::json summary{{"bins", resp.frequencies.size()},
                         {"sample_rate_hz", rate},
                         {"output", a.out}};
  if (peak) {
    summary["peak_hz"] = resp.frequencies[*peak];
    summary["peak_db"] = resp.magnitude[*peak];
  }
  std::cout << summary.dump(2) << std::endl;
  return kExitOk;
}

int cmd_replay(const ReplayArgs& a) {
  const auto records = hil::load_log(a.log);
  auto server = hil::serve_telemetry(static_cast<std::uint16_t>(a.serve));
  std::fprintf(stderr, "replaying %zu records on ws://127.0.0.1:%u (waiting for a client)\n",
               records.size(), server->port());
  while (server->client_count() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  hil::replay_log(records, *server, a.time_scale);
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Software hardware-in-the-loop simulator for a fixed-wing UAV autopilot"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Fly a scenario against the autopilot process");
  run_cmd->add_option("scenario", run.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_flag("--headless", run.headless, "No progress output");
  run_cmd->add_option("--log", run.log, "Telemetry CSV output");
  run_cmd->add_option("--time-scale", run.time_scale, "1 = real time, 0 = lockstep as fast as possible")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--serve", run.serve, "Serve WebSocket telemetry on this port")->check(CLI::Range(0, 65535));
  run_cmd->add_option("--link", run.link, "Autopilot link")->check(CLI::IsMember({"pipe", "tcp"}));
  run_cmd->add_option("--autopilot", run.autopilot, "Autopilot executable");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Open-loop chirp on one servo channel, logged for identification");
  sweep_cmd->add_option("scenario", sweep.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--axis", sweep.axis, "Servo channel")
      ->check(CLI::IsMember({"aileron", "elevator", "rudder", "throttle"}));
  sweep_cmd->add_option("--f0", sweep.f0, "Start frequency, Hz");
  sweep_cmd->add_option("--f1", sweep.f1, "End frequency, Hz");
  sweep_cmd->add_option("--duration", sweep.duration, "Chirp length, s");
  sweep_cmd->add_option("--amplitude", sweep.amplitude, "Chirp amplitude, us");
  sweep_cmd->add_option("--start", sweep.start, "Chirp start time, s");
  sweep_cmd->add_option("--log", sweep.log, "Telemetry CSV output")->required();
  sweep_cmd->add_option("--link", sweep.link, "Autopilot link")->check(CLI::IsMember({"pipe", "tcp"}));
  sweep_cmd->add_option("--autopilot", sweep.autopilot, "Autopilot executable");

  SysidArgs sysid;
  auto* sysid_cmd = app.add_subcommand("sysid", "Frequency response from a logged input/output pair");
  sysid_cmd->add_option("log", sysid.log, "Telemetry CSV")->required()->check(CLI::ExistingFile);
  sysid_cmd->add_option("--input", sysid.input, "Input column")->required();
  sysid_cmd->add_option("--output", sysid.output, "Output column")->required();
  sysid_cmd->add_option("--out", sysid.out, "Bode CSV output")->required();
  sysid_cmd->add_option("--window", sysid.window, "Welch segment length (power of two)");
  sysid_cmd->add_option("--overlap", sysid.overlap, "Segment overlap fraction")->check(CLI::Range(0.0, 0.95));
  sysid_cmd->add_option("--rate", sysid.rate, "Sample rate, Hz (default: from time_s)");
  sysid_cmd->add_option("--t0", sysid.t0, "Analyse from this time, s");
  sysid_cmd->add_option("--t1", sysid.t1, "Analyse up to this time, s");

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Stream a recorded log to WebSocket clients");
  replay_cmd->add_option("log", replay.log, "Telemetry CSV")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--serve", replay.serve, "Port")->required()->check(CLI::Range(0, 65535));
  replay_cmd->add_option("--time-scale", replay.time_scale, "Playback speed")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*sysid_cmd) return cmd_sysid(sysid);
    if (*replay_cmd) return cmd_replay(replay);
  } catch (const hil::Error& e) {
    std::fprintf(stderr, "hilsim: %s\n", e.what());
    return is_usage_error(e.code()) ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hilsim: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
