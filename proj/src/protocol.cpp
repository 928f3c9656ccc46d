#include "hilsim/protocol.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "hilsim/error.hpp"

namespace hil::wire {

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data, std::uint16_t crc) noexcept {
  for (std::uint8_t byte : data) {
    crc ^= static_cast<std::uint16_t>(byte) << 8;
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() { return in_[pos_++]; }
  std::uint16_t u16() {
    const std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

[[noreturn]] void out_of_range(const char* what) {
  throw Error(ErrorCode::FieldOutOfRange, what);
}

void check_pulse(std::uint16_t us, const char* name) {
  if (us < 1000 || us > 2000) out_of_range(name);
}

void check_gains(const SetGainsMsg& g) {
  if (g.loop_id > 3) out_of_range("SET_GAINS loop_id must be 0..3");
  for (float v : {g.kp, g.ki, g.kd, g.integrator_limit}) {
    if (!std::isfinite(v)) out_of_range("SET_GAINS values must be finite");
  }
}

void write_payload(Writer& w, const Message& m) {
  std::visit(
      overloaded{
          [&](const AttitudeMsg& a) {
            if (a.heading_cdeg >= 36000) out_of_range("ATTITUDE heading must be < 36000 cdeg");
            w.i16(a.roll_cdeg);
            w.i16(a.pitch_cdeg);
            w.u16(a.heading_cdeg);
            w.i16(a.yaw_rate_cdps);
          },
          [&](const GpsMsg& g) {
            if (g.course_cdeg >= 36000) out_of_range("GPS course must be < 36000 cdeg");
            if (g.lat_e7 < -900000000 || g.lat_e7 > 900000000) out_of_range("GPS latitude");
            if (g.lon_e7 < -1800000000 || g.lon_e7 > 1800000000) out_of_range("GPS longitude");
            w.i32(g.lat_e7);
            w.i32(g.lon_e7);
            w.i32(g.alt_cm);
            w.u16(g.ground_speed_cms);
            w.u16(g.course_cdeg);
            w.u16(g.flags);
          },
          [&](const ServoMsg& s) {
            check_pulse(s.aileron_us, "SERVO aileron must be in [1000, 2000] us");
            check_pulse(s.elevator_us, "SERVO elevator must be in [1000, 2000] us");
            check_pulse(s.rudder_us, "SERVO rudder must be in [1000, 2000] us");
            check_pulse(s.throttle_us, "SERVO throttle must be in [1000, 2000] us");
            w.u16(s.aileron_us);
            w.u16(s.elevator_us);
            w.u16(s.rudder_us);
            w.u16(s.throttle_us);
          },
          [&](const ObjectivesMsg& o) {
            if (o.heading_cdeg >= 36000) out_of_range("OBJECTIVES heading must be < 36000 cdeg");
            w.i16(o.roll_cdeg);
            w.i16(o.pitch_cdeg);
            w.u16(o.heading_cdeg);
            w.u16(o.speed_cms);
          },
          [&](const SetGainsMsg& g) {
            check_gains(g);
            w.u8(g.loop_id);
            w.f32(g.kp);
            w.f32(g.ki);
            w.f32(g.kd);
            w.f32(g.integrator_limit);
            w.i16(g.output_min_milli);
            w.i16(g.output_max_milli);
          },
          [&](const MissionItemMsg& m) {
            if (m.count == 0 || m.index >= m.count) out_of_range("MISSION_ITEM index/count");
            if (m.kind > kWaypointLoiter) out_of_range("MISSION_ITEM kind");
            if (m.capture_m == 0) out_of_range("MISSION_ITEM capture radius must be >= 1 m");
            if (m.lat_e7 < -900000000 || m.lat_e7 > 900000000) out_of_range("MISSION_ITEM latitude");
            if (m.lon_e7 < -1800000000 || m.lon_e7 > 1800000000) out_of_range("MISSION_ITEM longitude");
            if (m.kind == kWaypointLoiter && m.param == 0) out_of_range("MISSION_ITEM loiter radius");
            w.u8(m.index);
            w.u8(m.kind);
            w.i32(m.lat_e7);
            w.i32(m.lon_e7);
            w.i32(m.alt_cm);
            w.u32(m.param);
            w.u8(m.count);
            w.u8(m.capture_m);
          },
          [&](const MissionInfoMsg& m) {
            if (m.cruise_speed_cms == 0) out_of_range("MISSION_INFO cruise speed must be > 0");
            w.u8(m.index);
            w.u8(m.flags);
            w.u16(m.cruise_speed_cms);
            w.u16(m.loiter_duration_s);
            w.u8(m.resume_index);
            w.u8(m.reserved);
          },
          [&](const StatusMsg& s) {
            if (s.mode > 3) out_of_range("STATUS mode must be 0..3");
            w.u32(s.uptime_ms);
            w.u8(s.current_wp);
            w.u8(s.mode);
            w.i16(s.crosstrack_dm);
            w.u8(s.loop_load_pct);
            w.u8(s.fault_flags);
            w.u16(s.reserved);
          },
          [&](const GainsAckMsg& a) {
            check_gains(a.gains);
            if (a.result > kGainsRejected) out_of_range("GAINS_ACK result");
            w.u8(a.gains.loop_id);
            w.f32(a.gains.kp);
            w.f32(a.gains.ki);
            w.f32(a.gains.kd);
            w.f32(a.gains.integrator_limit);
            w.i16(a.gains.output_min_milli);
            w.i16(a.gains.output_max_milli);
            w.u8(a.result);
          },
      },
      m);
}

SetGainsMsg read_gains(Reader& r) {
  SetGainsMsg g;
  g.loop_id = r.u8();
  g.kp = r.f32();
  g.ki = r.f32();
  g.kd = r.f32();
  g.integrator_limit = r.f32();
  g.output_min_milli = r.i16();
  g.output_max_milli = r.i16();
  return g;
}

Message parse_payload(std::uint8_t type, std::span<const std::uint8_t> payload) {
  Reader r(payload);
  switch (static_cast<MsgType>(type)) {
    case MsgType::Attitude: {
      AttitudeMsg a;
      a.roll_cdeg = r.i16();
      a.pitch_cdeg = r.i16();
      a.heading_cdeg = r.u16();
      a.yaw_rate_cdps = r.i16();
      return a;
    }
    case MsgType::Gps: {
      GpsMsg g;
      g.lat_e7 = r.i32();
      g.lon_e7 = r.i32();
      g.alt_cm = r.i32();
      g.ground_speed_cms = r.u16();
      g.course_cdeg = r.u16();
      g.flags = r.u16();
      return g;
    }
    case MsgType::Servo: {
      ServoMsg s;
      s.aileron_us = r.u16();
      s.elevator_us = r.u16();
      s.rudder_us = r.u16();
      s.throttle_us = r.u16();
      return s;
    }
    case MsgType::Objectives: {
      ObjectivesMsg o;
      o.roll_cdeg = r.i16();
      o.pitch_cdeg = r.i16();
      o.heading_cdeg = r.u16();
      o.speed_cms = r.u16();
      return o;
    }
    case MsgType::SetGains: return read_gains(r);
    case MsgType::MissionItem: {
      MissionItemMsg m;
      m.index = r.u8();
      m.kind = r.u8();
      m.lat_e7 = r.i32();
      m.lon_e7 = r.i32();
      m.alt_cm = r.i32();
      m.param = r.u32();
      m.count = r.u8();
      m.capture_m = r.u8();
      return m;
    }
    case MsgType::MissionInfo: {
      MissionInfoMsg m;
      m.index = r.u8();
      m.flags = r.u8();
      m.cruise_speed_cms = r.u16();
      m.loiter_duration_s = r.u16();
      m.resume_index = r.u8();
      m.reserved = r.u8();
      return m;
    }
    case MsgType::Status: {
      StatusMsg s;
      s.uptime_ms = r.u32();
      s.current_wp = r.u8();
      s.mode = r.u8();
      s.crosstrack_dm = r.i16();
      s.loop_load_pct = r.u8();
      s.fault_flags = r.u8();
      s.reserved = r.u16();
      return s;
    }
    case MsgType::GainsAck: {
      GainsAckMsg a;
      a.gains = read_gains(r);
      a.result = r.u8();
      return a;
    }
  }
  return AttitudeMsg{};  // unreachable: callers check payload_length first
}

}  // namespace

MsgType type_of(const Message& m) noexcept {
  return std::visit(
      overloaded{
          [](const AttitudeMsg&) { return MsgType::Attitude; },
          [](const GpsMsg&) { return MsgType::Gps; },
          [](const ServoMsg&) { return MsgType::Servo; },
          [](const ObjectivesMsg&) { return MsgType::Objectives; },
          [](const SetGainsMsg&) { return MsgType::SetGains; },
          [](const MissionItemMsg&) { return MsgType::MissionItem; },
          [](const MissionInfoMsg&) { return MsgType::MissionInfo; },
          [](const StatusMsg&) { return MsgType::Status; },
          [](const GainsAckMsg&) { return MsgType::GainsAck; },
      },
      m);
}

std::size_t payload_length(std::uint8_t msg_type) noexcept {
  switch (static_cast<MsgType>(msg_type)) {
    case MsgType::Attitude: return 8;
    case MsgType::Gps: return 18;
    case MsgType::Servo: return 8;
    case MsgType::Objectives: return 8;
    case MsgType::SetGains: return 21;
    case MsgType::MissionItem: return 20;
    case MsgType::MissionInfo: return 8;
    case MsgType::Status: return 12;
    case MsgType::GainsAck: return 22;
  }
  return 0;
}

void append_frame(std::vector<std::uint8_t>& out, const Message& message) {
  std::vector<std::uint8_t> payload;
  payload.reserve(kMaxPayload);
  Writer w(payload);
  write_payload(w, message);

  const auto type = static_cast<std::uint8_t>(type_of(message));
  const std::size_t start = out.size();
  out.push_back(kSync0);
  out.push_back(kSync1);
  out.push_back(type);
  out.push_back(static_cast<std::uint8_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  const std::uint16_t crc =
      crc16_ccitt_false(std::span<const std::uint8_t>(out).subspan(start + 2, payload.size() + 2));
  out.push_back(static_cast<std::uint8_t>(crc >> 8));
  out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
}

std::vector<std::uint8_t> encode_frame(const Message& message) {
  std::vector<std::uint8_t> out;
  out.reserve(kMaxPayload + kFrameOverhead);
  append_frame(out, message);
  return out;
}

std::size_t StreamDecoder::feed(std::span<const std::uint8_t> bytes, std::vector<Message>& out) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  std::size_t errors = 0;
  std::size_t pos = 0;
  const std::size_t n = buffer_.size();

  while (pos < n) {
    if (buffer_[pos] != kSync0) {
      ++pos;
      continue;
    }
    if (pos + 1 >= n) break;  // lone first sync byte: wait
    if (buffer_[pos + 1] != kSync1) {
      ++pos;
      continue;
    }
    if (pos + 4 > n) break;  // header incomplete
    const std::uint8_t type = buffer_[pos + 2];
    const std::size_t len = buffer_[pos + 3];
    const std::size_t declared = payload_length(type);
    if (len > kMaxPayload || (declared != 0 && len != declared)) {
      ++errors;
      ++pos;
      continue;
    }
    const std::size_t total = len + kFrameOverhead;
    if (pos + total > n) break;  // body incomplete
    const auto frame = std::span<const std::uint8_t>(buffer_).subspan(pos, total);
    const std::uint16_t crc = crc16_ccitt_false(frame.subspan(2, len + 2));
    const std::uint16_t wire_crc =
        static_cast<std::uint16_t>((frame[total - 2] << 8) | frame[total - 1]);
    if (crc != wire_crc) {
      ++errors;
      ++pos;
      continue;
    }
    if (declared == 0) {
      ++stats_.unknown;
    } else {
      out.push_back(parse_payload(type, frame.subspan(4, len)));
      ++stats_.frames;
    }
    pos += total;
  }

  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
  stats_.corrupted += errors;
  return errors;
}

DecodeResult decode_stream(std::span<const std::uint8_t> buffer) {
  StreamDecoder decoder;
  DecodeResult result;
  result.errors = decoder.feed(buffer, result.messages);
  const auto rest = decoder.pending();
  result.remaining.assign(rest.begin(), rest.end());
  return result;
}

std::int64_t scale_to_wire(double value, const FieldSpec& spec) {
  const double scaled = value * spec.scale;
  if (!std::isfinite(scaled) || scaled > 9.0e18 || scaled < -9.0e18) {
    throw Error(ErrorCode::FieldOutOfRange, "value not representable");
  }
  const std::int64_t count = std::llround(scaled);
  if (count < spec.min_count || count > spec.max_count) {
    throw Error(ErrorCode::FieldOutOfRange, "scaled value " + std::to_string(count) +
                                                " outside [" + std::to_string(spec.min_count) +
                                                ", " + std::to_string(spec.max_count) + "]");
  }
  return count;
}

double wire_to_physical(std::int64_t count, const FieldSpec& spec) {
  return static_cast<double>(count) / spec.scale;
}

std::uint16_t heading_to_wire(double degrees) {
  if (!std::isfinite(degrees)) return 0;
  std::int64_t c = std::llround(degrees * 100.0) % 36000;
  if (c < 0) c += 36000;
  return static_cast<std::uint16_t>(c);
}

}  // namespace hil::wire
