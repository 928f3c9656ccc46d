#include "hilsim/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "hilsim/error.hpp"
#include "hilsim/math.hpp"

namespace hil::sysid {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t floor_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p * 2 <= n) p *= 2;
  return p;
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n)));
  }
  return w;
}

struct Segmentation {
  std::size_t len = 0;
  std::size_t step = 0;
  std::size_t count = 0;
};

Segmentation segment(std::size_t n, const WelchOptions& opts) {
  if (!(opts.overlap >= 0.0 && opts.overlap < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "overlap must be in [0, 1)");
  }
  if (!is_power_of_two(opts.window_len)) {
    throw Error(ErrorCode::InvalidConfig, "window length must be a power of two");
  }
  if (n < 2) throw Error(ErrorCode::DegenerateInput, "need at least two samples");
  Segmentation s;
  s.len = std::min(opts.window_len, floor_power_of_two(n));
  s.step = std::max<std::size_t>(1, static_cast<std::size_t>(
                                        std::floor(static_cast<double>(s.len) * (1.0 - opts.overlap))));
  s.count = (n - s.len) / s.step + 1;
  return s;
}

std::vector<std::complex<double>> windowed_spectrum(std::span<const double> x, std::size_t start,
                                                    const std::vector<double>& w) {
  std::vector<std::complex<double>> buf(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) buf[i] = x[start + i] * w[i];
  fft(buf);
  return buf;
}

}  // namespace

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if (!is_power_of_two(n)) throw Error(ErrorCode::InvalidConfig, "fft size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles from direct evaluation rather than recurrence keep the
        // rounding error flat for long transforms.
        const std::complex<double> w(std::cos(ang * static_cast<double>(k)),
                                     std::sin(ang * static_cast<double>(k)));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

void SweepSpec::validate() const {
  if (!(f_start > 0.0) || !(f_end > f_start) || !std::isfinite(f_end)) {
    throw Error(ErrorCode::InvalidConfig, "sweep needs 0 < f_start < f_end");
  }
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw Error(ErrorCode::InvalidConfig, "sweep duration must be > 0");
  }
  if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
    throw Error(ErrorCode::InvalidConfig, "sweep amplitude must be positive and finite");
  }
  if (!(taper_fraction >= 0.0 && taper_fraction <= 0.5)) {
    throw Error(ErrorCode::InvalidConfig, "taper_fraction must be in [0, 0.5]");
  }
}

double sweep_frequency(const SweepSpec& spec, double t) {
  const double ratio = spec.f_end / spec.f_start;
  return spec.f_start * std::pow(ratio, t / spec.duration);
}

double sweep_value(const SweepSpec& spec, double t) {
  if (t < 0.0 || t > spec.duration) return 0.0;
  const double k = std::log(spec.f_end / spec.f_start);
  const double cycles = spec.f_start * spec.duration / k * std::expm1(k * t / spec.duration);
  double w = 1.0;
  const double tt = spec.taper_fraction * spec.duration;
  if (tt > 0.0) {
    const double edge = std::min(t, spec.duration - t);
    if (edge < tt) w = 0.5 * (1.0 - std::cos(kPi * edge / tt));
  }
  return spec.amplitude * w * std::sin(kTwoPi * cycles);
}

std::vector<double> generate_sweep(const SweepSpec& spec, double sample_rate) {
  spec.validate();
  if (!(sample_rate > 2.0 * spec.f_end)) {
    throw Error(ErrorCode::NyquistViolation, "sample rate must exceed twice the end frequency");
  }
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * sample_rate));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sweep_value(spec, static_cast<double>(i) / sample_rate);
  return out;
}

FrequencyResponse estimate_frequency_response(std::span<const double> u, std::span<const double> y,
                                              double sample_rate, const WelchOptions& opts) {
  if (u.size() != y.size()) throw Error(ErrorCode::DegenerateInput, "input and output lengths differ");
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample rate must be > 0");
  const Segmentation seg = segment(u.size(), opts);
  const std::vector<double> w = hann(seg.len);
  const std::size_t bins = seg.len / 2 + 1;

  std::vector<double> suu(bins, 0.0), syy(bins, 0.0);
  std::vector<std::complex<double>> suy(bins, 0.0);
  for (std::size_t s = 0; s < seg.count; ++s) {
    const auto U = windowed_spectrum(u, s * seg.step, w);
    const auto Y = windowed_spectrum(y, s * seg.step, w);
    for (std::size_t k = 0; k < bins; ++k) {
      suu[k] += std::norm(U[k]);
      syy[k] += std::norm(Y[k]);
      suy[k] += std::conj(U[k]) * Y[k];
    }
  }

  const double peak = *std::max_element(suu.begin(), suu.end());
  if (!(peak > 0.0) || !std::isfinite(peak)) {
    throw Error(ErrorCode::DegenerateInput, "input has no spectral content");
  }
  const double floor = peak * 1e-12;

  FrequencyResponse r;
  double prev_raw = 0.0, offset = 0.0;
  bool first = true;
  for (std::size_t k = 0; k < bins; ++k) {
    if (!(suu[k] > floor)) continue;
    const std::complex<double> h = suy[k] / suu[k];
    const double raw = std::arg(h) * kRadToDeg;
    if (!first) {
      double d = raw - prev_raw;
      while (d > 180.0) { d -= 360.0; offset -= 360.0; }
      while (d < -180.0) { d += 360.0; offset += 360.0; }
    }
    first = false;
    prev_raw = raw;
    r.frequencies.push_back(static_cast<double>(k) * sample_rate / static_cast<double>(seg.len));
    r.magnitude.push_back(20.0 * std::log10(std::abs(h)));
    r.phase.push_back(raw + offset);
    const double denom = suu[k] * syy[k];
    r.coherence.push_back(denom > 0.0 ? std::clamp(std::norm(suy[k]) / denom, 0.0, 1.0) : 0.0);
  }
  return r;
}

PowerSpectrum welch_psd(std::span<const double> x, double sample_rate, const WelchOptions& opts) {
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample rate must be > 0");
  const Segmentation seg = segment(x.size(), opts);
  const std::vector<double> w = hann(seg.len);
  const double wss = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
  const std::size_t bins = seg.len / 2 + 1;

  PowerSpectrum p;
  p.density.assign(bins, 0.0);
  for (std::size_t s = 0; s < seg.count; ++s) {
    const auto X = windowed_spectrum(x, s * seg.step, w);
    for (std::size_t k = 0; k < bins; ++k) p.density[k] += std::norm(X[k]);
  }
  const double scale = 1.0 / (sample_rate * wss * static_cast<double>(seg.count));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool edge = k == 0 || k == seg.len / 2;
    p.density[k] *= scale * (edge ? 1.0 : 2.0);
    p.frequencies.push_back(static_cast<double>(k) * sample_rate / static_cast<double>(seg.len));
  }
  return p;
}

const std::vector<double>* ColumnTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return &columns[i];
  }
  return nullptr;
}

FrequencyResponse identify_axis(const ColumnTable& log, const std::string& input_column,
                                const std::string& output_column, double sample_rate,
                                const WelchOptions& opts) {
  auto fetch = [&](const std::string& name) {
    const auto* col = log.find(name);
    if (!col) {
      std::string available;
      for (const auto& n : log.names) available += (available.empty() ? "" : ", ") + n;
      throw Error(ErrorCode::MissingColumn,
                  "column '" + name + "' not found; available columns: " + available);
    }
    std::vector<double> v = *col;
    if (v.empty()) throw Error(ErrorCode::DegenerateInput, "column '" + name + "' is empty");
    for (double x : v) {
      if (!std::isfinite(x)) throw Error(ErrorCode::DegenerateInput, "column '" + name + "' has empty or non-finite cells");
    }
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (double& x : v) x -= mean;
    return v;
  };
  const std::vector<double> u = fetch(input_column);
  const std::vector<double> y = fetch(output_column);
  return estimate_frequency_response(u, y, sample_rate, opts);
}

void write_bode_csv(const FrequencyResponse& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  out << "freq_hz,mag_db,phase_deg,coherence\n";
  char line[160];
  for (std::size_t i = 0; i < r.frequencies.size(); ++i) {
    std::snprintf(line, sizeof line, "%.10g,%.10g,%.10g,%.10g\n", r.frequencies[i], r.magnitude[i],
                  r.phase[i], r.coherence[i]);
    out << line;
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

}  // namespace hil::sysid
