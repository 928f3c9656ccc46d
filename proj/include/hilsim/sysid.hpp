#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace hil::sysid {

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

struct SweepSpec {
  double f_start = 0.1;   // Hz
  double f_end = 5.0;     // Hz
  double duration = 60.0; // s
  double amplitude = 1.0;
  double taper_fraction = 0.1;

  void validate() const;
};

/// Logarithmic chirp A*w(t)*sin(2*pi*phi(t)) with a cosine taper at both
/// ends. Throws NyquistViolation unless sample_rate > 2 * f_end.
std::vector<double> generate_sweep(const SweepSpec& spec, double sample_rate);

/// Instantaneous frequency of the chirp at time t.
double sweep_frequency(const SweepSpec& spec, double t);

/// Single chirp sample at time t (same law as generate_sweep).
double sweep_value(const SweepSpec& spec, double t);

struct FrequencyResponse {
  std::vector<double> frequencies;  // Hz
  std::vector<double> magnitude;    // dB
  std::vector<double> phase;        // deg, unwrapped
  std::vector<double> coherence;    // [0, 1]
};

struct WelchOptions {
  std::size_t window_len = 1024;
  double overlap = 0.5;
};

/// Welch-averaged H1 estimate with Hann windows. Bins where the input
/// auto-spectrum vanishes are omitted. Throws DegenerateInput when no bin has
/// excitation.
FrequencyResponse estimate_frequency_response(std::span<const double> u, std::span<const double> y,
                                              double sample_rate, const WelchOptions& opts = {});

struct PowerSpectrum {
  std::vector<double> frequencies;
  std::vector<double> density;  // one-sided, units^2/Hz
};

/// One-sided Welch power spectral density (Hann window, density scaling).
PowerSpectrum welch_psd(std::span<const double> x, double sample_rate, const WelchOptions& opts = {});

/// Column-oriented view of a logged run, as read from a CSV with header.
struct ColumnTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  const std::vector<double>* find(const std::string& name) const;
};

/// Mean-removes the two named columns and estimates the response. Throws
/// MissingColumn naming the available columns.
FrequencyResponse identify_axis(const ColumnTable& log, const std::string& input_column,
                                const std::string& output_column, double sample_rate,
                                const WelchOptions& opts = {});

/// Bode CSV: freq_hz,mag_db,phase_deg,coherence with header row.
void write_bode_csv(const FrequencyResponse& response, const std::string& path);

}  // namespace hil::sysid
