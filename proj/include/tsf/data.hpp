#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tsf/tensor.hpp"

namespace tsf::data {

constexpr std::int64_t kStepSeconds = 15 * 60;
constexpr std::size_t kStepsPerDay = 96;
constexpr int kNumChannels = 7;

/// Channel order matches the input-matrix row order.
enum Channel : int {
  kNwpSpeed = 0,
  kNwpDir = 1,
  kNwpHumidity = 2,
  kNwpPressure = 3,
  kNwpTemp = 4,
  kSpeed = 5,
  kPower = 6,
};

std::string format_timestamp(std::int64_t epoch_seconds);  // ISO-8601 UTC, e.g. 2020-01-11T08:00:00Z
std::int64_t parse_timestamp(const std::string& s);

/// Shortest round-trip decimal rendering of a double (canonical CSV form).
std::string format_number(double v);

/// Aligned 15-minute series of power, speed, and five NWP channels for one
/// farm. Timestamps are implicit: start_time + i * 900 s, which enforces the
/// gap-free regular grid by construction.
struct WindSeries {
  std::string farm_id;
  double capacity = 0.0;  // MW
  std::int64_t start_time = 0;
  std::vector<double> power;      // MW, in [0, capacity]
  std::vector<double> speed;      // m/s, >= 0
  std::vector<double> nwp_speed;  // m/s
  std::vector<double> nwp_dir;    // degrees [0, 360)
  std::vector<double> nwp_humidity;
  std::vector<double> nwp_pressure;
  std::vector<double> nwp_temp;

  std::size_t size() const { return power.size(); }
  std::int64_t timestamp(std::size_t i) const {
    return start_time + static_cast<std::int64_t>(i) * kStepSeconds;
  }
  const std::vector<double>& channel(int c) const;
};

/// Parses and validates a series CSV. Header must match the contract exactly:
/// timestamp,power_mw,speed_ms,nwp_speed_ms,nwp_dir_deg,nwp_humidity_pct,nwp_pressure_hpa,nwp_temp_c
/// capacity <= 0 means "infer from the data" (max observed power).
WindSeries ingest_csv(const std::string& path, double capacity = 0.0,
                      const std::string& farm_id = "");

void write_csv(const WindSeries& s, const std::string& path);

// ---------------------------------------------------------------------------
// Turbine power curve

struct TurbineCurve {
  double cut_in = 3.5;    // m/s
  double rated = 14.5;    // m/s
  double cut_out = 25.0;  // m/s
  double capacity = 48.0; // MW
};

/// 0 below cut-in and at/above cut-out, cubic ramp between cut-in and rated,
/// capacity between rated and cut-out.
double power_curve(const TurbineCurve& curve, double speed_ms);

// ---------------------------------------------------------------------------
// Synthetic farm generator

struct SynthParams {
  double baseline_speed = 7.5;      // m/s
  double ar_coeff = 0.985;          // AR(1) coefficient per 15-min step
  double ar_noise_sd = 0.22;        // innovation standard deviation, m/s
  double diurnal_amplitude = 1.0;   // m/s
  double seasonal_amplitude = 2.2;  // m/s
  double seasonal_phase = 0.0;      // radians; shifts where in the year the series starts
  double power_noise_sd = 0.5;      // MW
  double nwp_speed_bias = 0.3;      // m/s
  double nwp_speed_noise_sd = 0.7;  // m/s
  std::int64_t start_time = 1546300800;  // 2019-01-01T00:00:00Z
};

/// Deterministic synthetic wind farm: speed is an AR(1) process plus diurnal
/// and seasonal sinusoids over a baseline, power follows the turbine curve
/// with clipped observation noise, and NWP channels are future truth plus
/// bias and noise.
WindSeries synth_windfarm(std::uint64_t seed, int days, const TurbineCurve& curve,
                          const SynthParams& params = {}, const std::string& farm_id = "synth");

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
  std::array<double, kNumChannels> min{};
  std::array<double, kNumChannels> max{};
  std::array<bool, kNumChannels> constant{};
  bool operator==(const NormStats&) const = default;
};

/// Per-channel min/max over series indices [lo, hi).
NormStats fit_norm(const WindSeries& s, std::size_t lo, std::size_t hi);

double norm_value(const NormStats& st, int channel, double v);
double denorm_value(const NormStats& st, int channel, double v);

struct NormalizedSeries {
  std::string farm_id;
  double capacity = 0.0;
  std::int64_t start_time = 0;
  NormStats stats;
  std::array<std::vector<double>, kNumChannels> channels;
  std::size_t size() const { return channels[0].size(); }
};

/// Min-max maps each channel to [0,1] over the fitted range; out-of-range data
/// may leave [0,1] and is never clipped.
NormalizedSeries apply_norm(const WindSeries& s, const NormStats& st);

std::vector<double> denorm_power(const std::vector<double>& values, const NormStats& st);

// ---------------------------------------------------------------------------
// Model input windows

/// One forecast origin t: a 7x15 matrix whose NWP rows hold times t+1..t+15
/// and history rows hold t-14..t, plus normalized targets at t+h.
struct InputWindow {
  std::size_t origin = 0;
  nn::Tensor matrix;  // (7, n_hist)
  double target_power = 0.0;
  double target_speed = 0.0;

  // channel views over the same storage (rows are contiguous)
  const double* nwp_rows() const { return matrix.data.data(); }
  const double* hist_speed_row() const { return &matrix.data[5 * matrix.dim(1)]; }
  const double* hist_power_row() const { return &matrix.data[6 * matrix.dim(1)]; }
};

struct WindowSet {
  std::vector<InputWindow> windows;
  std::size_t skipped = 0;  // origins in range without full history/NWP/target
  NormStats stats;
  double capacity = 0.0;
  int horizon = 8;
  int n_hist = 15;
};

/// One window per origin t in [lo, hi) whose footprint (history back to
/// t-n_hist+1, NWP out to t+n_hist, target at t+h) fits the series.
/// Throws if the range admits no window at all.
WindowSet build_windows(const NormalizedSeries& s, std::size_t lo, std::size_t hi, int h = 8,
                        int n_hist = 15);

// ---------------------------------------------------------------------------

/// Standard sample correlation; requires length >= 2 and nonconstant inputs.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace tsf::data
