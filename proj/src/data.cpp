#include "tsf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tsf::data {

namespace {

// days-from-civil / civil-from-days (proleptic Gregorian, Howard Hinnant's
// algorithms)
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yy + (m <= 2));
}

double parse_double_field(const std::string& field, std::size_t row, const char* col) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || p != e)
    throw std::runtime_error("ingest_csv: unparseable number '" + field + "' in column " + col +
                             " at row " + std::to_string(row));
  return v;
}

constexpr const char* kHeader =
    "timestamp,power_mw,speed_ms,nwp_speed_ms,nwp_dir_deg,nwp_humidity_pct,nwp_pressure_hpa,"
    "nwp_temp_c";

}  // namespace

std::string format_timestamp(std::int64_t t) {
  std::int64_t days = t / 86400;
  std::int64_t secs = t % 86400;
  if (secs < 0) {
    secs += 86400;
    days -= 1;
  }
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m, d,
                static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60));
  return buf;
}

std::int64_t parse_timestamp(const std::string& s) {
  int y, mo, d, h, mi, se;
  char z = 0;
  if (s.size() != 20 ||
      std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &se, &z) != 7 ||
      z != 'Z')
    throw std::runtime_error("bad timestamp '" + s + "' (expected YYYY-MM-DDThh:mm:ssZ)");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 59)
    throw std::runtime_error("bad timestamp '" + s + "'");
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
}

std::string format_number(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

const std::vector<double>& WindSeries::channel(int c) const {
  switch (c) {
    case kNwpSpeed: return nwp_speed;
    case kNwpDir: return nwp_dir;
    case kNwpHumidity: return nwp_humidity;
    case kNwpPressure: return nwp_pressure;
    case kNwpTemp: return nwp_temp;
    case kSpeed: return speed;
    case kPower: return power;
  }
  throw std::invalid_argument("WindSeries::channel: bad index");
}

WindSeries ingest_csv(const std::string& path, double capacity, const std::string& farm_id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("ingest_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader)
    throw std::runtime_error("ingest_csv: header mismatch in " + path + " (expected '" +
                             std::string(kHeader) + "')");

  WindSeries s;
  s.farm_id = farm_id.empty() ? path : farm_id;
  std::size_t row = 0;
  std::int64_t prev_ts = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 8)
      throw std::runtime_error("ingest_csv: expected 8 columns, got " +
                               std::to_string(fields.size()) + " at row " + std::to_string(row));
    std::int64_t ts;
    try {
      ts = parse_timestamp(fields[0]);
    } catch (const std::exception& e) {
      throw std::runtime_error("ingest_csv: " + std::string(e.what()) + " at row " +
                               std::to_string(row));
    }
    if (row == 1) {
      s.start_time = ts;
    } else if (ts - prev_ts != kStepSeconds) {
      throw std::runtime_error("ingest_csv: timestamp gap or disorder at row " +
                               std::to_string(row) + " (" + format_timestamp(prev_ts) + " -> " +
                               fields[0] + ", expected +15 min)");
    }
    prev_ts = ts;
    const double p = parse_double_field(fields[1], row, "power_mw");
    const double v = parse_double_field(fields[2], row, "speed_ms");
    if (p < 0.0)
      throw std::runtime_error("ingest_csv: negative power at row " + std::to_string(row));
    if (capacity > 0.0 && p > capacity)
      throw std::runtime_error("ingest_csv: power " + format_number(p) + " exceeds capacity " +
                               format_number(capacity) + " at row " + std::to_string(row));
    if (v < 0.0)
      throw std::runtime_error("ingest_csv: negative speed at row " + std::to_string(row));
    s.power.push_back(p);
    s.speed.push_back(v);
    s.nwp_speed.push_back(parse_double_field(fields[3], row, "nwp_speed_ms"));
    s.nwp_dir.push_back(parse_double_field(fields[4], row, "nwp_dir_deg"));
    s.nwp_humidity.push_back(parse_double_field(fields[5], row, "nwp_humidity_pct"));
    s.nwp_pressure.push_back(parse_double_field(fields[6], row, "nwp_pressure_hpa"));
    s.nwp_temp.push_back(parse_double_field(fields[7], row, "nwp_temp_c"));
  }
  if (s.power.empty()) throw std::runtime_error("ingest_csv: no data rows in " + path);
  s.capacity = capacity > 0.0 ? capacity : *std::max_element(s.power.begin(), s.power.end());
  return s;
}

void write_csv(const WindSeries& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path + " for writing");
  out << kHeader << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << format_timestamp(s.timestamp(i)) << ',' << format_number(s.power[i]) << ','
        << format_number(s.speed[i]) << ',' << format_number(s.nwp_speed[i]) << ','
        << format_number(s.nwp_dir[i]) << ',' << format_number(s.nwp_humidity[i]) << ','
        << format_number(s.nwp_pressure[i]) << ',' << format_number(s.nwp_temp[i]) << '\n';
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

double power_curve(const TurbineCurve& c, double v) {
  if (v < 0.0) throw std::invalid_argument("power_curve: negative speed");
  if (!(0.0 < c.cut_in && c.cut_in < c.rated && c.rated < c.cut_out))
    throw std::invalid_argument("power_curve: require 0 < cut_in < rated < cut_out");
  if (v < c.cut_in || v >= c.cut_out) return 0.0;
  if (v >= c.rated) return c.capacity;
  const double v3 = v * v * v;
  const double ci3 = c.cut_in * c.cut_in * c.cut_in;
  const double r3 = c.rated * c.rated * c.rated;
  return c.capacity * (v3 - ci3) / (r3 - ci3);
}

WindSeries synth_windfarm(std::uint64_t seed, int days, const TurbineCurve& curve,
                          const SynthParams& p, const std::string& farm_id) {
  if (days < 1) throw std::invalid_argument("synth_windfarm: days must be >= 1");
  const std::size_t n = static_cast<std::size_t>(days) * kStepsPerDay;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> unit;
  auto gauss = [&] { return unit(gen); };

  WindSeries s;
  s.farm_id = farm_id;
  s.capacity = curve.capacity;
  s.start_time = p.start_time;
  s.power.resize(n);
  s.speed.resize(n);
  s.nwp_speed.resize(n);
  s.nwp_dir.resize(n);
  s.nwp_humidity.resize(n);
  s.nwp_pressure.resize(n);
  s.nwp_temp.resize(n);

  const double two_pi = 2.0 * M_PI;
  double ar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double day = static_cast<double>(i) / static_cast<double>(kStepsPerDay);
    const double diurnal = std::sin(two_pi * day);
    const double seasonal = std::sin(two_pi * day / 365.0 + p.seasonal_phase);
    ar = p.ar_coeff * ar + p.ar_noise_sd * gauss();
    const double v = std::max(
        0.0, p.baseline_speed + p.diurnal_amplitude * diurnal + p.seasonal_amplitude * seasonal + ar);
    s.speed[i] = v;
    const double pw = power_curve(curve, v) + p.power_noise_sd * gauss();
    s.power[i] = std::clamp(pw, 0.0, curve.capacity);
    s.nwp_speed[i] = std::max(0.0, v + p.nwp_speed_bias + p.nwp_speed_noise_sd * gauss());
    double dir = 180.0 + 90.0 * std::sin(two_pi * day / 365.0 * 2.0 + p.seasonal_phase) +
                 25.0 * gauss();
    dir = std::fmod(dir, 360.0);
    if (dir < 0.0) dir += 360.0;
    s.nwp_dir[i] = dir;
    s.nwp_humidity[i] = std::clamp(65.0 + 15.0 * seasonal - 8.0 * diurnal + 5.0 * gauss(), 2.0, 100.0);
    s.nwp_pressure[i] = 1013.0 - 7.0 * seasonal + 2.5 * gauss();
    s.nwp_temp[i] = 12.0 + 11.0 * seasonal + 3.5 * diurnal + 1.5 * gauss();
  }
  return s;
}

NormStats fit_norm(const WindSeries& s, std::size_t lo, std::size_t hi) {
  if (lo >= hi || hi > s.size()) throw std::invalid_argument("fit_norm: empty or invalid range");
  NormStats st;
  for (int c = 0; c < kNumChannels; ++c) {
    const auto& ch = s.channel(c);
    double mn = ch[lo], mx = ch[lo];
    for (std::size_t i = lo; i < hi; ++i) {
      mn = std::min(mn, ch[i]);
      mx = std::max(mx, ch[i]);
    }
    st.min[c] = mn;
    st.max[c] = mx;
    st.constant[c] = mn == mx;
  }
  return st;
}

double norm_value(const NormStats& st, int c, double v) {
  if (st.constant[c]) return 0.5;
  return (v - st.min[c]) / (st.max[c] - st.min[c]);
}

double denorm_value(const NormStats& st, int c, double v) {
  if (st.constant[c]) return st.min[c];
  return v * (st.max[c] - st.min[c]) + st.min[c];
}

NormalizedSeries apply_norm(const WindSeries& s, const NormStats& st) {
  NormalizedSeries out;
  out.farm_id = s.farm_id;
  out.capacity = s.capacity;
  out.start_time = s.start_time;
  out.stats = st;
  for (int c = 0; c < kNumChannels; ++c) {
    const auto& ch = s.channel(c);
    auto& dst = out.channels[c];
    dst.resize(ch.size());
    for (std::size_t i = 0; i < ch.size(); ++i) dst[i] = norm_value(st, c, ch[i]);
  }
  return out;
}

std::vector<double> denorm_power(const std::vector<double>& values, const NormStats& st) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = denorm_value(st, kPower, values[i]);
  return out;
}

WindowSet build_windows(const NormalizedSeries& s, std::size_t lo, std::size_t hi, int h,
                        int n_hist) {
  if (lo >= hi || hi > s.size()) throw std::invalid_argument("build_windows: invalid origin range");
  if (h < 1 || n_hist < 1) throw std::invalid_argument("build_windows: h and n_hist must be >= 1");
  WindowSet ws;
  ws.stats = s.stats;
  ws.capacity = s.capacity;
  ws.horizon = h;
  ws.n_hist = n_hist;
  const std::size_t ahead = static_cast<std::size_t>(std::max(h, n_hist));
  const std::size_t w = static_cast<std::size_t>(n_hist);
  for (std::size_t t = lo; t < hi; ++t) {
    if (t + 1 < w || t + ahead >= s.size()) {
      ++ws.skipped;
      continue;
    }
    InputWindow win;
    win.origin = t;
    win.matrix = nn::Tensor({static_cast<std::size_t>(kNumChannels), w});
    for (int r = 0; r < 5; ++r)  // NWP rows: times t+1 .. t+n_hist
      for (std::size_t k = 0; k < w; ++k) win.matrix.at(r, k) = s.channels[r][t + 1 + k];
    for (std::size_t k = 0; k < w; ++k) {  // history rows: times t-n_hist+1 .. t
      win.matrix.at(5, k) = s.channels[kSpeed][t + 1 - w + k];
      win.matrix.at(6, k) = s.channels[kPower][t + 1 - w + k];
    }
    win.target_power = s.channels[kPower][t + h];
    win.target_speed = s.channels[kSpeed][t + h];
    ws.windows.push_back(std::move(win));
  }
  if (ws.windows.empty())
    throw std::invalid_argument("build_windows: range [" + std::to_string(lo) + "," +
                                std::to_string(hi) + ") admits no complete window");
  return ws;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: constant input");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace tsf::data
