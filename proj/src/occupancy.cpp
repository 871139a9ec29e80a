#include "tvws/occupancy.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace tvws {

namespace {

constexpr std::int64_t kHourMs = 3'600'000;
constexpr double kFreqEps = 1e-9;

std::string format_freq(double mhz) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", mhz);
  return buf;
}

std::vector<double> band_cells(const OccupancyMatrix& m, const FrequencyBand& band) {
  const auto [lo, hi] = m.columns(band);
  std::vector<double> cells;
  cells.reserve(m.rows() * (hi - lo));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = lo; c < hi; ++c) cells.push_back(m.at(r, c));
  }
  return cells;
}

}  // namespace

OccupancyMatrix::OccupancyMatrix(std::vector<std::int64_t> timestamps_ms, std::vector<double> freqs_mhz,
                                 std::vector<double> power_dbm, TraceMeta meta)
    : timestamps_ms_(std::move(timestamps_ms)),
      freqs_mhz_(std::move(freqs_mhz)),
      power_dbm_(std::move(power_dbm)),
      meta_(std::move(meta)) {
  if (freqs_mhz_.empty()) throw ValidationError("trace has no frequency bins");
  if (power_dbm_.size() != timestamps_ms_.size() * freqs_mhz_.size()) {
    throw ValidationError("power matrix size does not match the time and frequency axes");
  }
  for (std::size_t i = 1; i < timestamps_ms_.size(); ++i) {
    if (timestamps_ms_[i] <= timestamps_ms_[i - 1]) throw ValidationError("timestamps must be strictly increasing");
  }
  for (std::size_t i = 1; i < freqs_mhz_.size(); ++i) {
    if (!(freqs_mhz_[i] > freqs_mhz_[i - 1])) throw ValidationError("bin frequencies must be strictly increasing");
  }
  for (double p : power_dbm_) {
    if (std::isnan(p)) throw ValidationError("trace contains NaN power");
  }
  if (meta_.has_position() &&
      (meta_.lat_deg.size() != timestamps_ms_.size() || meta_.lon_deg.size() != timestamps_ms_.size())) {
    throw ValidationError("position columns do not match the row count");
  }
  if (meta_.rbw_khz <= 0) {
    meta_.rbw_khz = freqs_mhz_.size() > 1 ? (freqs_mhz_[1] - freqs_mhz_[0]) * 1000.0 : 200.0;
  }
}

FrequencyBand OccupancyMatrix::span() const {
  const double half = meta_.rbw_khz / 2000.0;
  return {freqs_mhz_.front() - half, freqs_mhz_.back() + half};
}

std::pair<std::size_t, std::size_t> OccupancyMatrix::columns(const FrequencyBand& band) const {
  const auto s = span();
  if (band.low_mhz < s.low_mhz - kFreqEps || band.high_mhz > s.high_mhz + kFreqEps) {
    throw CoverageError("band " + format_double(band.low_mhz) + "-" + format_double(band.high_mhz) +
                        " MHz leaves the trace span " + format_double(s.low_mhz) + "-" +
                        format_double(s.high_mhz) + " MHz");
  }
  const auto lo = std::lower_bound(freqs_mhz_.begin(), freqs_mhz_.end(), band.low_mhz) - freqs_mhz_.begin();
  const auto hi = std::lower_bound(freqs_mhz_.begin(), freqs_mhz_.end(), band.high_mhz) - freqs_mhz_.begin();
  if (hi <= lo) {
    throw CoverageError("no trace bin inside " + format_double(band.low_mhz) + "-" +
                        format_double(band.high_mhz) + " MHz");
  }
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

OccupancyMatrix ingest_trace(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path, 1, "empty trace");
  const auto header = split(lines[0], ',');
  if (header.empty() || trim(header[0]) != "t_ms") throw ParseError(path, 1, "first column must be t_ms");
  std::size_t first_power = 1;
  const bool positioned = header.size() >= 3 && trim(header[1]) == "lat" && trim(header[2]) == "lon";
  if (positioned) first_power = 3;
  std::vector<double> freqs;
  for (std::size_t i = first_power; i < header.size(); ++i) {
    const auto name = trim(header[i]);
    if (name.substr(0, 2) != "p_") throw ParseError(path, 1, "unexpected column '" + std::string(name) + "'");
    try {
      freqs.push_back(parse_double(name.substr(2)));
    } catch (const Error&) {
      throw ParseError(path, 1, "bad frequency in column '" + std::string(name) + "'");
    }
  }
  if (freqs.empty()) throw ParseError(path, 1, "no power columns");

  TraceMeta meta;
  meta.site = std::filesystem::path(path).stem().string();
  std::vector<std::int64_t> times;
  std::vector<double> power;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != header.size()) {
      throw ParseError(path, i + 1, "row has " + std::to_string(f.size()) + " fields, header has " +
                                        std::to_string(header.size()));
    }
    try {
      const auto t = parse_int(f[0]);
      if (!times.empty() && t <= times.back()) throw ParseError(path, i + 1, "timestamps must increase");
      times.push_back(t);
      if (positioned) {
        meta.lat_deg.push_back(parse_double(f[1]));
        meta.lon_deg.push_back(parse_double(f[2]));
      }
      for (std::size_t c = first_power; c < f.size(); ++c) {
        const double p = parse_double(f[c]);
        if (std::isnan(p)) throw ParseError(path, i + 1, "NaN power in column " + std::to_string(c + 1));
        power.push_back(p);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path, i + 1, e.what());
    }
  }
  try {
    return OccupancyMatrix(std::move(times), std::move(freqs), std::move(power), std::move(meta));
  } catch (const ValidationError& e) {
    throw ParseError(path, 1, e.what());
  }
}

void write_trace(const std::string& path, const OccupancyMatrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const bool positioned = m.meta().has_position();
  out << "t_ms";
  if (positioned) out << ",lat,lon";
  for (double f : m.freqs_mhz()) out << ",p_" << format_freq(f);
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.timestamps_ms()[r];
    if (positioned) out << ',' << format_double(m.meta().lat_deg[r]) << ',' << format_double(m.meta().lon_deg[r]);
    for (double p : m.row(r)) out << ',' << format_double(p);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string ThresholdRule::to_string() const {
  if (fixed_dbm) return "fixed " + format_double(*fixed_dbm) + " dBm";
  return "p" + format_double(noise_percentile) + " noise floor + " + format_double(margin_db) + " dB";
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw InsufficientDataError("percentile of an empty set");
  if (!(pct >= 0 && pct <= 100)) throw ValidationError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double resolve_threshold(const OccupancyMatrix& m, const FrequencyBand& band, const ThresholdRule& rule) {
  if (rule.fixed_dbm) {
    m.columns(band);
    return *rule.fixed_dbm;
  }
  return percentile(band_cells(m, band), rule.noise_percentile) + rule.margin_db;
}

BandOccupancy band_duty_cycle(const OccupancyMatrix& m, const FrequencyBand& band, const ThresholdRule& rule) {
  const auto cells = band_cells(m, band);
  BandOccupancy out;
  out.threshold_dbm = rule.fixed_dbm ? *rule.fixed_dbm : percentile(cells, rule.noise_percentile) + rule.margin_db;
  if (cells.empty()) return out;
  const auto above = std::count_if(cells.begin(), cells.end(), [&](double p) { return p > out.threshold_dbm; });
  out.occupancy = static_cast<double>(above) / static_cast<double>(cells.size());
  return out;
}

DutyCycleResult duty_cycle(const OccupancyMatrix& m, const ChannelGrid& grid, const ThresholdRule& rule) {
  DutyCycleResult res;
  double weighted = 0.0, width = 0.0;
  for (const auto& ch : grid.channels()) {
    const auto b = band_duty_cycle(m, {ch.low_mhz, ch.high_mhz}, rule);
    res.occupancy.push_back(b.occupancy);
    res.threshold_dbm.push_back(b.threshold_dbm);
    weighted += b.occupancy * ch.width_mhz();
    width += ch.width_mhz();
  }
  res.band_average = width > 0 ? weighted / width : 0.0;
  return res;
}

std::string to_string(ChannelClass c) {
  switch (c) {
    case ChannelClass::Persistent: return "persistent";
    case ChannelClass::Intermittent: return "intermittent";
    case ChannelClass::Sporadic: return "sporadic";
  }
  return "?";
}

ChannelClassification classify_channel(const OccupancyMatrix& m, const ChannelGrid& grid, int channel,
                                       double noise_floor_dbm, const ClassifyParams& params) {
  const auto& ch = grid.channel(channel);
  const auto [lo, hi] = m.columns({ch.low_mhz, ch.high_mhz});
  if (m.rows() == 0) throw InsufficientDataError("trace has no sweeps");
  ChannelClassification out;
  double sum = 0.0;
  out.max_dbm = -kInf;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    const double peak = *std::max_element(row.begin() + static_cast<std::ptrdiff_t>(lo),
                                          row.begin() + static_cast<std::ptrdiff_t>(hi));
    sum += peak;
    out.max_dbm = std::max(out.max_dbm, peak);
  }
  out.avg_dbm = sum / static_cast<double>(m.rows());
  const double on = noise_floor_dbm + params.on_margin_db;
  if (out.max_dbm < on) {
    out.never_seen = true;
    out.cls = ChannelClass::Sporadic;
  } else if (out.avg_dbm < on) {
    out.cls = ChannelClass::Sporadic;
  } else if (out.max_dbm - out.avg_dbm <= params.spread_db) {
    out.cls = ChannelClass::Persistent;
  } else {
    out.cls = ChannelClass::Intermittent;
  }
  return out;
}

std::vector<double> occupancy_series(const OccupancyMatrix& m, const FrequencyBand& band,
                                     const ThresholdRule& rule, std::int64_t interval_ms) {
  if (interval_ms <= 0) throw ValidationError("interval must be positive");
  if (m.rows() == 0) throw InsufficientDataError("trace has no sweeps");
  const auto [lo, hi] = m.columns(band);
  const double threshold = resolve_threshold(m, band, rule);
  const auto t0 = m.timestamps_ms().front();
  const auto buckets = static_cast<std::size_t>((m.timestamps_ms().back() - t0) / interval_ms + 1);
  std::vector<std::size_t> above(buckets, 0), total(buckets, 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto k = static_cast<std::size_t>((m.timestamps_ms()[r] - t0) / interval_ms);
    for (std::size_t c = lo; c < hi; ++c) {
      ++total[k];
      if (m.at(r, c) > threshold) ++above[k];
    }
  }
  std::vector<double> series(buckets);
  for (std::size_t k = 0; k < buckets; ++k) {
    if (total[k] == 0) throw InsufficientDataError("interval " + std::to_string(k) + " holds no sweep");
    series[k] = static_cast<double>(above[k]) / static_cast<double>(total[k]);
  }
  return series;
}

Periodicity detect_periodicity(std::span<const double> series, std::int64_t interval_ms, double min_strength) {
  if (interval_ms <= 0) throw ValidationError("interval must be positive");
  const std::int64_t span_ms = static_cast<std::int64_t>(series.size()) * interval_ms;
  if (span_ms < 72 * kHourMs) {
    throw InsufficientDataError("periodicity needs at least 72 h of data, got " +
                                format_double(static_cast<double>(span_ms) / kHourMs) + " h");
  }
  const std::size_t n = series.size();
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  std::vector<double> x(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = series[i] - mean;
    energy += x[i] * x[i];
  }
  Periodicity out;
  if (energy <= 1e-12 * static_cast<double>(n)) return out;

  const auto lag_min = static_cast<std::size_t>((12 * kHourMs + interval_ms - 1) / interval_ms);
  const auto lag_max = static_cast<std::size_t>(36 * kHourMs / interval_ms);
  double best = -kInf;
  std::size_t best_lag = lag_min;
  for (std::size_t lag = std::max<std::size_t>(lag_min, 1); lag <= lag_max; ++lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[(i + lag) % n];
    const double r = acc / energy;
    if (r > best) {
      best = r;
      best_lag = lag;
    }
  }
  out.period_hours = static_cast<double>(best_lag * static_cast<std::size_t>(interval_ms)) / kHourMs;
  out.strength = std::max(best, 0.0);
  out.significant = out.strength >= min_strength;
  return out;
}

std::vector<Subband> load_subbands(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != "low_mhz,high_mhz,label") {
    throw ParseError(path, 1, "expected header 'low_mhz,high_mhz,label'");
  }
  std::vector<Subband> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 3) throw ParseError(path, i + 1, "expected 3 fields");
    try {
      out.push_back({FrequencyBand::make(parse_double(f[0]), parse_double(f[1])), std::string(trim(f[2]))});
    } catch (const Error& e) {
      throw ParseError(path, i + 1, e.what());
    }
  }
  return out;
}

BandSummary summarize_band(const OccupancyMatrix& m, std::span<const Subband> subbands, const ThresholdRule& rule) {
  if (subbands.empty()) throw ValidationError("no subbands to summarize");
  for (std::size_t i = 0; i < subbands.size(); ++i) {
    for (std::size_t j = i + 1; j < subbands.size(); ++j) {
      if (subbands[i].band.overlaps(subbands[j].band)) {
        throw ValidationError("subbands '" + subbands[i].label + "' and '" + subbands[j].label + "' overlap");
      }
    }
  }
  BandSummary s;
  s.threshold_rule = rule.to_string();
  double weighted = 0.0;
  for (const auto& sb : subbands) {
    const auto b = band_duty_cycle(m, sb.band, rule);
    s.rows.push_back({sb, b.occupancy, b.threshold_dbm});
    weighted += b.occupancy * sb.band.width_mhz();
    s.total_bandwidth_mhz += sb.band.width_mhz();
  }
  s.overall = weighted / s.total_bandwidth_mhz;
  return s;
}

std::string format_summary_text(const BandSummary& s) {
  std::ostringstream out;
  out << "# threshold: " << s.threshold_rule << '\n';
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %12s %11s %15s  %s\n", "subband_mhz", "bandwidth", "occupancy",
                "threshold_dbm", "label");
  out << buf;
  for (const auto& r : s.rows) {
    const std::string range = format_double(r.subband.band.low_mhz) + "-" + format_double(r.subband.band.high_mhz);
    std::snprintf(buf, sizeof buf, "%-22s %8.1f MHz %10.2f%% %15.2f  %s\n", range.c_str(),
                  r.subband.band.width_mhz(), 100.0 * r.occupancy, r.threshold_dbm, r.subband.label.c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-22s %8.1f MHz %10.2f%%\n", "overall", s.total_bandwidth_mhz, 100.0 * s.overall);
  out << buf;
  return out.str();
}

void write_summary_csv(const std::string& path, const BandSummary& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "# threshold: " << s.threshold_rule << '\n';
  out << "low_mhz,high_mhz,bandwidth_mhz,occupancy,threshold_dbm,label\n";
  for (const auto& r : s.rows) {
    out << format_double(r.subband.band.low_mhz) << ',' << format_double(r.subband.band.high_mhz) << ','
        << format_double(r.subband.band.width_mhz()) << ',' << format_double(r.occupancy) << ','
        << format_double(r.threshold_dbm) << ',' << r.subband.label << '\n';
  }
  out << ",," << format_double(s.total_bandwidth_mhz) << ',' << format_double(s.overall) << ",,overall\n";
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tvws
