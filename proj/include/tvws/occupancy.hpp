#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tvws/radio_env.hpp"

namespace tvws {

struct TraceMeta {
  std::string site;
  double rbw_khz = 0.0;
  /// Per-row position for mobile traces; empty for fixed sites.
  std::vector<double> lat_deg;
  std::vector<double> lon_deg;

  bool has_position() const { return !lat_deg.empty(); }
};

/// Time x frequency power matrix, row-major.
class OccupancyMatrix {
 public:
  /// Throws ValidationError on mismatched dimensions, non-increasing axes or NaN cells.
  OccupancyMatrix(std::vector<std::int64_t> timestamps_ms, std::vector<double> freqs_mhz,
                  std::vector<double> power_dbm, TraceMeta meta = {});

  const std::vector<std::int64_t>& timestamps_ms() const { return timestamps_ms_; }
  const std::vector<double>& freqs_mhz() const { return freqs_mhz_; }
  const TraceMeta& meta() const { return meta_; }
  std::size_t rows() const { return timestamps_ms_.size(); }
  std::size_t cols() const { return freqs_mhz_.size(); }
  double at(std::size_t row, std::size_t col) const { return power_dbm_[row * cols() + col]; }
  std::span<const double> row(std::size_t r) const { return {power_dbm_.data() + r * cols(), cols()}; }

  /// Frequency span covered by the bins, half a bin beyond the outer centers.
  FrequencyBand span() const;
  /// Columns whose centers fall inside [low, high). Throws CoverageError if the band
  /// leaves the span or contains no bin.
  std::pair<std::size_t, std::size_t> columns(const FrequencyBand& band) const;

 private:
  std::vector<std::int64_t> timestamps_ms_;
  std::vector<double> freqs_mhz_;
  std::vector<double> power_dbm_;
  TraceMeta meta_;
};

/// CSV `t_ms,[lat,lon,]p_<MHz>,...`. Errors carry the line number.
OccupancyMatrix ingest_trace(const std::string& path);
void write_trace(const std::string& path, const OccupancyMatrix& m);

/// Fixed threshold, or the band's own noise floor (a low percentile of its cells) plus a margin.
struct ThresholdRule {
  std::optional<double> fixed_dbm;
  double noise_percentile = 10.0;
  double margin_db = 6.0;

  static ThresholdRule fixed(double dbm) { return {dbm, 10.0, 6.0}; }
  std::string to_string() const;
};

/// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double pct);

double resolve_threshold(const OccupancyMatrix& m, const FrequencyBand& band, const ThresholdRule& rule);

struct BandOccupancy {
  double occupancy = 0.0;
  double threshold_dbm = 0.0;
};

/// Share of (time, bin) cells strictly above the threshold.
BandOccupancy band_duty_cycle(const OccupancyMatrix& m, const FrequencyBand& band, const ThresholdRule& rule);

struct DutyCycleResult {
  std::vector<double> occupancy;  ///< per grid channel
  std::vector<double> threshold_dbm;
  /// Channel-bandwidth-weighted mean.
  double band_average = 0.0;
};

DutyCycleResult duty_cycle(const OccupancyMatrix& m, const ChannelGrid& grid, const ThresholdRule& rule);

enum class ChannelClass { Persistent, Intermittent, Sporadic };

std::string to_string(ChannelClass c);

struct ClassifyParams {
  double on_margin_db = 10.0;
  double spread_db = 5.0;
};

struct ChannelClassification {
  ChannelClass cls = ChannelClass::Sporadic;
  /// The channel never rose above noise + on_margin.
  bool never_seen = false;
  /// Time average and maximum of the per-sweep channel peak, in dBm.
  double avg_dbm = 0.0;
  double max_dbm = 0.0;
};

ChannelClassification classify_channel(const OccupancyMatrix& m, const ChannelGrid& grid, int channel,
                                       double noise_floor_dbm, const ClassifyParams& params = {});

/// Band occupancy per interval, intervals anchored at the first timestamp.
/// Throws InsufficientDataError when an interval holds no sweep.
std::vector<double> occupancy_series(const OccupancyMatrix& m, const FrequencyBand& band,
                                     const ThresholdRule& rule, std::int64_t interval_ms);

struct Periodicity {
  double period_hours = 0.0;
  /// Normalized circular autocorrelation at the peak.
  double strength = 0.0;
  bool significant = false;
};

/// Autocorrelation peak over lags of 12-36 h. Needs at least 72 h of data.
Periodicity detect_periodicity(std::span<const double> series, std::int64_t interval_ms,
                               double min_strength = 0.3);

struct Subband {
  FrequencyBand band;
  std::string label;
};

/// CSV `low_mhz,high_mhz,label`.
std::vector<Subband> load_subbands(const std::string& path);

struct SubbandRow {
  Subband subband;
  double occupancy = 0.0;
  double threshold_dbm = 0.0;
};

struct BandSummary {
  std::vector<SubbandRow> rows;
  double overall = 0.0;
  double total_bandwidth_mhz = 0.0;
  std::string threshold_rule;
};

/// Throws ValidationError for overlapping subbands.
BandSummary summarize_band(const OccupancyMatrix& m, std::span<const Subband> subbands, const ThresholdRule& rule);

std::string format_summary_text(const BandSummary& s);
void write_summary_csv(const std::string& path, const BandSummary& s);

}  // namespace tvws
