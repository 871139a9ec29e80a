#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tvws/common.hpp"

namespace tvws {

struct FrequencyBand {
  double low_mhz = 0.0;
  double high_mhz = 0.0;

  /// Validating constructor; throws ValidationError unless 0 < low < high.
  static FrequencyBand make(double low_mhz, double high_mhz);

  double width_mhz() const { return high_mhz - low_mhz; }
  bool overlaps(const FrequencyBand& other) const {
    return low_mhz < other.high_mhz && other.low_mhz < high_mhz;
  }
  friend bool operator==(const FrequencyBand&, const FrequencyBand&) = default;
};

struct Channel {
  int index = 0;
  double low_mhz = 0.0;
  double high_mhz = 0.0;

  double center_mhz() const { return 0.5 * (low_mhz + high_mhz); }
  double width_mhz() const { return high_mhz - low_mhz; }
};

/// Whole channels of fixed width laid out from the band's low edge, skipping
/// excluded ranges. Indices are positions in the ascending channel list.
class ChannelGrid {
 public:
  /// Throws AlignmentError when an exclusion boundary or the band edge does not
  /// fall on a channel boundary.
  static ChannelGrid build(FrequencyBand band, double channel_width_mhz,
                           std::vector<FrequencyBand> excluded = {});

  /// 470-806 MHz, 8 MHz channels, 566-606 MHz removed: 37 channels.
  static ChannelGrid china_uhf();

  const FrequencyBand& band() const { return band_; }
  double channel_width_mhz() const { return width_mhz_; }
  const std::vector<FrequencyBand>& excluded() const { return excluded_; }
  const std::vector<Channel>& channels() const { return channels_; }
  int size() const { return static_cast<int>(channels_.size()); }
  bool valid(int index) const { return index >= 0 && index < size(); }

  /// Throws RangeError for an unknown index.
  const Channel& channel(int index) const;

  /// Channel whose [low, high) contains the frequency, if any.
  std::optional<int> index_of(double freq_mhz) const;

  friend bool operator==(const ChannelGrid& a, const ChannelGrid& b) {
    return a.band_ == b.band_ && a.width_mhz_ == b.width_mhz_ && a.excluded_ == b.excluded_;
  }

 private:
  FrequencyBand band_;
  double width_mhz_ = 8.0;
  std::vector<FrequencyBand> excluded_;
  std::vector<Channel> channels_;
};

ChannelGrid build_channel_grid(FrequencyBand band, double channel_width_mhz,
                               std::vector<FrequencyBand> excluded = {});

enum class TvStandard { AnalogPalD, DigitalDtmb };

std::string to_string(TvStandard standard);
TvStandard parse_standard(std::string_view text);

constexpr std::int64_t kForeverMs = std::numeric_limits<std::int64_t>::max();

/// Transmitter is on during [on_ms, off_ms).
struct ScheduleInterval {
  std::int64_t on_ms = 0;
  std::int64_t off_ms = kForeverMs;

  friend bool operator==(const ScheduleInterval&, const ScheduleInterval&) = default;
};

struct TvTransmitter {
  std::string id;
  TvStandard standard = TvStandard::AnalogPalD;
  int channel_index = 0;
  Point location;
  double eirp_dbm = 0.0;
  double antenna_height_m = 30.0;
  /// Empty schedule means always on.
  std::vector<ScheduleInterval> schedule;

  bool active_at(std::int64_t t_ms) const;
  /// Checks schedule ordering and the channel index against the grid.
  void validate(const ChannelGrid& grid) const;

  friend bool operator==(const TvTransmitter&, const TvTransmitter&) = default;
};

/// Binned power-vs-frequency snapshot. Bin i covers
/// [start + i*rbw, start + (i+1)*rbw).
struct PowerSpectrum {
  double start_mhz = 0.0;
  double rbw_khz = 200.0;
  std::vector<double> bins_dbm;

  std::size_t size() const { return bins_dbm.size(); }
  double rbw_mhz() const { return rbw_khz / 1000.0; }
  double end_mhz() const { return start_mhz + static_cast<double>(size()) * rbw_mhz(); }
  double bin_center_mhz(std::size_t i) const {
    return start_mhz + (static_cast<double>(i) + 0.5) * rbw_mhz();
  }
  std::optional<std::size_t> bin_containing(double freq_mhz) const;
  double total_linear_mw() const;
  void validate() const;
};

/// Fractions of total PAL-D power carried by each spectral feature. The residual is
/// spread evenly over the channel bins that hold no carrier.
struct PalDCarrierSplit {
  double vision = 0.80;
  double chroma = 0.05;
  double sound = 0.10;
  double residual = 0.05;

  double vision_offset_mhz = 1.25;
  double chroma_offset_mhz = 5.68;
  double sound_offset_mhz = 7.75;

  void validate() const;
  double min_carrier_spacing_mhz() const;
};

/// All-floor spectrum spanning the grid band. Throws ResolutionError if rbw does not tile it.
PowerSpectrum blank_spectrum(const ChannelGrid& grid, double rbw_khz);

/// Renders one transmitter's emission over the whole grid band. Bins outside the
/// transmitter's channel are at kFloorDbm. A total power of -inf renders all floor.
PowerSpectrum synthesize_tv_spectrum(const TvTransmitter& tx, const ChannelGrid& grid,
                                     double rbw_khz, double total_power_dbm,
                                     const PalDCarrierSplit& split = {});

struct PropagationConfig {
  double exponent = 3.5;
  double ref_distance_m = 1.0;
  /// Empty means free-space loss at the carrier frequency and ref distance.
  std::optional<double> ref_loss_db;
  double shadowing_sigma_db = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  double reference_loss_db(double freq_mhz) const;
};

double free_space_loss_db(double distance_m, double freq_mhz);

/// Log-distance loss without shadowing. Distances inside the reference distance
/// see the reference loss. Throws DomainError for d <= 0.
double median_path_loss_db(const PropagationConfig& cfg, double distance_m, double freq_mhz);

/// Log-distance loss with seeded log-normal shadowing. Successive calls draw
/// successive shadowing samples; the sequence is fixed by cfg.seed.
class PathLossModel {
 public:
  explicit PathLossModel(PropagationConfig cfg);

  double loss_db(double distance_m, double freq_mhz);
  const PropagationConfig& config() const { return cfg_; }

 private:
  PropagationConfig cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> shadowing_;
};

/// One-shot helper: median loss plus a single shadowing draw from a fresh model.
double path_loss(const PropagationConfig& cfg, double distance_m, double freq_mhz);

/// kTB noise over the bin bandwidth plus the receiver noise figure.
double thermal_noise_dbm(double bandwidth_khz, double noise_figure_db);

/// Linear sum of every scheduled-on transmitter's spectrum after path loss. No noise.
PowerSpectrum received_signal_spectrum(Point point, std::span<const TvTransmitter> txs,
                                       std::int64_t t_ms, PathLossModel& propagation,
                                       const ChannelGrid& grid, double rbw_khz,
                                       const PalDCarrierSplit& split = {});

/// Mean received spectrum: signal plus the thermal noise floor in every bin.
PowerSpectrum received_spectrum(Point point, std::span<const TvTransmitter> txs,
                                std::int64_t t_ms, PathLossModel& propagation,
                                const ChannelGrid& grid, double rbw_khz,
                                double noise_figure_db = 6.0,
                                const PalDCarrierSplit& split = {});

/// Element-wise linear sum of two spectra on the same bin layout.
PowerSpectrum add_spectra(const PowerSpectrum& a, const PowerSpectrum& b);

// Transmitter fixtures: id,standard,channel,x_m,y_m,eirp_dbm,height_m,schedule
// with schedule as "on:off;on:off" (ms). Empty schedule = always on, "on:" = open ended.
std::vector<TvTransmitter> load_transmitters(const std::string& path, const ChannelGrid& grid);
void save_transmitters(const std::string& path, std::span<const TvTransmitter> txs);
std::vector<ScheduleInterval> parse_schedule(std::string_view text);
std::string format_schedule(std::span<const ScheduleInterval> schedule);

}  // namespace tvws
