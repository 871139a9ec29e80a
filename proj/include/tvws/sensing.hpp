#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tvws/radio_env.hpp"

namespace tvws {

/// Receiver-side noise and integration model used to turn a mean spectrum into a
/// measured one. Each bin's measurement is the mean of `snapshots` periodogram samples.
struct NoiseModel {
  double noise_figure_db = 6.0;
  double snapshots_per_ms = 12000.0;
  double rbw_khz = 200.0;

  double bin_noise_dbm() const { return thermal_noise_dbm(rbw_khz, noise_figure_db); }
  std::uint64_t snapshots(double duration_ms) const;
  void validate() const;
};

struct DetectorConfig {
  std::vector<double> carrier_offsets_mhz{1.25, 5.68, 7.75};
  double det_bw_khz = 200.0;
  double sense_duration_ms = 2.0;
  int k_required = 2;
  double target_pfa = 0.01;
  /// Per-carrier threshold, common to all carriers. Empty until calibrated.
  std::optional<double> threshold_dbm;

  void validate() const;
};

enum class SensingDecision { Occupied, Vacant };

std::string to_string(SensingDecision decision);

struct SensingReport {
  std::string cenb_id;
  int channel_index = 0;
  SensingDecision decision = SensingDecision::Vacant;
  std::vector<double> carrier_stats_dbm;
  std::int64_t t_ms = 0;

  bool occupied() const { return decision == SensingDecision::Occupied; }
};

/// One measured bin: mean of `snapshots` periodogram samples of a constant-envelope
/// component of power `signal_mw` in complex Gaussian noise of power `noise_mw`.
/// Drawn exactly as a scaled non-central chi-square with 2*snapshots degrees of freedom.
double sample_bin_power_mw(double signal_mw, double noise_mw, std::uint64_t snapshots,
                           std::mt19937_64& rng);

/// Measured spectrum over bins [first_bin, first_bin + count) of a noise-free signal
/// spectrum, with noise power `noise_dbm` per bin.
PowerSpectrum observe_spectrum(const PowerSpectrum& signal, double noise_dbm,
                               std::uint64_t snapshots, std::mt19937_64& rng,
                               std::size_t first_bin, std::size_t count);

/// Same, for the bins covering one grid channel.
PowerSpectrum observe_channel(const PowerSpectrum& signal, const Channel& channel,
                              double noise_dbm, std::uint64_t snapshots, std::mt19937_64& rng);

/// Power in the det_bw window around each carrier of the channel (dBm).
/// Throws CoverageError if the spectrum does not cover the channel.
std::vector<double> carrier_statistics(const DetectorConfig& cfg, const PowerSpectrum& spectrum,
                                       const Channel& channel);

/// Total power over the channel: the statistic of a plain 8 MHz energy detector.
double channel_energy_statistic(const PowerSpectrum& spectrum, const Channel& channel);

/// Feature detection for analog TV: Occupied iff at least k_required carrier
/// windows exceed the calibrated threshold.
SensingReport detect_tv(const DetectorConfig& cfg, const PowerSpectrum& spectrum,
                        int channel_index, const ChannelGrid& grid, std::string cenb_id = {},
                        std::int64_t t_ms = 0);

/// Sets cfg.threshold_dbm so that the k-of-n rule fires on pure noise at the
/// target rate, from `trials` seeded Monte Carlo noise trials. Returns the threshold.
double calibrate_threshold(DetectorConfig& cfg, const NoiseModel& noise, std::uint64_t trials,
                           std::uint64_t seed, unsigned workers = 1);

struct RocPoint {
  double power_dbm = 0.0;
  double pd = 0.0;
  double pfa = 0.0;
  std::uint64_t trials = 0;
};

/// Empirical Pd per received PAL-D power (total over the channel), plus the Pfa
/// measured on a noise-only stream of the same seed.
std::vector<RocPoint> estimate_roc(const DetectorConfig& cfg, const NoiseModel& noise,
                                   std::span<const double> signal_power_dbm, std::uint64_t trials,
                                   std::uint64_t seed, unsigned workers = 1,
                                   const PalDCarrierSplit& split = {});

/// Fraction of trials flagged Occupied at one received power (-inf for pure noise).
double detection_rate(const DetectorConfig& cfg, const NoiseModel& noise, double power_dbm,
                      std::uint64_t trials, std::uint64_t seed, unsigned workers = 1,
                      const PalDCarrierSplit& split = {});

/// Detector settings persisted as CSV `param,value`.
struct DetectorCalibration {
  NoiseModel noise;
  DetectorConfig detector;
  /// Provenance of threshold_dbm, when it came from calibrate_threshold.
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials;
};

DetectorCalibration load_calibration(const std::string& path);
void save_calibration(const std::string& path, const DetectorCalibration& cal);

void write_roc_csv(const std::string& path, std::span<const RocPoint> points);

}  // namespace tvws
