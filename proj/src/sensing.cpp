#include "tvws/sensing.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <thread>

namespace tvws {

namespace {

// Runs body(trial) for every trial, split across `workers` threads. Each trial
// owns its RNG so the split never changes the result.
void parallel_trials(std::uint64_t trials, unsigned workers,
                     const std::function<void(std::uint64_t)>& body) {
  workers = std::max(1u, workers);
  if (workers == 1 || trials < 2 * workers) {
    for (std::uint64_t t = 0; t < trials; ++t) body(t);
    return;
  }
  std::vector<std::jthread> pool;
  const std::uint64_t chunk = (trials + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::uint64_t lo = w * chunk;
    const std::uint64_t hi = std::min(trials, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::uint64_t t = lo; t < hi; ++t) body(t);
    });
  }
}

// Bin range of the detection window around one carrier, relative to the channel's first bin.
struct Window {
  std::size_t first = 0;
  std::size_t count = 1;
};

std::vector<Window> carrier_windows(const DetectorConfig& cfg, double rbw_khz,
                                    std::size_t bins_per_channel) {
  const double rbw_mhz = rbw_khz / 1000.0;
  const auto width = static_cast<std::size_t>(std::max(1LL, std::llround(cfg.det_bw_khz / rbw_khz)));
  std::vector<Window> out;
  for (double offset : cfg.carrier_offsets_mhz) {
    auto center = static_cast<std::int64_t>(std::floor(offset / rbw_mhz + 1e-9));
    std::int64_t first = center - static_cast<std::int64_t>((width - 1) / 2);
    if (first < 0 || static_cast<std::size_t>(first) + width > bins_per_channel) {
      throw CoverageError("detection window at +" + format_double(offset) +
                          " MHz leaves the channel");
    }
    out.push_back({static_cast<std::size_t>(first), width});
  }
  return out;
}

int count_above(std::span<const double> stats_dbm, double threshold_dbm) {
  return static_cast<int>(
      std::count_if(stats_dbm.begin(), stats_dbm.end(), [&](double s) { return s > threshold_dbm; }));
}

// k-th largest value of the per-carrier statistics: the rule fires iff this exceeds the threshold.
double kth_largest(std::vector<double> stats, int k) {
  std::nth_element(stats.begin(), stats.begin() + (k - 1), stats.end(), std::greater<>());
  return stats[static_cast<std::size_t>(k - 1)];
}

// Per-carrier window statistics for one trial, sampling only the window bins.
std::vector<double> sample_window_stats(const std::vector<Window>& windows,
                                        const std::vector<double>& channel_signal_mw,
                                        double noise_mw, std::uint64_t snapshots,
                                        std::mt19937_64& rng) {
  std::vector<double> stats;
  stats.reserve(windows.size());
  for (const auto& w : windows) {
    double sum = 0.0;
    for (std::size_t b = w.first; b < w.first + w.count; ++b) {
      sum += sample_bin_power_mw(channel_signal_mw[b], noise_mw, snapshots, rng);
    }
    stats.push_back(linear_to_db(sum));
  }
  return stats;
}

struct TrialSetup {
  std::vector<Window> windows;
  std::vector<double> channel_signal_mw;
  double noise_mw = 0.0;
  std::uint64_t snapshots = 0;
};

TrialSetup make_setup(const DetectorConfig& cfg, const NoiseModel& noise, double power_dbm,
                      const PalDCarrierSplit& split) {
  cfg.validate();
  noise.validate();
  // One isolated 8 MHz channel carries the PAL-D signature at the requested total power.
  const auto grid = ChannelGrid::build(FrequencyBand::make(698.0, 706.0), 8.0);
  TvTransmitter tx;
  tx.standard = TvStandard::AnalogPalD;
  auto spectrum = synthesize_tv_spectrum(tx, grid, noise.rbw_khz, power_dbm, split);
  TrialSetup s;
  s.windows = carrier_windows(cfg, noise.rbw_khz, spectrum.size());
  for (double b : spectrum.bins_dbm) s.channel_signal_mw.push_back(db_to_linear(b));
  s.noise_mw = db_to_linear(noise.bin_noise_dbm());
  s.snapshots = noise.snapshots(cfg.sense_duration_ms);
  return s;
}

}  // namespace

std::uint64_t NoiseModel::snapshots(double duration_ms) const {
  if (!(duration_ms > 0.0)) throw ValidationError("sensing duration must be positive");
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(snapshots_per_ms * duration_ms)));
}

void NoiseModel::validate() const {
  if (std::isnan(noise_figure_db) || noise_figure_db == kInf) {
    throw ValidationError("noise figure must be finite or -inf");
  }
  if (!(snapshots_per_ms > 0.0)) throw ValidationError("snapshot rate must be positive");
  if (!(rbw_khz > 0.0)) throw ValidationError("rbw must be positive");
}

void DetectorConfig::validate() const {
  if (carrier_offsets_mhz.empty()) throw ValidationError("detector needs at least one carrier");
  if (k_required < 1 || k_required > static_cast<int>(carrier_offsets_mhz.size())) {
    throw ValidationError("k_required must be in [1, carrier count]");
  }
  if (!(target_pfa > 0.0 && target_pfa < 1.0)) throw ValidationError("target_pfa must be in (0, 1)");
  if (!(det_bw_khz > 0.0)) throw ValidationError("detection bandwidth must be positive");
  if (!(sense_duration_ms > 0.0)) throw ValidationError("sensing duration must be positive");
  auto offs = carrier_offsets_mhz;
  std::sort(offs.begin(), offs.end());
  for (std::size_t i = 1; i < offs.size(); ++i) {
    if (det_bw_khz / 1000.0 > offs[i] - offs[i - 1]) {
      throw ValidationError("detection bandwidth exceeds the carrier spacing");
    }
  }
}

std::string to_string(SensingDecision decision) {
  return decision == SensingDecision::Occupied ? "Occupied" : "Vacant";
}

double sample_bin_power_mw(double signal_mw, double noise_mw, std::uint64_t snapshots,
                           std::mt19937_64& rng) {
  const auto n = static_cast<double>(snapshots);
  if (noise_mw <= 0.0) return signal_mw;
  if (signal_mw <= 0.0) {
    std::gamma_distribution<double> g(n, noise_mw / n);
    return g(rng);
  }
  // Non-central chi-square with 2N dof split into a central part and one shifted square.
  const double lambda = 2.0 * n * signal_mw / noise_mw;
  std::gamma_distribution<double> central((2.0 * n - 1.0) / 2.0, 2.0);
  std::normal_distribution<double> z(0.0, 1.0);
  const double shifted = z(rng) + std::sqrt(lambda);
  return noise_mw / (2.0 * n) * (central(rng) + shifted * shifted);
}

PowerSpectrum observe_spectrum(const PowerSpectrum& signal, double noise_dbm,
                               std::uint64_t snapshots, std::mt19937_64& rng,
                               std::size_t first_bin, std::size_t count) {
  if (first_bin + count > signal.size()) throw CoverageError("observation range outside spectrum");
  const double noise_mw = db_to_linear(noise_dbm);
  PowerSpectrum out;
  out.rbw_khz = signal.rbw_khz;
  out.start_mhz = signal.start_mhz + static_cast<double>(first_bin) * signal.rbw_mhz();
  out.bins_dbm.reserve(count);
  for (std::size_t i = first_bin; i < first_bin + count; ++i) {
    out.bins_dbm.push_back(
        linear_to_db(sample_bin_power_mw(db_to_linear(signal.bins_dbm[i]), noise_mw, snapshots, rng)));
  }
  return out;
}

PowerSpectrum observe_channel(const PowerSpectrum& signal, const Channel& channel,
                              double noise_dbm, std::uint64_t snapshots, std::mt19937_64& rng) {
  auto first = signal.bin_containing(channel.low_mhz + 0.5 * signal.rbw_mhz());
  auto last = signal.bin_containing(channel.high_mhz - 0.5 * signal.rbw_mhz());
  if (!first || !last) throw CoverageError("spectrum does not cover channel " + std::to_string(channel.index));
  return observe_spectrum(signal, noise_dbm, snapshots, rng, *first, *last - *first + 1);
}

std::vector<double> carrier_statistics(const DetectorConfig& cfg, const PowerSpectrum& spectrum,
                                       const Channel& channel) {
  auto first = spectrum.bin_containing(channel.low_mhz + 0.5 * spectrum.rbw_mhz());
  auto last = spectrum.bin_containing(channel.high_mhz - 0.5 * spectrum.rbw_mhz());
  if (!first || !last) throw CoverageError("spectrum does not cover channel " + std::to_string(channel.index));
  const auto windows = carrier_windows(cfg, spectrum.rbw_khz, *last - *first + 1);
  std::vector<double> stats;
  for (const auto& w : windows) {
    double sum = 0.0;
    for (std::size_t b = w.first; b < w.first + w.count; ++b) {
      sum += db_to_linear(spectrum.bins_dbm[*first + b]);
    }
    stats.push_back(linear_to_db(sum));
  }
  return stats;
}

double channel_energy_statistic(const PowerSpectrum& spectrum, const Channel& channel) {
  auto first = spectrum.bin_containing(channel.low_mhz + 0.5 * spectrum.rbw_mhz());
  auto last = spectrum.bin_containing(channel.high_mhz - 0.5 * spectrum.rbw_mhz());
  if (!first || !last) throw CoverageError("spectrum does not cover channel " + std::to_string(channel.index));
  double sum = 0.0;
  for (std::size_t b = *first; b <= *last; ++b) sum += db_to_linear(spectrum.bins_dbm[b]);
  return linear_to_db(sum);
}

SensingReport detect_tv(const DetectorConfig& cfg, const PowerSpectrum& spectrum,
                        int channel_index, const ChannelGrid& grid, std::string cenb_id,
                        std::int64_t t_ms) {
  if (!cfg.threshold_dbm) throw CalibrationError("detector threshold is not calibrated");
  SensingReport report;
  report.cenb_id = std::move(cenb_id);
  report.channel_index = channel_index;
  report.t_ms = t_ms;
  report.carrier_stats_dbm = carrier_statistics(cfg, spectrum, grid.channel(channel_index));
  report.decision = count_above(report.carrier_stats_dbm, *cfg.threshold_dbm) >= cfg.k_required
                        ? SensingDecision::Occupied
                        : SensingDecision::Vacant;
  return report;
}

double calibrate_threshold(DetectorConfig& cfg, const NoiseModel& noise, std::uint64_t trials,
                           std::uint64_t seed, unsigned workers) {
  cfg.validate();
  noise.validate();
  const double min_trials = std::ceil(10.0 / cfg.target_pfa);
  if (static_cast<double>(trials) < min_trials) {
    throw CalibrationError("calibration needs at least " + format_double(min_trials) + " trials");
  }
  const TrialSetup setup = make_setup(cfg, noise, -kInf, {});
  std::vector<double> kth(trials);
  parallel_trials(trials, workers, [&](std::uint64_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    kth[t] = kth_largest(
        sample_window_stats(setup.windows, setup.channel_signal_mw, setup.noise_mw, setup.snapshots, rng),
        cfg.k_required);
  });
  std::sort(kth.begin(), kth.end());
  if (!std::isfinite(kth.front()) || !std::isfinite(kth.back()) || kth.front() == kth.back()) {
    throw CalibrationError("noise model is degenerate; the statistic does not vary");
  }
  const auto m = static_cast<std::int64_t>(trials);
  const std::int64_t idx = m - 1 - std::llround(static_cast<double>(m) * cfg.target_pfa);
  cfg.threshold_dbm = idx < 0 ? -kInf : kth[static_cast<std::size_t>(idx)];
  return *cfg.threshold_dbm;
}

double detection_rate(const DetectorConfig& cfg, const NoiseModel& noise, double power_dbm,
                      std::uint64_t trials, std::uint64_t seed, unsigned workers,
                      const PalDCarrierSplit& split) {
  if (!cfg.threshold_dbm) throw CalibrationError("detector threshold is not calibrated");
  if (trials == 0) return 0.0;
  const TrialSetup setup = make_setup(cfg, noise, power_dbm, split);
  std::atomic<std::uint64_t> hits{0};
  parallel_trials(trials, workers, [&](std::uint64_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    auto stats =
        sample_window_stats(setup.windows, setup.channel_signal_mw, setup.noise_mw, setup.snapshots, rng);
    if (count_above(stats, *cfg.threshold_dbm) >= cfg.k_required) hits.fetch_add(1, std::memory_order_relaxed);
  });
  return static_cast<double>(hits.load()) / static_cast<double>(trials);
}

std::vector<RocPoint> estimate_roc(const DetectorConfig& cfg, const NoiseModel& noise,
                                   std::span<const double> signal_power_dbm, std::uint64_t trials,
                                   std::uint64_t seed, unsigned workers,
                                   const PalDCarrierSplit& split) {
  const double pfa = detection_rate(cfg, noise, -kInf, trials, derive_seed(seed, 0), workers, split);
  std::vector<RocPoint> out;
  for (std::size_t i = 0; i < signal_power_dbm.size(); ++i) {
    RocPoint p;
    p.power_dbm = signal_power_dbm[i];
    p.pd = detection_rate(cfg, noise, p.power_dbm, trials, derive_seed(seed, i + 1), workers, split);
    p.pfa = pfa;
    p.trials = trials;
    out.push_back(p);
  }
  return out;
}

DetectorCalibration load_calibration(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != "param,value") {
    throw ParseError(path, 1, "expected header 'param,value'");
  }
  DetectorCalibration cal;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, ',');
    if (fields.size() != 2) throw ParseError(path, i + 1, "expected 2 fields");
    const std::string key(trim(fields[0]));
    const std::string value(trim(fields[1]));
    try {
      if (key == "noise_figure_db") cal.noise.noise_figure_db = parse_double(value);
      else if (key == "snapshots_per_ms") cal.noise.snapshots_per_ms = parse_double(value);
      else if (key == "rbw_khz") cal.noise.rbw_khz = parse_double(value);
      else if (key == "threshold_dbm") cal.detector.threshold_dbm = parse_double(value);
      else if (key == "k_required") cal.detector.k_required = static_cast<int>(parse_int(value));
      else if (key == "target_pfa") cal.detector.target_pfa = parse_double(value);
      else if (key == "sense_duration_ms") cal.detector.sense_duration_ms = parse_double(value);
      else if (key == "det_bw_khz") cal.detector.det_bw_khz = parse_double(value);
      else if (key == "calibration_seed") cal.seed = static_cast<std::uint64_t>(parse_int(value));
      else if (key == "calibration_trials") cal.trials = static_cast<std::uint64_t>(parse_int(value));
      else if (key == "carrier_offsets_mhz") {
        cal.detector.carrier_offsets_mhz.clear();
        for (const auto& f : split(value, ';')) cal.detector.carrier_offsets_mhz.push_back(parse_double(f));
      } else {
        throw ParseError(path, i + 1, "unknown parameter '" + key + "'");
      }
    } catch (const ValidationError& e) {
      throw ParseError(path, i + 1, e.what());
    }
  }
  cal.noise.validate();
  cal.detector.validate();
  return cal;
}

void save_calibration(const std::string& path, const DetectorCalibration& cal) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  std::string offsets;
  for (double o : cal.detector.carrier_offsets_mhz) {
    if (!offsets.empty()) offsets += ';';
    offsets += format_double(o);
  }
  out << "param,value\n"
      << "noise_figure_db," << format_double(cal.noise.noise_figure_db) << '\n'
      << "snapshots_per_ms," << format_double(cal.noise.snapshots_per_ms) << '\n'
      << "rbw_khz," << format_double(cal.noise.rbw_khz) << '\n'
      << "carrier_offsets_mhz," << offsets << '\n'
      << "det_bw_khz," << format_double(cal.detector.det_bw_khz) << '\n'
      << "sense_duration_ms," << format_double(cal.detector.sense_duration_ms) << '\n'
      << "k_required," << cal.detector.k_required << '\n'
      << "target_pfa," << format_double(cal.detector.target_pfa) << '\n';
  if (cal.detector.threshold_dbm) out << "threshold_dbm," << format_double(*cal.detector.threshold_dbm) << '\n';
  if (cal.seed) out << "calibration_seed," << *cal.seed << '\n';
  if (cal.trials) out << "calibration_trials," << *cal.trials << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

void write_roc_csv(const std::string& path, std::span<const RocPoint> points) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "power_dbm,pd,pfa,trials\n";
  for (const auto& p : points) {
    out << format_double(p.power_dbm) << ',' << format_double(p.pd) << ',' << format_double(p.pfa)
        << ',' << p.trials << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tvws
