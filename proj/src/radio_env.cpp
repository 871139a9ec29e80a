#include "tvws/radio_env.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>

namespace tvws {

namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kAlignTol = 1e-9;

bool is_whole_multiple(double value, double unit) {
  double q = value / unit;
  return std::abs(q - std::round(q)) < kAlignTol * std::max(1.0, std::abs(q));
}

}  // namespace

FrequencyBand FrequencyBand::make(double low_mhz, double high_mhz) {
  if (!(low_mhz > 0.0) || !(high_mhz > low_mhz) || !std::isfinite(high_mhz)) {
    throw ValidationError("invalid band " + format_double(low_mhz) + "-" + format_double(high_mhz) +
                          " MHz");
  }
  return FrequencyBand{low_mhz, high_mhz};
}

ChannelGrid ChannelGrid::build(FrequencyBand band, double channel_width_mhz,
                               std::vector<FrequencyBand> excluded) {
  band = FrequencyBand::make(band.low_mhz, band.high_mhz);
  if (!(channel_width_mhz > 0.0)) throw ValidationError("channel width must be positive");

  // Clip exclusions to the band, then merge overlaps.
  std::vector<FrequencyBand> clipped;
  for (const auto& ex : excluded) {
    FrequencyBand e = FrequencyBand::make(ex.low_mhz, ex.high_mhz);
    if (!e.overlaps(band)) continue;
    clipped.push_back({std::max(e.low_mhz, band.low_mhz), std::min(e.high_mhz, band.high_mhz)});
  }
  std::sort(clipped.begin(), clipped.end(),
            [](const auto& a, const auto& b) { return a.low_mhz < b.low_mhz; });
  std::vector<FrequencyBand> merged;
  for (const auto& e : clipped) {
    if (!merged.empty() && e.low_mhz <= merged.back().high_mhz) {
      merged.back().high_mhz = std::max(merged.back().high_mhz, e.high_mhz);
    } else {
      merged.push_back(e);
    }
  }

  ChannelGrid grid;
  grid.band_ = band;
  grid.width_mhz_ = channel_width_mhz;
  grid.excluded_ = merged;

  double cursor = band.low_mhz;
  auto fill_segment = [&](double seg_low, double seg_high) {
    double extent = seg_high - seg_low;
    if (extent <= 0.0) return;
    if (!is_whole_multiple(seg_low - band.low_mhz, channel_width_mhz) ||
        !is_whole_multiple(extent, channel_width_mhz)) {
      throw AlignmentError("segment " + format_double(seg_low) + "-" + format_double(seg_high) +
                           " MHz is not a whole number of " + format_double(channel_width_mhz) +
                           " MHz channels aligned to " + format_double(band.low_mhz) + " MHz");
    }
    auto n = static_cast<int>(std::llround(extent / channel_width_mhz));
    for (int k = 0; k < n; ++k) {
      // Edges are computed from the band origin so they carry no accumulated error.
      double offset = std::round((seg_low - band.low_mhz) / channel_width_mhz) + k;
      double low = band.low_mhz + offset * channel_width_mhz;
      grid.channels_.push_back(
          Channel{static_cast<int>(grid.channels_.size()), low, low + channel_width_mhz});
    }
  };
  for (const auto& e : merged) {
    fill_segment(cursor, e.low_mhz);
    cursor = e.high_mhz;
  }
  fill_segment(cursor, band.high_mhz);
  if (grid.channels_.empty()) throw AlignmentError("band holds no whole channel");
  return grid;
}

ChannelGrid ChannelGrid::china_uhf() {
  return build({470.0, 806.0}, 8.0, {{566.0, 606.0}});
}

const Channel& ChannelGrid::channel(int index) const {
  if (!valid(index)) {
    throw RangeError("channel index " + std::to_string(index) + " outside grid of " +
                     std::to_string(size()) + " channels");
  }
  return channels_[static_cast<std::size_t>(index)];
}

std::optional<int> ChannelGrid::index_of(double freq_mhz) const {
  for (const auto& ch : channels_) {
    if (freq_mhz >= ch.low_mhz && freq_mhz < ch.high_mhz) return ch.index;
  }
  return std::nullopt;
}

ChannelGrid build_channel_grid(FrequencyBand band, double channel_width_mhz,
                               std::vector<FrequencyBand> excluded) {
  return ChannelGrid::build(band, channel_width_mhz, std::move(excluded));
}

std::string to_string(TvStandard standard) {
  return standard == TvStandard::AnalogPalD ? "PAL-D" : "DTMB";
}

TvStandard parse_standard(std::string_view text) {
  text = trim(text);
  if (text == "PAL-D") return TvStandard::AnalogPalD;
  if (text == "DTMB") return TvStandard::DigitalDtmb;
  throw ValidationError("unknown TV standard '" + std::string(text) + "'");
}

bool TvTransmitter::active_at(std::int64_t t_ms) const {
  if (schedule.empty()) return true;
  return std::any_of(schedule.begin(), schedule.end(),
                     [t_ms](const auto& s) { return t_ms >= s.on_ms && t_ms < s.off_ms; });
}

void TvTransmitter::validate(const ChannelGrid& grid) const {
  if (id.empty()) throw ValidationError("transmitter id is empty");
  if (!grid.valid(channel_index)) {
    throw RangeError("transmitter '" + id + "' channel " + std::to_string(channel_index) +
                     " not in grid");
  }
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i].on_ms >= schedule[i].off_ms) {
      throw ValidationError("transmitter '" + id + "' has an empty schedule interval");
    }
    if (i > 0 && schedule[i].on_ms < schedule[i - 1].off_ms) {
      throw ValidationError("transmitter '" + id + "' schedule is unsorted or overlapping");
    }
  }
}

std::optional<std::size_t> PowerSpectrum::bin_containing(double freq_mhz) const {
  if (freq_mhz < start_mhz) return std::nullopt;
  auto i = static_cast<std::size_t>(std::floor((freq_mhz - start_mhz) / rbw_mhz() + 1e-9));
  if (i >= size()) return std::nullopt;
  return i;
}

double PowerSpectrum::total_linear_mw() const {
  double sum = 0.0;
  for (double b : bins_dbm) sum += db_to_linear(b);
  return sum;
}

void PowerSpectrum::validate() const {
  if (bins_dbm.empty()) throw ValidationError("spectrum has no bins");
  if (!(rbw_khz > 0.0)) throw ValidationError("spectrum rbw must be positive");
  if (!std::isfinite(total_linear_mw())) throw ValidationError("spectrum total power not finite");
}

void PalDCarrierSplit::validate() const {
  for (double f : {vision, chroma, sound, residual}) {
    if (f < 0.0) throw ValidationError("PAL-D carrier fraction must be non-negative");
  }
  if (std::abs(vision + chroma + sound + residual - 1.0) > 1e-9) {
    throw ValidationError("PAL-D carrier fractions must sum to 1");
  }
}

double PalDCarrierSplit::min_carrier_spacing_mhz() const {
  std::vector<double> offs{vision_offset_mhz, chroma_offset_mhz, sound_offset_mhz};
  std::sort(offs.begin(), offs.end());
  return std::min(offs[1] - offs[0], offs[2] - offs[1]);
}

PowerSpectrum blank_spectrum(const ChannelGrid& grid, double rbw_khz) {
  if (!(rbw_khz > 0.0)) throw ResolutionError("rbw must be positive");
  const double rbw_mhz = rbw_khz / 1000.0;
  if (!is_whole_multiple(grid.channel_width_mhz(), rbw_mhz) ||
      !is_whole_multiple(grid.band().width_mhz(), rbw_mhz)) {
    throw ResolutionError("rbw " + format_double(rbw_khz) + " kHz does not tile the channel grid");
  }
  PowerSpectrum out;
  out.start_mhz = grid.band().low_mhz;
  out.rbw_khz = rbw_khz;
  out.bins_dbm.assign(static_cast<std::size_t>(std::llround(grid.band().width_mhz() / rbw_mhz)),
                      kFloorDbm);
  return out;
}

PowerSpectrum synthesize_tv_spectrum(const TvTransmitter& tx, const ChannelGrid& grid,
                                     double rbw_khz, double total_power_dbm,
                                     const PalDCarrierSplit& split) {
  split.validate();
  const Channel& ch = grid.channel(tx.channel_index);
  if (!(rbw_khz > 0.0)) throw ResolutionError("rbw must be positive");
  const double rbw_mhz = rbw_khz / 1000.0;
  if (tx.standard == TvStandard::AnalogPalD && rbw_mhz > split.min_carrier_spacing_mhz()) {
    throw ResolutionError("rbw " + format_double(rbw_khz) +
                          " kHz cannot separate the PAL-D carriers");
  }
  PowerSpectrum out = blank_spectrum(grid, rbw_khz);
  if (total_power_dbm == -kInf) return out;

  const double total_mw = db_to_linear(total_power_dbm);
  const auto first = *out.bin_containing(ch.low_mhz);
  const auto count = static_cast<std::size_t>(std::llround(ch.width_mhz() / rbw_mhz));
  std::vector<double> lin(count, 0.0);

  if (tx.standard == TvStandard::DigitalDtmb) {
    std::fill(lin.begin(), lin.end(), total_mw / static_cast<double>(count));
  } else {
    const std::pair<double, double> carriers[] = {{split.vision_offset_mhz, split.vision},
                                                  {split.chroma_offset_mhz, split.chroma},
                                                  {split.sound_offset_mhz, split.sound}};
    std::vector<bool> is_carrier(count, false);
    for (const auto& [offset, fraction] : carriers) {
      auto b = static_cast<std::size_t>(std::floor(offset / rbw_mhz + 1e-9));
      if (b >= count) throw ResolutionError("carrier offset outside channel");
      if (is_carrier[b]) throw ResolutionError("two PAL-D carriers share one bin");
      is_carrier[b] = true;
      lin[b] += fraction * total_mw;
    }
    auto plain = static_cast<double>(std::count(is_carrier.begin(), is_carrier.end(), false));
    for (std::size_t b = 0; b < count; ++b) {
      if (!is_carrier[b] && plain > 0) lin[b] += split.residual * total_mw / plain;
    }
  }
  for (std::size_t b = 0; b < count; ++b) out.bins_dbm[first + b] = linear_to_db(lin[b]);
  return out;
}

void PropagationConfig::validate() const {
  if (!(exponent >= 2.0)) throw ValidationError("path-loss exponent must be >= 2");
  if (!(ref_distance_m > 0.0)) throw ValidationError("reference distance must be positive");
  if (!(shadowing_sigma_db >= 0.0)) throw ValidationError("shadowing sigma must be >= 0");
}

double PropagationConfig::reference_loss_db(double freq_mhz) const {
  return ref_loss_db ? *ref_loss_db : free_space_loss_db(ref_distance_m, freq_mhz);
}

double free_space_loss_db(double distance_m, double freq_mhz) {
  if (!(distance_m > 0.0)) throw DomainError("distance must be positive");
  return 20.0 * std::log10(4.0 * std::numbers::pi * distance_m * freq_mhz * 1e6 / kSpeedOfLight);
}

double median_path_loss_db(const PropagationConfig& cfg, double distance_m, double freq_mhz) {
  if (!(distance_m > 0.0)) throw DomainError("path loss needs a positive distance");
  const double ref = cfg.reference_loss_db(freq_mhz);
  if (distance_m <= cfg.ref_distance_m) return ref;
  return ref + 10.0 * cfg.exponent * std::log10(distance_m / cfg.ref_distance_m);
}

PathLossModel::PathLossModel(PropagationConfig cfg)
    : cfg_(cfg), rng_(cfg.seed), shadowing_(0.0, 1.0) {
  cfg_.validate();
}

double PathLossModel::loss_db(double distance_m, double freq_mhz) {
  double loss = median_path_loss_db(cfg_, distance_m, freq_mhz);
  if (cfg_.shadowing_sigma_db > 0.0) loss += cfg_.shadowing_sigma_db * shadowing_(rng_);
  return loss;
}

double path_loss(const PropagationConfig& cfg, double distance_m, double freq_mhz) {
  PathLossModel model(cfg);
  return model.loss_db(distance_m, freq_mhz);
}

double thermal_noise_dbm(double bandwidth_khz, double noise_figure_db) {
  return -174.0 + 10.0 * std::log10(bandwidth_khz * 1e3) + noise_figure_db;
}

PowerSpectrum add_spectra(const PowerSpectrum& a, const PowerSpectrum& b) {
  if (a.size() != b.size() || a.start_mhz != b.start_mhz || a.rbw_khz != b.rbw_khz) {
    throw ValidationError("spectra have different bin layouts");
  }
  PowerSpectrum out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.bins_dbm[i] = linear_to_db(db_to_linear(a.bins_dbm[i]) + db_to_linear(b.bins_dbm[i]));
  }
  return out;
}

PowerSpectrum received_signal_spectrum(Point point, std::span<const TvTransmitter> txs,
                                       std::int64_t t_ms, PathLossModel& propagation,
                                       const ChannelGrid& grid, double rbw_khz,
                                       const PalDCarrierSplit& split) {
  PowerSpectrum sum = blank_spectrum(grid, rbw_khz);
  std::vector<double> lin(sum.size(), 0.0);
  for (const auto& tx : txs) {
    if (!tx.active_at(t_ms)) continue;
    const Channel& ch = grid.channel(tx.channel_index);
    // A receiver on top of the transmitter sits inside the reference distance.
    double d = std::max(distance(point, tx.location), propagation.config().ref_distance_m);
    double rx_dbm = tx.eirp_dbm - propagation.loss_db(d, ch.center_mhz());
    PowerSpectrum one = synthesize_tv_spectrum(tx, grid, rbw_khz, rx_dbm, split);
    for (std::size_t i = 0; i < lin.size(); ++i) lin[i] += db_to_linear(one.bins_dbm[i]);
  }
  for (std::size_t i = 0; i < lin.size(); ++i) sum.bins_dbm[i] = linear_to_db(lin[i]);
  return sum;
}

PowerSpectrum received_spectrum(Point point, std::span<const TvTransmitter> txs,
                                std::int64_t t_ms, PathLossModel& propagation,
                                const ChannelGrid& grid, double rbw_khz, double noise_figure_db,
                                const PalDCarrierSplit& split) {
  PowerSpectrum s = received_signal_spectrum(point, txs, t_ms, propagation, grid, rbw_khz, split);
  const double noise_mw = db_to_linear(thermal_noise_dbm(rbw_khz, noise_figure_db));
  for (double& b : s.bins_dbm) b = linear_to_db(db_to_linear(b) + noise_mw);
  return s;
}

std::vector<ScheduleInterval> parse_schedule(std::string_view text) {
  std::vector<ScheduleInterval> out;
  text = trim(text);
  if (text.empty()) return out;
  for (const auto& part : split(text, ';')) {
    auto fields = split(part, ':');
    if (fields.size() != 2) throw ValidationError("schedule entry '" + part + "' is not on:off");
    ScheduleInterval s;
    s.on_ms = parse_int(fields[0]);
    s.off_ms = trim(fields[1]).empty() ? kForeverMs : parse_int(fields[1]);
    out.push_back(s);
  }
  return out;
}

std::string format_schedule(std::span<const ScheduleInterval> schedule) {
  std::string out;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(schedule[i].on_ms) + ':';
    if (schedule[i].off_ms != kForeverMs) out += std::to_string(schedule[i].off_ms);
  }
  return out;
}

std::vector<TvTransmitter> load_transmitters(const std::string& path, const ChannelGrid& grid) {
  auto lines = read_lines(path);
  std::vector<TvTransmitter> out;
  const std::string header = "id,standard,channel,x_m,y_m,eirp_dbm,height_m,schedule";
  bool seen_header = false;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    auto line = trim(lines[n]);
    if (line.empty() || line.front() == '#') continue;
    if (!seen_header) {
      if (line != header) throw ParseError(path, n + 1, "expected header '" + header + "'");
      seen_header = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 8) throw ParseError(path, n + 1, "expected 8 fields");
    try {
      TvTransmitter tx;
      tx.id = std::string(trim(f[0]));
      tx.standard = parse_standard(f[1]);
      tx.channel_index = static_cast<int>(parse_int(f[2]));
      tx.location = {parse_double(f[3]), parse_double(f[4])};
      tx.eirp_dbm = parse_double(f[5]);
      tx.antenna_height_m = parse_double(f[6]);
      tx.schedule = parse_schedule(f[7]);
      tx.validate(grid);
      for (const auto& other : out) {
        if (other.id == tx.id) throw ValidationError("duplicate transmitter id '" + tx.id + "'");
      }
      out.push_back(std::move(tx));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path, n + 1, e.what());
    }
  }
  if (!seen_header) throw ParseError(path, 1, "missing header");
  return out;
}

void save_transmitters(const std::string& path, std::span<const TvTransmitter> txs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "id,standard,channel,x_m,y_m,eirp_dbm,height_m,schedule\n";
  for (const auto& tx : txs) {
    out << tx.id << ',' << to_string(tx.standard) << ',' << tx.channel_index << ','
        << format_double(tx.location.x_m) << ',' << format_double(tx.location.y_m) << ','
        << format_double(tx.eirp_dbm) << ',' << format_double(tx.antenna_height_m) << ','
        << format_schedule(tx.schedule) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tvws
