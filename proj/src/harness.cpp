#include "tvws/harness.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace tvws {

namespace {

constexpr std::int64_t kFrameMs = 10;
constexpr std::uint64_t kCalibrationStream = 1;
constexpr std::uint64_t kTrafficStream = 2;
constexpr std::uint64_t kStudyStream = 3;
constexpr std::uint64_t kSensingStreamBase = 100;

// Typed access to an IniFile that remembers which keys were read, so leftovers
// can be reported as unknown.
class Reader {
 public:
  explicit Reader(const IniFile& ini) : ini_(ini) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    return ini_.get(key);
  }

  std::string text(const std::string& key, std::string fallback) {
    auto v = raw(key);
    return v ? *v : fallback;
  }

  template <class T>
  T number(const std::string& key, T fallback) {
    auto v = raw(key);
    return v ? convert<T>(key, *v) : fallback;
  }

  template <class T>
  T required_number(const std::string& key) {
    used_.insert(key);
    return convert<T>(key, ini_.require(key));
  }

  bool flag(const std::string& key, bool fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw bad(key, "expected true or false");
  }

  std::filesystem::path file(const std::string& key) {
    auto v = raw(key);
    auto p = std::filesystem::path(*v);
    if (p.is_relative()) p = ini_.path().parent_path() / p;
    if (!std::filesystem::exists(p)) throw bad(key, "file '" + p.string() + "' not found");
    return p;
  }

  ConfigError bad(const std::string& key, const std::string& why) const {
    return ConfigError(ini_.path().string() + ":" + std::to_string(ini_.line_of(key)) + ": key '" + key +
                       "': " + why);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : ini_.values()) {
      if (!used_.contains(key)) {
        throw ConfigError(ini_.path().string() + ":" + std::to_string(ini_.line_of(key)) + ": unknown key '" +
                          key + "'");
      }
    }
  }

 private:
  template <class T>
  T convert(const std::string& key, const std::string& value) const {
    try {
      if constexpr (std::is_floating_point_v<T>) {
        return static_cast<T>(parse_double(value));
      } else {
        const auto v = parse_int(value);
        if (std::is_unsigned_v<T> && v < 0) throw ValidationError("must not be negative");
        return static_cast<T>(v);
      }
    } catch (const Error& e) {
      throw bad(key, "'" + value + "' " + e.what());
    }
  }

  const IniFile& ini_;
  std::set<std::string> used_;
};

ChannelBlock parse_block(std::string_view text) {
  const auto dash = text.find('-');
  const auto first = parse_int(text.substr(0, dash));
  const auto last = dash == std::string_view::npos ? first : parse_int(text.substr(dash + 1));
  if (first < 0 || last < first) throw ValidationError("bad channel block");
  return {static_cast<int>(first), static_cast<int>(last - first + 1)};
}

std::vector<FrequencyBand> parse_ranges(std::string_view text) {
  std::vector<FrequencyBand> out;
  for (const auto& part : split(text, ';')) {
    const auto p = trim(part);
    if (p.empty()) continue;
    const auto dash = p.find('-');
    if (dash == std::string_view::npos) throw ValidationError("expected low-high");
    out.push_back(FrequencyBand::make(parse_double(p.substr(0, dash)), parse_double(p.substr(dash + 1))));
  }
  return out;
}

void read_interference(Reader& r, InterferenceConfig& c) {
  c.isd_m = r.number("interference.isd_m", c.isd_m);
  c.tv_radius_m = r.number("interference.tv_radius_m", c.tv_radius_m);
  c.tv_offset.x_m = r.number("interference.tv_offset_x_m", c.tv_offset.x_m);
  c.tv_offset.y_m = r.number("interference.tv_offset_y_m", c.tv_offset.y_m);
  c.freq_mhz = r.number("interference.freq_mhz", c.freq_mhz);
  c.tv_eirp_dbm = r.number("interference.tv_eirp_dbm", c.tv_eirp_dbm);
  c.cenb_power_dbm = r.number("interference.cenb_power_dbm", c.cenb_power_dbm);
  c.ue_power_dbm = r.number("interference.ue_power_dbm", c.ue_power_dbm);
  c.ground_exponent = r.number("interference.ground_exponent", c.ground_exponent);
  c.elevated_exponent = r.number("interference.elevated_exponent", c.elevated_exponent);
  c.min_coupling_loss_db = r.number("interference.min_coupling_loss_db", c.min_coupling_loss_db);
  c.sector_beamwidth_deg = r.number("interference.sector_beamwidth_deg", c.sector_beamwidth_deg);
  c.front_to_back_db = r.number("interference.front_to_back_db", c.front_to_back_db);
  c.lte_bandwidth_mhz = r.number("interference.lte_bandwidth_mhz", c.lte_bandwidth_mhz);
  c.ue_noise_figure_db = r.number("interference.ue_noise_figure_db", c.ue_noise_figure_db);
  c.cenb_noise_figure_db = r.number("interference.cenb_noise_figure_db", c.cenb_noise_figure_db);
  c.tv_bandwidth_mhz = r.number("interference.tv_bandwidth_mhz", c.tv_bandwidth_mhz);
  c.tv_noise_figure_db = r.number("interference.tv_noise_figure_db", c.tv_noise_figure_db);
  c.tv_protection_db = r.number("interference.tv_protection_db", c.tv_protection_db);
  c.tv_receivers = r.number("interference.tv_receivers", c.tv_receivers);
  c.ues_per_sector = r.number("interference.ues_per_sector", c.ues_per_sector);
}

void read_study(Reader& r, StudyConfig& s) {
  s.enabled = r.flag("study.enabled", s.enabled);
  s.acir_min_db = r.number("study.acir_min_db", s.acir_min_db);
  s.acir_max_db = r.number("study.acir_max_db", s.acir_max_db);
  s.acir_step_db = r.number("study.acir_step_db", s.acir_step_db);
  s.snapshots = r.number("study.snapshots", s.snapshots);
  s.loss_budget = r.number("study.loss_budget", s.loss_budget);
  s.workers = r.number("study.workers", s.workers);
  if (r.raw("study.guard_band_map")) s.guard_band_map = r.file("study.guard_band_map");
  read_interference(r, s.interference);
  try {
    s.interference.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("interference: ") + e.what());
  }
  if (!(s.acir_step_db > 0) || s.acir_max_db < s.acir_min_db) throw r.bad("study.acir_step_db", "empty ACIR range");
  if (s.snapshots < 100) throw r.bad("study.snapshots", "at least 100 snapshots are required");
}

std::vector<bool> usable_for_asm(const std::vector<Region>& regions, const std::vector<SensingReport>& reports) {
  std::vector<bool> v(regions.size(), false);
  for (std::size_t c = 0; c < regions.size(); ++c) v[c] = regions[c] == Region::White;
  for (const auto& r : reports) {
    const auto c = static_cast<std::size_t>(r.channel_index);
    if (regions[c] == Region::Grey) v[c] = !r.occupied();
    if (regions[c] != Region::Black && r.occupied()) v[c] = false;
  }
  return v;
}

std::string block_text(const std::optional<ChannelBlock>& b) {
  return b && !b->empty() ? b->to_string() : "dedicated";
}

}  // namespace

// ---- IniFile ---------------------------------------------------------------

IniFile IniFile::parse(const std::string& path) {
  IniFile ini;
  ini.path_ = path;
  std::vector<std::string> lines;
  try {
    lines = read_lines(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  std::string section;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(path + ":" + std::to_string(i + 1) + ": unterminated section");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(path + ":" + std::to_string(i + 1) + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    auto value = trim(line.substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string_view::npos) value = trim(value.substr(0, hash));
    if (!section.empty()) key = section + "." + key;
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(i + 1) + ": empty key");
    if (ini.values_.contains(key)) throw ConfigError(path + ":" + std::to_string(i + 1) + ": duplicate key '" + key + "'");
    ini.values_[key] = std::string(value);
    ini.lines_[key] = i + 1;
  }
  return ini;
}

std::optional<std::string> IniFile::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

const std::string& IniFile::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(path_.string() + ": missing mandatory key '" + key + "'");
  return it->second;
}

std::size_t IniFile::line_of(const std::string& key) const {
  auto it = lines_.find(key);
  return it == lines_.end() ? 0 : it->second;
}

// ---- Scenario --------------------------------------------------------------

std::vector<double> StudyConfig::acir_values() const {
  std::vector<double> v;
  for (int i = 0;; ++i) {
    const double a = acir_min_db + i * acir_step_db;
    if (a > acir_max_db + 1e-9) break;
    v.push_back(a);
  }
  return v;
}

ChannelGrid ScenarioConfig::grid() const { return ChannelGrid::build(grid_band, channel_mhz, grid_excluded); }

void ScenarioConfig::validate() const {
  if (duration_ms <= 0 || duration_ms % kFrameMs != 0) {
    throw ConfigError("scenario.duration_ms must be a positive multiple of 10, got " + std::to_string(duration_ms));
  }
  if (cenbs.empty()) throw ConfigError("at least one cenb.<id>.* entry is required");
  if (packets_per_subframe < 1) throw ConfigError("traffic.packets_per_subframe must be >= 1");
  if (!(loss_floor >= 0 && loss_floor < 1)) throw ConfigError("traffic.loss_floor must lie in [0, 1)");
  if (policy.confirm_frames < 1) throw ConfigError("decision.confirm_frames must be >= 1");
  if (asm_epoch_ms < 0 || asm_epoch_ms % kFrameMs != 0) throw ConfigError("asm.epoch_ms must be a multiple of 10");
  try {
    const auto g = grid();
    for (const auto& c : cenbs) {
      if (c.initial_block && !(g.valid(c.initial_block->first) && g.valid(c.initial_block->last()))) {
        throw ConfigError("cenb." + c.id + ".block outside the channel grid");
      }
    }
    propagation.validate();
    noise.validate();
    detector.validate();
    build_frame_schedule(frame);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ScenarioConfig load_scenario(const std::string& path) {
  const auto ini = IniFile::parse(path);
  Reader r(ini);
  ScenarioConfig cfg;
  cfg.source = path;

  cfg.seed = r.required_number<std::uint64_t>("scenario.seed");
  cfg.duration_ms = r.number("scenario.duration_ms", cfg.duration_ms);
  if (cfg.duration_ms <= 0 || cfg.duration_ms % kFrameMs != 0) {
    throw r.bad("scenario.duration_ms", "must be a positive multiple of 10 ms");
  }
  if (auto out = r.raw("scenario.output_dir")) {
    cfg.output_dir = *out;
    if (cfg.output_dir.is_relative()) cfg.output_dir = ini.path().parent_path() / cfg.output_dir;
  }

  try {
    cfg.grid_band = FrequencyBand::make(r.number("grid.low_mhz", cfg.grid_band.low_mhz),
                                        r.number("grid.high_mhz", cfg.grid_band.high_mhz));
    cfg.channel_mhz = r.number("grid.channel_mhz", cfg.channel_mhz);
    if (auto ex = r.raw("grid.exclude")) cfg.grid_excluded = parse_ranges(*ex);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw r.bad("grid.exclude", e.what());
  }

  if (r.raw("files.transmitters")) cfg.transmitters_file = r.file("files.transmitters");
  if (r.raw("files.geodb")) cfg.geodb_file = r.file("files.geodb");
  cfg.default_required_rx_dbm = r.number("geodb.required_rx_dbm", cfg.default_required_rx_dbm);

  cfg.propagation.exponent = r.number("propagation.exponent", cfg.propagation.exponent);
  cfg.propagation.ref_distance_m = r.number("propagation.ref_distance_m", cfg.propagation.ref_distance_m);
  cfg.propagation.shadowing_sigma_db = r.number("propagation.shadowing_sigma_db", cfg.propagation.shadowing_sigma_db);

  cfg.noise.noise_figure_db = r.number("sensing.noise_figure_db", cfg.noise.noise_figure_db);
  cfg.noise.snapshots_per_ms = r.number("sensing.snapshots_per_ms", cfg.noise.snapshots_per_ms);
  cfg.noise.rbw_khz = r.number("sensing.rbw_khz", cfg.noise.rbw_khz);
  cfg.detector.det_bw_khz = r.number("sensing.det_bw_khz", cfg.detector.det_bw_khz);
  cfg.detector.k_required = r.number("sensing.k_required", cfg.detector.k_required);
  cfg.detector.target_pfa = r.number("sensing.target_pfa", cfg.detector.target_pfa);
  if (r.raw("sensing.threshold_dbm")) cfg.detector.threshold_dbm = r.number("sensing.threshold_dbm", 0.0);
  cfg.calibration_trials = r.number("sensing.calibration_trials", cfg.calibration_trials);
  const auto fusion = r.text("sensing.fusion", "or");
  if (fusion == "or") {
    cfg.fusion = FusionRule::Or;
  } else if (fusion == "majority") {
    cfg.fusion = FusionRule::Majority;
  } else if (fusion == "none") {
    cfg.fusion.reset();
  } else {
    throw r.bad("sensing.fusion", "expected or, majority or none");
  }
  cfg.coop_distance_m = r.number("sensing.coop_distance_m", cfg.coop_distance_m);

  cfg.frame.config_id = r.number("frame.config", cfg.frame.config_id);
  cfg.frame.split.dwpts_ms = r.number("frame.dwpts_ms", cfg.frame.split.dwpts_ms);
  cfg.frame.split.gp_ms = r.number("frame.gp_ms", cfg.frame.split.gp_ms);
  cfg.frame.split.uppts_ms = r.number("frame.uppts_ms", cfg.frame.split.uppts_ms);
  cfg.frame.wide_scan = r.flag("frame.wide_scan", cfg.frame.wide_scan);

  cfg.policy.confirm_frames = r.number("decision.confirm_frames", cfg.policy.confirm_frames);
  cfg.policy.max_block_channels = r.number("decision.max_block_channels", cfg.policy.max_block_channels);
  cfg.policy.guard_channels = r.number("decision.guard_channels", cfg.policy.guard_channels);
  cfg.policy.retune_ms = r.number("decision.retune_ms", cfg.policy.retune_ms);

  cfg.reuse_distance_m = r.number("asm.reuse_distance_m", cfg.reuse_distance_m);
  cfg.asm_demand_channels = r.number("asm.demand_channels", cfg.asm_demand_channels);
  cfg.asm_epoch_ms = r.number("asm.epoch_ms", cfg.asm_epoch_ms);

  cfg.packets_per_subframe = r.number("traffic.packets_per_subframe", cfg.packets_per_subframe);
  cfg.loss_floor = r.number("traffic.loss_floor", cfg.loss_floor);

  std::vector<std::string> ids;
  for (const auto& [key, value] : ini.values()) {
    if (key.rfind("cenb.", 0) != 0) continue;
    const auto rest = key.substr(5);
    const auto dot = rest.find('.');
    if (dot == std::string::npos) continue;
    const auto id = rest.substr(0, dot);
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  for (const auto& id : ids) {
    const std::string p = "cenb." + id + ".";
    CenbSpec c;
    c.id = id;
    c.location = {r.required_number<double>(p + "x_m"), r.required_number<double>(p + "y_m")};
    c.power_dbm = r.number(p + "power_dbm", c.power_dbm);
    c.dedicated_band.low_mhz = r.number(p + "dedicated_low_mhz", c.dedicated_band.low_mhz);
    c.dedicated_band.high_mhz = r.number(p + "dedicated_high_mhz", c.dedicated_band.high_mhz);
    if (auto b = r.raw(p + "block")) {
      try {
        c.initial_block = parse_block(*b);
      } catch (const Error& e) {
        throw r.bad(p + "block", e.what());
      }
    }
    cfg.cenbs.push_back(c);
  }

  read_study(r, cfg.study);
  r.reject_unknown();
  cfg.validate();
  return cfg;
}

StudyConfig load_study(const std::string& path, std::uint64_t* seed) {
  const auto ini = IniFile::parse(path);
  Reader r(ini);
  StudyConfig s;
  s.enabled = true;
  const auto sd = r.required_number<std::uint64_t>("study.seed");
  if (seed) *seed = sd;
  read_study(r, s);
  r.reject_unknown();
  return s;
}

// ---- Simulation ------------------------------------------------------------

namespace {

struct CenbRuntime {
  CenbState state;
  SpectrumView view;
  /// Noise-free spectrum of each transmitter at this CeNB.
  std::vector<PowerSpectrum> tx_spectra;
  /// Whether each transmitter, when on, disrupts a co-channel carrier here.
  std::vector<bool> tx_disrupts;
  std::vector<SensingReport> fused;
  std::vector<bool> last_occupied;
  /// Report time that started each channel's current Occupied run.
  std::vector<std::optional<std::int64_t>> occupied_since;
  std::optional<std::int64_t> onset_ms;
  std::optional<std::int64_t> detect_ms;
};

GeoDb build_database(const ScenarioConfig& cfg, const std::vector<TvTransmitter>& txs, const ChannelGrid& grid) {
  if (cfg.geodb_file) return load_geodb(cfg.geodb_file->string(), grid, cfg.propagation);
  GeoDb db;
  for (const auto& tx : txs) db.register_service(tx, cfg.default_required_rx_dbm, cfg.propagation, grid);
  return db;
}

}  // namespace

MetricsSeries run_simulation(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto grid = cfg.grid();
  const auto txs = cfg.transmitters_file ? load_transmitters(cfg.transmitters_file->string(), grid)
                                         : std::vector<TvTransmitter>{};
  const GeoDb db = build_database(cfg, txs, grid);
  const auto frame = build_frame_schedule(cfg.frame);

  DetectorConfig detector = cfg.detector;
  detector.sense_duration_ms = frame.sensing_budget_ms();
  if (!detector.threshold_dbm) {
    calibrate_threshold(detector, cfg.noise, cfg.calibration_trials, derive_seed(cfg.seed, kCalibrationStream));
  }
  const auto snapshots = cfg.noise.snapshots(detector.sense_duration_ms);
  const double bin_noise_dbm = cfg.noise.bin_noise_dbm();
  const double channel_noise_dbm = thermal_noise_dbm(cfg.channel_mhz * 1000.0, cfg.noise.noise_figure_db);

  MetricsSeries metrics;
  std::vector<CenbRuntime> nodes;
  PathLossModel propagation(cfg.propagation);
  for (const auto& spec : cfg.cenbs) {
    CenbRuntime n;
    n.state.id = spec.id;
    n.state.location = spec.location;
    n.state.tx_power_dbm = spec.power_dbm;
    n.state.dedicated_band = spec.dedicated_band;
    for (const auto& cr : query_vacant_channels(db, spec.location, spec.power_dbm, cfg.propagation, grid)) {
      n.view.regions.push_back(cr.region);
    }
    n.view.db_version = db.version();
    if (spec.initial_block) {
      for (int ch : spec.initial_block->channels()) {
        if (n.view.regions[static_cast<std::size_t>(ch)] == Region::Black) {
          throw StartupError(spec.id + ": initial block " + spec.initial_block->to_string() +
                             " includes Black channel " + std::to_string(ch));
        }
      }
      n.state.set_block(spec.initial_block);
    }
    for (const auto& tx : txs) {
      const double d = std::max(distance(spec.location, tx.location), 1e-3);
      const double rx_dbm = tx.eirp_dbm - propagation.loss_db(d, grid.channel(tx.channel_index).center_mhz());
      n.tx_spectra.push_back(synthesize_tv_spectrum(tx, grid, cfg.noise.rbw_khz, rx_dbm));
      n.tx_disrupts.push_back(rx_dbm >= channel_noise_dbm);
    }
    n.last_occupied.assign(static_cast<std::size_t>(grid.size()), false);
    n.occupied_since.assign(static_cast<std::size_t>(grid.size()), std::nullopt);
    nodes.push_back(std::move(n));
  }

  std::mt19937_64 traffic_rng(derive_seed(cfg.seed, kTrafficStream));
  std::binomial_distribution<int> floor_losses(cfg.packets_per_subframe, cfg.loss_floor);
  const std::int64_t frames = cfg.duration_ms / kFrameMs;
  auto log = [&](std::int64_t t, const std::string& id, EventKind k, std::string detail) {
    metrics.events.push_back({t, id, k, std::move(detail)});
  };

  auto sense_frame = [&](std::int64_t n) {
    const std::int64_t t_on = n * kFrameMs + 1;
    const std::int64_t t_report = n * kFrameMs + 2;
    std::vector<std::vector<SensingReport>> raw(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, kSensingStreamBase + i), static_cast<std::uint64_t>(n)));
      PowerSpectrum signal = blank_spectrum(grid, cfg.noise.rbw_khz);
      for (std::size_t k = 0; k < txs.size(); ++k) {
        if (txs[k].active_at(t_on)) signal = add_spectra(signal, nodes[i].tx_spectra[k]);
      }
      for (const auto& ch : grid.channels()) {
        const auto obs = observe_channel(signal, ch, bin_noise_dbm, snapshots, rng);
        raw[i].push_back(detect_tv(detector, obs, ch.index, grid, nodes[i].state.id, t_report));
      }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto& node = nodes[i];
      node.fused.clear();
      for (std::size_t c = 0; c < raw[i].size(); ++c) {
        std::vector<SensingReport> neighbors;
        if (cfg.fusion) {
          for (std::size_t j = 0; j < nodes.size(); ++j) {
            if (j != i && distance(node.state.location, nodes[j].state.location) <= cfg.coop_distance_m) {
              neighbors.push_back(raw[j][c]);
            }
          }
        }
        auto fused = cfg.fusion ? fuse_cooperative(raw[i][c], neighbors, *cfg.fusion) : raw[i][c];
        if (fused.occupied() != node.last_occupied[c]) {
          node.last_occupied[c] = fused.occupied();
          node.occupied_since[c] = fused.occupied() ? std::optional(t_report) : std::nullopt;
          log(t_report, node.state.id, EventKind::Sense,
              "ch=" + std::to_string(c) + " " + to_string(fused.decision));
        }
        node.fused.push_back(std::move(fused));
      }
    }
  };

  auto run_asm = [&](std::int64_t t, bool apply) {
    std::vector<AsmRequest> reqs;
    for (const auto& node : nodes) {
      reqs.push_back({node.state.id, node.state.location, cfg.asm_demand_channels,
                      usable_for_asm(node.view.regions, node.fused)});
    }
    const auto asg = asm_allocate(reqs, cfg.reuse_distance_m, t / std::max<std::int64_t>(cfg.asm_epoch_ms, 1));
    std::string detail = "epoch=" + std::to_string(asg.epoch);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& b = asg.blocks.at(nodes[i].state.id);
      detail += " " + nodes[i].state.id + "=" + b.to_string();
      if (apply && !cfg.cenbs[i].initial_block) nodes[i].state.set_block(b);
    }
    log(t, "asm", EventKind::AsmEpoch, detail);
  };

  auto refresh_reserved = [&]() {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto& view = nodes[i].view;
      view.reserved.assign(view.regions.size(), false);
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        if (j == i || distance(nodes[i].state.location, nodes[j].state.location) >= cfg.reuse_distance_m) continue;
        const auto& other = nodes[j].state;
        if (other.active_block) {
          for (int ch : other.active_block->channels()) view.reserved[static_cast<std::size_t>(ch)] = true;
        }
        if (other.pending_handover) {
          for (int ch : other.pending_handover->target_block.channels()) view.reserved[static_cast<std::size_t>(ch)] = true;
        }
      }
    }
  };

  for (std::int64_t n = 0; n < frames; ++n) {
    const std::int64_t boundary = n * kFrameMs;
    if (n > 0) {
      for (auto& node : nodes) {
        refresh_reserved();
        auto& st = node.state;
        if (auto msg = spectrum_decision(st, node.fused, node.view, n, cfg.policy)) {
          st.pending_handover = msg;
          if (st.active_block) {
            for (int ch : st.active_block->channels()) {
              const auto& since = node.occupied_since[static_cast<std::size_t>(ch)];
              if (since && (!node.detect_ms || *since < *node.detect_ms)) node.detect_ms = since;
            }
          }
          log(boundary, st.id, EventKind::Decide,
              "from=" + block_text(st.active_block) + " to=" + block_text(msg->target_block));
          log(msg->broadcast_ms, st.id, EventKind::Broadcast,
              "activation_frame=" + std::to_string(msg->activation_frame));
        }
        if (st.pending_handover && st.pending_handover->activation_frame == n) {
          const auto msg = *st.pending_handover;
          auto ev = execute_handover(st, msg, boundary, node.view, cfg.policy);
          if (ev.aborted) {
            log(boundary, st.id, EventKind::Decide, "abort target=" + msg.target_block.to_string());
            if (st.pending_handover) {
              log(st.pending_handover->broadcast_ms, st.id, EventKind::Broadcast,
                  "activation_frame=" + std::to_string(st.pending_handover->activation_frame));
            }
          } else {
            log(boundary, st.id, EventKind::RetuneStart, "to=" + block_text(st.active_block));
            log(ev.restore_ms, st.id, EventKind::RetuneEnd, "bandwidth_mhz=" +
                (st.bandwidth_mhz ? std::to_string(*st.bandwidth_mhz) : std::string("dedicated")));
          }
          metrics.handovers.push_back({ev, node.onset_ms, node.detect_ms});
          if (!ev.aborted) {
            node.onset_ms.reset();
            node.detect_ms.reset();
          }
        }
      }
    }

    sense_frame(n);
    if (n == 0) {
      run_asm(0, true);
    } else if (cfg.asm_epoch_ms > 0 && boundary % cfg.asm_epoch_ms == 0) {
      run_asm(boundary, false);
    }
    for (const auto& node : nodes) {
      metrics.bandwidth.push_back({n, node.state.id, node.state.bandwidth_mhz, node.state.active_block});
    }

    PlrSample sample;
    sample.sample_index = n;
    sample.t_ms = boundary;
    for (int sf = 0; sf < 10; ++sf) {
      if (!frame.carries_downlink_data(sf)) continue;
      const std::int64_t t = boundary + sf;
      for (auto& node : nodes) {
        const auto& st = node.state;
        bool tv_hit = false;
        if (st.active_block) {
          for (std::size_t k = 0; k < txs.size(); ++k) {
            if (node.tx_disrupts[k] && st.active_block->contains(txs[k].channel_index) && txs[k].active_at(t)) {
              tv_hit = true;
            }
          }
        }
        int lost = 0;
        if (st.retuning(t) || tv_hit) {
          lost = cfg.packets_per_subframe;
          if (tv_hit && !node.onset_ms) node.onset_ms = t;
        } else if (cfg.loss_floor > 0) {
          lost = floor_losses(traffic_rng);
        }
        sample.offered += cfg.packets_per_subframe;
        sample.lost += lost;
        sample.delivered += cfg.packets_per_subframe - lost;
      }
    }
    metrics.plr.push_back(sample);
  }

  if (cfg.study.enabled) {
    const auto& ic = cfg.study.interference;
    const auto topo = build_topology(ic.isd_m, ic.tv_radius_m, ic.tv_offset);
    const auto acirs = cfg.study.acir_values();
    metrics.acir_curve = acir_sweep(topo, ic, acirs, cfg.study.snapshots, derive_seed(cfg.seed, kStudyStream),
                                    cfg.study.workers);
    const auto map = cfg.study.guard_band_map ? load_guard_band_map(cfg.study.guard_band_map->string())
                                              : default_guard_band_map();
    metrics.guard_band = determine_guard_band(*metrics.acir_curve, map, cfg.study.loss_budget);
  }
  std::stable_sort(metrics.events.begin(), metrics.events.end(),
                   [](const EventRecord& a, const EventRecord& b) { return a.t_ms < b.t_ms; });
  return metrics;
}

// ---- Reports ---------------------------------------------------------------

std::string handover_summary(const MetricsSeries& metrics) {
  std::ostringstream out;
  std::int64_t completed = 0, aborted = 0, sum = 0, worst = 0;
  for (const auto& h : metrics.handovers) {
    if (h.event.aborted) {
      ++aborted;
      continue;
    }
    ++completed;
    sum += h.latency_ms();
    worst = std::max(worst, h.latency_ms());
  }
  out << "handovers=" << completed << '\n';
  out << "aborted=" << aborted << '\n';
  out << "mean_latency_ms=" << (completed ? format_double(static_cast<double>(sum) / completed) : "nan") << '\n';
  out << "max_latency_ms=" << (completed ? std::to_string(worst) : "nan") << '\n';
  for (const auto& h : metrics.handovers) {
    out << "handover cenb=" << h.event.cenb_id
        << " onset_ms=" << (h.onset_ms ? std::to_string(*h.onset_ms) : "none")
        << " detect_ms=" << (h.detect_ms ? std::to_string(*h.detect_ms) : "none")
        << " decision_ms=" << h.event.decision_ms << " start_ms=" << h.event.start_ms
        << " restore_ms=" << h.event.restore_ms << " from=" << block_text(h.event.from)
        << " to=" << block_text(h.event.to)
        << (h.event.aborted ? " aborted" : "") << " latency_ms=" << h.latency_ms() << '\n';
  }
  if (metrics.guard_band) out << metrics.guard_band->summary() << '\n';
  return out.str();
}

void emit_report(const MetricsSeries& metrics, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const auto plr_path = (dir / "plr.csv").string();
  std::ofstream plr(plr_path);
  if (!plr) throw IoError("cannot open '" + plr_path + "' for writing");
  plr << "sample_index,t_ms,plr\n";
  for (const auto& s : metrics.plr) plr << s.sample_index << ',' << s.t_ms << ',' << format_double(s.plr()) << '\n';
  if (!plr) throw IoError("write failed for '" + plr_path + "'");

  write_event_log((dir / "events.csv").string(), metrics.events);

  const auto summary_path = (dir / "handover_summary.txt").string();
  std::ofstream summary(summary_path);
  if (!summary) throw IoError("cannot open '" + summary_path + "' for writing");
  summary << handover_summary(metrics);
  if (!summary) throw IoError("write failed for '" + summary_path + "'");

  if (metrics.acir_curve) write_acir_csv((dir / "acir_curve.csv").string(), *metrics.acir_curve);
}

}  // namespace tvws
