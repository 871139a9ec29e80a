#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tvws/cenb.hpp"
#include "tvws/interference.hpp"

namespace tvws {

/// Flat `section.key = value` view of an INI file. `[section]` headers prefix
/// the keys below them; `#` and `;` start comments.
class IniFile {
 public:
  static IniFile parse(const std::string& path);

  const std::filesystem::path& path() const { return path_; }
  bool has(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  /// Throws ConfigError naming the key when absent.
  const std::string& require(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }
  /// Line of a key, for error messages.
  std::size_t line_of(const std::string& key) const;

 private:
  std::filesystem::path path_;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
};

struct CenbSpec {
  std::string id;
  Point location;
  double power_dbm = 20.0;
  FrequencyBand dedicated_band{2570.0, 2590.0};
  /// Grid channels to start on. Empty means ASM assigns one at t = 0.
  std::optional<ChannelBlock> initial_block;
};

struct StudyConfig {
  bool enabled = false;
  InterferenceConfig interference;
  double acir_min_db = 0.0;
  double acir_max_db = 100.0;
  double acir_step_db = 5.0;
  std::uint64_t snapshots = 1000;
  double loss_budget = 0.05;
  unsigned workers = 1;
  std::optional<std::filesystem::path> guard_band_map;

  std::vector<double> acir_values() const;
};

struct ScenarioConfig {
  std::filesystem::path source;
  std::int64_t duration_ms = 2000;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  FrequencyBand grid_band{470.0, 806.0};
  double channel_mhz = 8.0;
  std::vector<FrequencyBand> grid_excluded{{566.0, 606.0}};

  std::optional<std::filesystem::path> transmitters_file;
  std::optional<std::filesystem::path> geodb_file;
  double default_required_rx_dbm = -84.0;

  std::vector<CenbSpec> cenbs;
  PropagationConfig propagation;
  NoiseModel noise;
  DetectorConfig detector{.target_pfa = 0.001, .threshold_dbm = std::nullopt};
  std::uint64_t calibration_trials = 100000;
  std::optional<FusionRule> fusion = FusionRule::Or;
  double coop_distance_m = 500.0;

  FrameConfig frame;
  DecisionPolicy policy{.confirm_frames = 2, .max_block_channels = 3, .guard_channels = 0, .retune_ms = 10};

  double reuse_distance_m = 500.0;
  int asm_demand_channels = 3;
  std::int64_t asm_epoch_ms = 0;

  int packets_per_subframe = 10;
  double loss_floor = 0.0;

  StudyConfig study;

  ChannelGrid grid() const;
  void validate() const;
};

/// Every file reference is resolved relative to the scenario file. Throws ConfigError
/// naming the key for unknown, missing or malformed entries.
ScenarioConfig load_scenario(const std::string& path);

/// Same format; only `study.*` and `interference.*` keys are accepted.
StudyConfig load_study(const std::string& path, std::uint64_t* seed = nullptr);

struct PlrSample {
  std::int64_t sample_index = 0;
  std::int64_t t_ms = 0;
  std::int64_t offered = 0;
  std::int64_t lost = 0;
  std::int64_t delivered = 0;

  double plr() const { return offered ? static_cast<double>(lost) / static_cast<double>(offered) : 0.0; }
};

struct HandoverRecord {
  HandoverEvent event;
  /// First lost subframe caused by co-channel TV on the old block, if any.
  std::optional<std::int64_t> onset_ms;
  /// Timestamp of the first Occupied report that led to the decision.
  std::optional<std::int64_t> detect_ms;

  /// From service interruption (or decision, without one) to restored data.
  std::int64_t latency_ms() const { return event.restore_ms - onset_ms.value_or(event.decision_ms); }
};

struct FrameBandwidth {
  std::int64_t frame_no = 0;
  std::string cenb_id;
  std::optional<int> bandwidth_mhz;
  std::optional<ChannelBlock> block;
};

struct MetricsSeries {
  std::vector<PlrSample> plr;
  std::vector<HandoverRecord> handovers;
  std::vector<EventRecord> events;
  std::vector<FrameBandwidth> bandwidth;
  std::optional<AcirCurve> acir_curve;
  std::optional<GuardBandResult> guard_band;
};

/// Deterministic 1 ms event loop. Throws StartupError if an initial block touches a
/// Black channel.
MetricsSeries run_simulation(const ScenarioConfig& cfg);

/// Writes plr.csv, events.csv, handover_summary.txt and, with a study, acir_curve.csv.
void emit_report(const MetricsSeries& metrics, const std::filesystem::path& dir);

std::string handover_summary(const MetricsSeries& metrics);

}  // namespace tvws
