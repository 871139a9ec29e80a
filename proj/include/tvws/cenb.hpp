#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tvws/geodb.hpp"
#include "tvws/sensing.hpp"

namespace tvws {

// ---- TDD frame -------------------------------------------------------------

enum class SubframeKind { Downlink, Special, Uplink };

struct SpecialSplit {
  double dwpts_ms = 0.2;
  double gp_ms = 0.7;
  double uppts_ms = 0.1;
};

/// Half-open sensing interval inside a 10 ms frame, in ms from the frame start.
struct SensingWindow {
  double start_ms = 0.0;
  double end_ms = 0.0;

  double length_ms() const { return end_ms - start_ms; }
};

struct FrameConfig {
  int config_id = 2;
  SpecialSplit split;
  /// Also sense in uplink subframe 2, kept free of uplink traffic.
  bool wide_scan = true;
  bool require_uppts = true;
};

struct FrameSchedule {
  std::array<SubframeKind, 10> pattern{};
  SpecialSplit split;
  std::vector<int> sensing_subframes;

  std::vector<SensingWindow> sensing_windows() const;
  double sensing_budget_ms() const;
  bool carries_downlink_data(int subframe) const { return pattern.at(subframe) == SubframeKind::Downlink; }
  bool is_special(int subframe) const { return pattern.at(subframe) == SubframeKind::Special; }
  std::string pattern_string() const;
};

/// Standard TD-LTE uplink-downlink configurations 0-6. Throws ConfigError for
/// an unknown id, a split not summing to 1 ms, or a sensing budget above 2 ms.
FrameSchedule build_frame_schedule(const FrameConfig& cfg);

/// Same checks for an explicit pattern such as "DSUDDDSUDD".
FrameSchedule build_frame_schedule(std::string_view pattern, const SpecialSplit& split,
                                   bool wide_scan = true, bool require_uppts = true);

// ---- Channel blocks and messages -------------------------------------------

/// Contiguous run of grid channels [first, first + count).
struct ChannelBlock {
  int first = 0;
  int count = 0;

  int last() const { return first + count - 1; }
  bool empty() const { return count <= 0; }
  bool contains(int channel) const { return channel >= first && channel < first + count; }
  std::vector<int> channels() const;
  std::string to_string() const;
  friend bool operator==(const ChannelBlock&, const ChannelBlock&) = default;
};

/// {>=3 -> 20, 2 -> 15, 1 -> 5, 0 -> none (dedicated-band fallback)}.
std::optional<int> select_bandwidth(int vacant_run_length);

/// Longest run of true entries, lowest index on ties. Empty block if none.
ChannelBlock longest_run(const std::vector<bool>& usable);

enum class CogMessageKind { CogCchRrc, PCogChDecision };

struct CogMessage {
  CogMessageKind kind = CogMessageKind::PCogChDecision;
  std::string origin;
  std::int64_t frame_no = 0;
  /// Empty target means fall back to the dedicated band.
  ChannelBlock target_block;
  std::optional<int> bandwidth_mhz;
  std::int64_t activation_frame = 0;
  std::int64_t broadcast_ms = 0;  ///< DwPTS instant the decision goes out on PCogCH

  friend bool operator==(const CogMessage&, const CogMessage&) = default;
};

struct CenbState {
  std::string id;
  Point location;
  double tx_power_dbm = 20.0;
  FrequencyBand dedicated_band{2570.0, 2590.0};
  /// Empty when only the dedicated band is in use.
  std::optional<ChannelBlock> active_block;
  std::optional<int> bandwidth_mhz;
  std::vector<Region> region_cache;
  std::uint64_t region_version = 0;
  std::optional<CogMessage> pending_handover;
  std::deque<SensingReport> last_reports;
  std::size_t report_capacity = 256;
  /// Consecutive frames each channel has been reported Occupied.
  std::vector<int> occupied_streak;
  /// Data resumes at this instant after a retune.
  std::int64_t retune_until_ms = 0;

  bool retuning(std::int64_t t_ms) const { return t_ms < retune_until_ms; }
  /// Most recent report for the channel, if any.
  const SensingReport* latest_report(int channel) const;
  void set_block(std::optional<ChannelBlock> block);
};

/// What the CeNB currently knows about the band at its location.
struct SpectrumView {
  std::vector<Region> regions;
  std::uint64_t db_version = 0;
  /// Channels unavailable for other reasons (neighbor blocks, ASM reservations).
  std::vector<bool> reserved;
};

struct DecisionPolicy {
  /// Frames in a row a channel must be reported Occupied before it counts.
  int confirm_frames = 1;
  int max_block_channels = 3;
  /// Vacant channels kept free on each side of a channel found occupied.
  int guard_channels = 0;
  std::int64_t retune_ms = 10;
};

/// Records this frame's reports in the state, then decides. Emits a PCogCH decision
/// when an active channel is confirmed Occupied or Black, or when the CeNB sits on
/// its dedicated band and a vacant run exists. Reports must predate the frame boundary.
/// Throws StaleSensingError if a Grey active channel has no report this frame.
std::optional<CogMessage> spectrum_decision(CenbState& state, std::span<const SensingReport> reports,
                                            const SpectrumView& view, std::int64_t frame_no,
                                            const DecisionPolicy& policy = {});

/// Best block given the state's latest reports, ignoring the current block.
ChannelBlock plan_block(const CenbState& state, const SpectrumView& view, const DecisionPolicy& policy);

struct HandoverEvent {
  std::string cenb_id;
  std::int64_t decision_ms = 0;
  std::int64_t start_ms = 0;
  std::int64_t restore_ms = 0;
  std::optional<ChannelBlock> from;
  ChannelBlock to;
  bool aborted = false;

  std::int64_t latency_ms() const { return restore_ms - decision_ms; }
};

/// Applies a pending decision at its activation boundary. If the target is no
/// longer vacant the handover aborts and a fresh decision is left pending.
/// Throws AddressingError for a message meant for another CeNB.
HandoverEvent execute_handover(CenbState& state, const CogMessage& msg, std::int64_t now_ms,
                               const SpectrumView& view, const DecisionPolicy& policy = {});

enum class FusionRule { Or, Majority };

/// Combines own and neighbor reports for one channel. Throws AggregationError for
/// mixed channels or reports more than one frame apart.
SensingReport fuse_cooperative(const SensingReport& own, std::span<const SensingReport> neighbors,
                               FusionRule rule = FusionRule::Or);

// ---- ASM -------------------------------------------------------------------

struct AsmRequest {
  std::string cenb_id;
  Point location;
  int demand_channels = 3;
  std::vector<bool> vacant;  ///< per grid channel
};

struct AsmAssignment {
  std::int64_t epoch = 0;
  std::map<std::string, ChannelBlock> blocks;
};

/// Greedy allocation in descending demand order (ties keep input order). CeNBs closer
/// than the reuse distance never share a channel.
AsmAssignment asm_allocate(std::span<const AsmRequest> requests, double reuse_distance_m,
                           std::int64_t epoch = 0);

// ---- Event log -------------------------------------------------------------

enum class EventKind { Sense, Decide, Broadcast, RetuneStart, RetuneEnd, AsmEpoch };

std::string to_string(EventKind kind);

struct EventRecord {
  std::int64_t t_ms = 0;
  std::string cenb_id;
  EventKind kind = EventKind::Sense;
  std::string detail;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// CSV `t_ms,cenb_id,event,detail`. Details never contain commas.
void write_event_log(const std::string& path, std::span<const EventRecord> events);

}  // namespace tvws
