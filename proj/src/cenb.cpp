#include "tvws/cenb.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace tvws {

namespace {

constexpr std::array<std::string_view, 7> kTddConfigs = {
    "DSUUUDSUUU", "DSUUDDSUUD", "DSUDDDSUDD", "DSUUUDDDDD",
    "DSUUDDDDDD", "DSUDDDDDDD", "DSUUUDSUUD",
};

constexpr std::int64_t kFrameMs = 10;

}  // namespace

std::vector<SensingWindow> FrameSchedule::sensing_windows() const {
  std::vector<SensingWindow> out;
  for (int sf : sensing_subframes) {
    const double start = sf;
    if (pattern.at(sf) == SubframeKind::Special) {
      out.push_back({start + split.dwpts_ms, start + split.dwpts_ms + split.gp_ms});
    } else {
      out.push_back({start, start + 1.0});
    }
  }
  return out;
}

double FrameSchedule::sensing_budget_ms() const {
  double total = 0.0;
  for (const auto& w : sensing_windows()) total += w.length_ms();
  return total;
}

std::string FrameSchedule::pattern_string() const {
  std::string out;
  for (auto k : pattern) out += k == SubframeKind::Downlink ? 'D' : k == SubframeKind::Special ? 'S' : 'U';
  return out;
}

FrameSchedule build_frame_schedule(std::string_view pattern, const SpecialSplit& split,
                                   bool wide_scan, bool require_uppts) {
  if (pattern.size() != 10) throw ConfigError("frame pattern needs 10 subframes");
  FrameSchedule fs;
  for (std::size_t i = 0; i < 10; ++i) {
    switch (pattern[i]) {
      case 'D': fs.pattern[i] = SubframeKind::Downlink; break;
      case 'S': fs.pattern[i] = SubframeKind::Special; break;
      case 'U': fs.pattern[i] = SubframeKind::Uplink; break;
      default: throw ConfigError("frame pattern symbol '" + std::string(1, pattern[i]) + "' is not D, S or U");
    }
  }
  if (fs.pattern[1] != SubframeKind::Special) throw ConfigError("subframe 1 must be a special subframe");
  if (split.dwpts_ms < 0 || split.gp_ms <= 0 || split.uppts_ms < 0 ||
      std::abs(split.dwpts_ms + split.gp_ms + split.uppts_ms - 1.0) > 1e-9) {
    throw ConfigError("special subframe split must be non-negative with a positive GP and sum to 1 ms");
  }
  if (require_uppts && split.uppts_ms <= 0) throw ConfigError("UpPTS is required but the split gives it 0 ms");
  fs.split = split;
  fs.sensing_subframes = {1};
  if (wide_scan) {
    if (fs.pattern[2] != SubframeKind::Uplink) throw ConfigError("wide scan needs subframe 2 to be uplink");
    fs.sensing_subframes.push_back(2);
  }
  if (fs.sensing_budget_ms() > 2.0 + 1e-12) throw ConfigError("sensing time exceeds 2 ms per frame");
  return fs;
}

FrameSchedule build_frame_schedule(const FrameConfig& cfg) {
  if (cfg.config_id < 0 || cfg.config_id >= static_cast<int>(kTddConfigs.size())) {
    throw ConfigError("unknown TDD configuration " + std::to_string(cfg.config_id));
  }
  return build_frame_schedule(kTddConfigs[static_cast<std::size_t>(cfg.config_id)], cfg.split,
                              cfg.wide_scan, cfg.require_uppts);
}

std::vector<int> ChannelBlock::channels() const {
  std::vector<int> out(static_cast<std::size_t>(std::max(count, 0)));
  std::iota(out.begin(), out.end(), first);
  return out;
}

std::string ChannelBlock::to_string() const {
  if (empty()) return "none";
  if (count == 1) return std::to_string(first);
  return std::to_string(first) + "-" + std::to_string(last());
}

std::optional<int> select_bandwidth(int vacant_run_length) {
  if (vacant_run_length >= 3) return 20;
  if (vacant_run_length == 2) return 15;
  if (vacant_run_length == 1) return 5;
  return std::nullopt;
}

ChannelBlock longest_run(const std::vector<bool>& usable) {
  ChannelBlock best;
  int start = -1;
  for (int i = 0; i <= static_cast<int>(usable.size()); ++i) {
    const bool on = i < static_cast<int>(usable.size()) && usable[static_cast<std::size_t>(i)];
    if (on && start < 0) start = i;
    if (!on && start >= 0) {
      if (i - start > best.count) best = {start, i - start};
      start = -1;
    }
  }
  return best;
}

const SensingReport* CenbState::latest_report(int channel) const {
  for (auto it = last_reports.rbegin(); it != last_reports.rend(); ++it) {
    if (it->channel_index == channel) return &*it;
  }
  return nullptr;
}

void CenbState::set_block(std::optional<ChannelBlock> block) {
  if (block && block->empty()) block.reset();
  active_block = block;
  bandwidth_mhz = block ? select_bandwidth(block->count) : std::nullopt;
}

namespace {

bool sensed_occupied(const CenbState& state, int channel) {
  const auto* r = state.latest_report(channel);
  return r && r->occupied();
}

Region region_at(const SpectrumView& view, int channel) {
  return view.regions.at(static_cast<std::size_t>(channel));
}

bool is_reserved(const SpectrumView& view, int channel) {
  return !view.reserved.empty() && view.reserved.at(static_cast<std::size_t>(channel));
}

CogMessage make_decision(const CenbState& state, ChannelBlock target, std::int64_t frame_no) {
  CogMessage msg;
  msg.kind = CogMessageKind::PCogChDecision;
  msg.origin = state.id;
  msg.frame_no = frame_no;
  msg.target_block = target;
  msg.bandwidth_mhz = select_bandwidth(target.count);
  msg.activation_frame = frame_no + 1;
  // DwPTS of special subframe 1 in the decision frame.
  msg.broadcast_ms = frame_no * kFrameMs + 1;
  return msg;
}

}  // namespace

ChannelBlock plan_block(const CenbState& state, const SpectrumView& view, const DecisionPolicy& policy) {
  const int n = static_cast<int>(view.regions.size());
  std::vector<bool> blocked(static_cast<std::size_t>(n), false);
  for (int ch = 0; ch < n; ++ch) {
    if (region_at(view, ch) == Region::Black || sensed_occupied(state, ch)) {
      for (int g = std::max(0, ch - policy.guard_channels); g <= std::min(n - 1, ch + policy.guard_channels); ++g) {
        blocked[static_cast<std::size_t>(g)] = true;
      }
    }
  }
  std::vector<bool> usable(static_cast<std::size_t>(n), false);
  for (int ch = 0; ch < n; ++ch) {
    if (blocked[static_cast<std::size_t>(ch)] || is_reserved(view, ch)) continue;
    const Region r = region_at(view, ch);
    // Grey channels need a fresh Vacant verdict; White ones are free to use.
    usable[static_cast<std::size_t>(ch)] = r == Region::White || (r == Region::Grey && state.latest_report(ch));
  }
  ChannelBlock run = longest_run(usable);
  run.count = std::min(run.count, policy.max_block_channels);
  return run;
}

std::optional<CogMessage> spectrum_decision(CenbState& state, std::span<const SensingReport> reports,
                                            const SpectrumView& view, std::int64_t frame_no,
                                            const DecisionPolicy& policy) {
  const std::int64_t boundary = frame_no * kFrameMs;
  const std::size_t n = view.regions.size();
  state.occupied_streak.resize(n, 0);
  std::vector<bool> reported(n, false);
  for (const auto& r : reports) {
    if (r.t_ms >= boundary) {
      throw ValidationError("report at " + std::to_string(r.t_ms) + " ms is not before frame boundary " +
                            std::to_string(boundary));
    }
    const auto ch = static_cast<std::size_t>(r.channel_index);
    if (ch >= n) throw RangeError("report for channel " + std::to_string(r.channel_index) + " outside the view");
    reported[ch] = true;
    state.occupied_streak[ch] = r.occupied() ? state.occupied_streak[ch] + 1 : 0;
    state.last_reports.push_back(r);
    while (state.last_reports.size() > state.report_capacity) state.last_reports.pop_front();
  }
  state.region_cache = view.regions;
  state.region_version = view.db_version;
  if (state.pending_handover) return std::nullopt;

  bool trigger = false;
  if (state.active_block) {
    for (int ch : state.active_block->channels()) {
      const Region r = region_at(view, ch);
      if (r == Region::Black) {
        trigger = true;
      } else if (r == Region::Grey) {
        if (!reported[static_cast<std::size_t>(ch)]) {
          throw StaleSensingError(state.id + ": no sensing report for Grey channel " + std::to_string(ch) +
                                  " before frame " + std::to_string(frame_no));
        }
        if (state.occupied_streak[static_cast<std::size_t>(ch)] >= policy.confirm_frames) trigger = true;
      }
    }
    if (!trigger) return std::nullopt;
    return make_decision(state, plan_block(state, view, policy), frame_no);
  }
  ChannelBlock target = plan_block(state, view, policy);
  if (target.empty()) return std::nullopt;
  return make_decision(state, target, frame_no);
}

HandoverEvent execute_handover(CenbState& state, const CogMessage& msg, std::int64_t now_ms,
                               const SpectrumView& view, const DecisionPolicy& policy) {
  if (msg.origin != state.id) {
    throw AddressingError("decision from '" + msg.origin + "' delivered to '" + state.id + "'");
  }
  if (msg.kind != CogMessageKind::PCogChDecision) throw ValidationError("only PCogCH decisions trigger handover");
  if (now_ms != msg.activation_frame * kFrameMs) {
    throw ValidationError("handover at " + std::to_string(now_ms) + " ms is not the activation boundary");
  }
  HandoverEvent ev;
  ev.cenb_id = state.id;
  ev.decision_ms = msg.frame_no * kFrameMs;
  ev.start_ms = now_ms;
  ev.from = state.active_block;
  ev.to = msg.target_block;

  bool still_vacant = true;
  for (int ch : msg.target_block.channels()) {
    if (region_at(view, ch) == Region::Black || is_reserved(view, ch) || sensed_occupied(state, ch)) {
      still_vacant = false;
    }
  }
  if (!still_vacant) {
    ev.aborted = true;
    ev.restore_ms = now_ms;
    state.pending_handover = make_decision(state, plan_block(state, view, policy), now_ms / kFrameMs);
    return ev;
  }
  state.set_block(msg.target_block);
  state.pending_handover.reset();
  state.retune_until_ms = now_ms + policy.retune_ms;
  std::fill(state.occupied_streak.begin(), state.occupied_streak.end(), 0);
  ev.restore_ms = state.retune_until_ms;
  return ev;
}

SensingReport fuse_cooperative(const SensingReport& own, std::span<const SensingReport> neighbors,
                               FusionRule rule) {
  int occupied = own.occupied() ? 1 : 0;
  for (const auto& r : neighbors) {
    if (r.channel_index != own.channel_index) {
      throw AggregationError("cannot fuse reports for channels " + std::to_string(own.channel_index) +
                             " and " + std::to_string(r.channel_index));
    }
    if (std::abs(r.t_ms - own.t_ms) >= kFrameMs) {
      throw AggregationError("reports from " + own.cenb_id + " and " + r.cenb_id + " are more than a frame apart");
    }
    occupied += r.occupied() ? 1 : 0;
  }
  const int total = 1 + static_cast<int>(neighbors.size());
  SensingReport fused = own;
  const bool busy = rule == FusionRule::Or ? occupied > 0 : 2 * occupied > total;
  fused.decision = busy ? SensingDecision::Occupied : SensingDecision::Vacant;
  return fused;
}

AsmAssignment asm_allocate(std::span<const AsmRequest> requests, double reuse_distance_m,
                           std::int64_t epoch) {
  AsmAssignment out;
  out.epoch = epoch;
  if (requests.empty()) return out;
  const std::size_t n = requests.front().vacant.size();
  for (const auto& r : requests) {
    if (r.vacant.size() != n) throw ValidationError("ASM availability vectors differ in length");
  }
  std::vector<std::size_t> order(requests.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return requests[a].demand_channels > requests[b].demand_channels;
  });
  std::vector<std::optional<ChannelBlock>> given(requests.size());
  for (std::size_t idx : order) {
    const auto& req = requests[idx];
    std::vector<bool> usable = req.vacant;
    for (std::size_t other = 0; other < requests.size(); ++other) {
      if (!given[other] || distance(req.location, requests[other].location) >= reuse_distance_m) continue;
      for (int ch : given[other]->channels()) usable[static_cast<std::size_t>(ch)] = false;
    }
    ChannelBlock block = longest_run(usable);
    block.count = std::min(block.count, std::max(req.demand_channels, 0));
    if (block.count == 0) block = {};
    given[idx] = block;
    out.blocks[req.cenb_id] = block;
  }
  return out;
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Sense: return "SENSE";
    case EventKind::Decide: return "DECIDE";
    case EventKind::Broadcast: return "BROADCAST";
    case EventKind::RetuneStart: return "RETUNE_START";
    case EventKind::RetuneEnd: return "RETUNE_END";
    case EventKind::AsmEpoch: return "ASM_EPOCH";
  }
  return "?";
}

void write_event_log(const std::string& path, std::span<const EventRecord> events) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "t_ms,cenb_id,event,detail\n";
  for (const auto& e : events) {
    if (e.detail.find(',') != std::string::npos || e.cenb_id.find(',') != std::string::npos) {
      throw ValidationError("event fields may not contain commas");
    }
    out << e.t_ms << ',' << e.cenb_id << ',' << to_string(e.kind) << ',' << e.detail << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tvws
