#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tvws/common.hpp"

namespace tvws {

/// Link budget and drop parameters of the TV / TD-LTE coexistence study.
struct InterferenceConfig {
  double isd_m = 500.0;
  double tv_radius_m = 6000.0;
  Point tv_offset{5000.0, 0.0};
  double freq_mhz = 700.0;

  double tv_eirp_dbm = 90.0;
  double cenb_power_dbm = 20.0;
  double ue_power_dbm = 0.0;

  double ground_exponent = 3.5;
  /// TV mast to CeNB mast: both antennas elevated, closer to free space.
  double elevated_exponent = 2.4;
  double min_coupling_loss_db = 70.0;

  double sector_beamwidth_deg = 70.0;
  double front_to_back_db = 20.0;

  double lte_bandwidth_mhz = 18.0;
  double ue_noise_figure_db = 9.0;
  double cenb_noise_figure_db = 5.0;
  double tv_bandwidth_mhz = 7.6;
  double tv_noise_figure_db = 7.0;
  double tv_protection_db = 23.0;

  int tv_receivers = 10;
  int ues_per_sector = 10;

  void validate() const;
};

struct Sector {
  int site = 0;
  Point position;
  double boresight_deg = 0.0;
};

struct HexTopology {
  double isd_m = 0.0;
  std::vector<Point> sites;
  std::vector<Sector> sectors;
  Point tv_transmitter;
  double tv_radius_m = 0.0;
};

/// Center site, six at isd, twelve in the second ring (six at 2*isd, six at sqrt(3)*isd),
/// three sectors per site with boresights 0/120/240 degrees.
HexTopology build_topology(double isd_m, double tv_radius_m, Point tv_offset);

/// Sector index (site*3 + k) serving a point of the given site's cell, by angle.
int sector_of(const HexTopology& topo, int site, Point p);

/// One uniform drop. `sector_ues[q]` keeps the drop order; uplink slot k schedules
/// the k-th UE of every sector.
struct Drop {
  std::vector<std::vector<Point>> sector_ues;
  std::vector<Point> tv_receivers;
};

Drop drop_users(const HexTopology& topo, const InterferenceConfig& cfg, std::uint64_t seed);

/// Linear link powers of one drop; evaluating an ACIR value is then cheap.
struct SnapshotLinks {
  // Downlink, per UE.
  std::vector<double> dl_signal_mw, dl_interference_mw, dl_tv_mw;
  // Uplink, per (slot, sector).
  std::vector<double> ul_signal_mw, ul_interference_mw, ul_tv_mw;
  // TV receivers.
  std::vector<double> tv_signal_mw, tv_from_dl_mw;
  std::vector<std::vector<double>> tv_from_ul_mw;  ///< [slot][receiver]
  double ue_noise_mw = 0.0, cenb_noise_mw = 0.0, tv_noise_mw = 0.0, tv_protection = 0.0;
};

SnapshotLinks compute_links(const HexTopology& topo, const InterferenceConfig& cfg, const Drop& drop);

struct SnapshotOutcome {
  int tv_receivers = 0;
  /// Receivers meeting the protection ratio with no LTE present.
  int tv_eligible = 0;
  int tv_outage_dl = 0;
  /// Mean over uplink slots.
  double tv_outage_ul = 0.0;
  /// Mean Shannon spectral efficiency per user (bit/s/Hz).
  double dl_capacity = 0.0;
  double ul_capacity = 0.0;
};

/// acir_db = +inf means perfect isolation.
SnapshotOutcome evaluate_snapshot(const SnapshotLinks& links, double acir_db);

SnapshotOutcome simulate_snapshot(const HexTopology& topo, const InterferenceConfig& cfg,
                                  double acir_db, std::uint64_t drop_seed);

struct AcirPoint {
  double acir_db = 0.0;
  /// Share of eligible TV receivers pushed into outage by LTE downlink / uplink.
  double tv_outage_dl = 0.0;
  double tv_outage_ul = 0.0;
  double dl_cap_loss = 0.0;
  double ul_cap_loss = 0.0;
};

struct AcirCurve {
  std::vector<AcirPoint> points;  ///< ascending ACIR
  std::uint64_t snapshots = 0;
  std::uint64_t seed = 0;
  /// TV receivers already below the protection ratio without LTE.
  double tv_baseline_outage = 0.0;
};

/// Paired drops: every ACIR value is evaluated on the same snapshots. Requires >= 100 snapshots.
AcirCurve acir_sweep(const HexTopology& topo, const InterferenceConfig& cfg,
                     std::span<const double> acir_db, std::uint64_t snapshots, std::uint64_t seed,
                     unsigned workers = 1);

void write_acir_csv(const std::string& path, const AcirCurve& curve);

/// ACIR -> frequency separation, both strictly increasing.
struct GuardBandMap {
  std::vector<double> acir_db;
  std::vector<double> separation_mhz;

  void validate() const;
  /// Separation of the smallest entry whose ACIR is >= the requirement.
  /// Throws RangeError when the requirement exceeds the table.
  double lookup(double required_acir_db) const;
};

GuardBandMap default_guard_band_map();
GuardBandMap load_guard_band_map(const std::string& path);
void save_guard_band_map(const std::string& path, const GuardBandMap& map);

struct ConstraintAcir {
  std::string name;
  double required_acir_db = 0.0;
};

struct GuardBandResult {
  std::vector<ConstraintAcir> constraints;
  ConstraintAcir binding;
  double separation_mhz = 0.0;

  std::string summary() const;
};

/// Smallest ACIR at which the curve stays within budget, interpolated linearly
/// between the bracketing points. The lowest swept ACIR if the curve never exceeds it.
/// Throws InsufficientDataError when the curve still exceeds the budget at the last point.
double required_acir(std::span<const double> acir_db, std::span<const double> metric, double budget);

/// Binding constraint = largest required ACIR; separation from the map.
GuardBandResult guard_band_from_constraints(std::vector<ConstraintAcir> constraints,
                                            const GuardBandMap& map);

/// Four constraints: TV vs DL and TV vs UL outage, DL and UL capacity loss.
GuardBandResult determine_guard_band(const AcirCurve& curve, const GuardBandMap& map,
                                     double loss_budget = 0.05);

}  // namespace tvws
