#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tvws/radio_env.hpp"

namespace tvws {

/// Ordered by permissiveness: Black < Grey < White.
enum class Region { Black = 0, Grey = 1, White = 2 };

std::string to_string(Region region);

struct GeoRecord {
  TvTransmitter service;
  double required_rx_dbm = -84.0;
  double protected_radius_m = 0.0;

  void validate() const;
  friend bool operator==(const GeoRecord&, const GeoRecord&) = default;
};

/// Largest distance at which eirp - median_loss(d) >= required_rx, closed form.
/// Throws DegenerateContourError if the level is unreachable even at the reference distance.
double contour_radius_m(double eirp_dbm, double required_rx_dbm, const PropagationConfig& prop,
                        double freq_mhz);

/// Protected-contour radius of one service on its grid channel (median propagation).
double protected_radius(const GeoRecord& rec, const PropagationConfig& prop, const ChannelGrid& grid);

/// Distance beyond which a transmitter of `eirp_dbm` stays below `floor_dbm`. Zero if
/// it is below the floor already at the reference distance.
double interference_range_m(double eirp_dbm, double floor_dbm, const PropagationConfig& prop,
                            double freq_mhz);

class GeoDb {
 public:
  double grey_margin_m = 1000.0;
  /// Wanted-to-unwanted ratio the TV receiver needs; sets the protection floor.
  double protection_ratio_db = 23.0;

  /// Inserts or replaces by service id.
  void upsert(GeoRecord rec);
  /// Builds a record, computing the contour radius from the propagation model.
  const GeoRecord& register_service(const TvTransmitter& tx, double required_rx_dbm,
                                    const PropagationConfig& prop, const ChannelGrid& grid);
  bool remove(const std::string& id);

  const GeoRecord* find(const std::string& id) const;
  const std::map<std::string, GeoRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::uint64_t version() const { return version_; }

  friend bool operator==(const GeoDb&, const GeoDb&) = default;

 private:
  friend GeoDb load_geodb(const std::string&, const ChannelGrid&, const PropagationConfig&);

  std::map<std::string, GeoRecord> records_;
  std::uint64_t version_ = 0;
};

/// Distances from one service's transmitter where the region changes.
struct RegionRadii {
  double black_m = 0.0;  ///< Black for d <= black_m
  double white_m = 0.0;  ///< White for d > white_m, Grey in between
};

RegionRadii region_radii(const GeoDb& db, const GeoRecord& rec, double cenb_max_eirp_dbm,
                         const PropagationConfig& prop, const ChannelGrid& grid);

/// Co-channel rule only. Throws RangeError for a channel outside the grid.
Region classify_region(const GeoDb& db, Point point, int channel_index, double cenb_max_eirp_dbm,
                       const PropagationConfig& prop, const ChannelGrid& grid);

struct ChannelRegion {
  int channel_index = 0;
  Region region = Region::White;

  bool usable_without_sensing() const { return region == Region::White; }
  bool usable_with_sensing() const { return region == Region::Grey; }
  friend bool operator==(const ChannelRegion&, const ChannelRegion&) = default;
};

std::vector<ChannelRegion> query_vacant_channels(const GeoDb& db, Point point,
                                                 double cenb_max_eirp_dbm,
                                                 const PropagationConfig& prop,
                                                 const ChannelGrid& grid);

/// File format: a `# tvws-geodb version=...` line, then the CSV header
/// id,standard,channel,x_m,y_m,eirp_dbm,height_m,required_rx_dbm,protected_radius_m.
/// A blank radius is computed from `prop` on load.
void save_geodb(const std::string& path, const GeoDb& db);
GeoDb load_geodb(const std::string& path, const ChannelGrid& grid,
                 const PropagationConfig& prop = {});

/// Minimum WSD distance from a protected contour, by transmit power (rows) and
/// antenna height (columns). Both axes strictly increasing, values monotone.
struct SeparationTable {
  std::vector<double> powers_dbm;
  std::vector<double> heights_m;
  std::vector<std::vector<double>> distance_m;  ///< [power][height]

  void validate() const;
};

struct SeparationLookup {
  double distance_m = 0.0;
  bool clamped = false;  ///< an input fell outside the table and was clamped to its edge
};

SeparationLookup required_separation(double wsd_power_dbm, double wsd_height_m,
                                     const SeparationTable& table);

/// 4 powers x 3 heights generated from the interference-range formula with a
/// 20*log10(h/10 m) antenna-height gain, n = 3.5, 700 MHz, floor -107 dBm.
SeparationTable default_separation_table();

/// CSV matrix: header `power_dbm,<h1>,<h2>,...`, then one row per power.
SeparationTable load_separation_table(const std::string& path);
void save_separation_table(const std::string& path, const SeparationTable& table);

}  // namespace tvws
