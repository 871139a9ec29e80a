#include "tvws/geodb.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tvws {

std::string to_string(Region region) {
  switch (region) {
    case Region::Black: return "Black";
    case Region::Grey: return "Grey";
    case Region::White: return "White";
  }
  return "?";
}

void GeoRecord::validate() const {
  if (!(protected_radius_m > 0.0)) {
    throw ValidationError("service '" + service.id + "' needs a positive protected radius");
  }
  if (!(required_rx_dbm < service.eirp_dbm)) {
    throw ValidationError("service '" + service.id + "' required rx must be below its EIRP");
  }
}

double contour_radius_m(double eirp_dbm, double required_rx_dbm, const PropagationConfig& prop,
                        double freq_mhz) {
  prop.validate();
  const double budget_db = eirp_dbm - required_rx_dbm - prop.reference_loss_db(freq_mhz);
  if (budget_db < 0.0) {
    throw DegenerateContourError("required level " + format_double(required_rx_dbm) +
                                 " dBm is not reached even at the reference distance");
  }
  return prop.ref_distance_m * std::pow(10.0, budget_db / (10.0 * prop.exponent));
}

double protected_radius(const GeoRecord& rec, const PropagationConfig& prop, const ChannelGrid& grid) {
  return contour_radius_m(rec.service.eirp_dbm, rec.required_rx_dbm, prop,
                          grid.channel(rec.service.channel_index).center_mhz());
}

double interference_range_m(double eirp_dbm, double floor_dbm, const PropagationConfig& prop,
                            double freq_mhz) {
  if (eirp_dbm - prop.reference_loss_db(freq_mhz) < floor_dbm) return 0.0;
  return contour_radius_m(eirp_dbm, floor_dbm, prop, freq_mhz);
}

void GeoDb::upsert(GeoRecord rec) {
  rec.validate();
  records_.insert_or_assign(rec.service.id, std::move(rec));
  ++version_;
}

const GeoRecord& GeoDb::register_service(const TvTransmitter& tx, double required_rx_dbm,
                                         const PropagationConfig& prop, const ChannelGrid& grid) {
  tx.validate(grid);
  GeoRecord rec{tx, required_rx_dbm, 0.0};
  rec.protected_radius_m = protected_radius(rec, prop, grid);
  upsert(rec);
  return records_.at(tx.id);
}

bool GeoDb::remove(const std::string& id) {
  if (records_.erase(id) == 0) return false;
  ++version_;
  return true;
}

const GeoRecord* GeoDb::find(const std::string& id) const {
  auto it = records_.find(id);
  return it == records_.end() ? nullptr : &it->second;
}

RegionRadii region_radii(const GeoDb& db, const GeoRecord& rec, double cenb_max_eirp_dbm,
                         const PropagationConfig& prop, const ChannelGrid& grid) {
  const double freq = grid.channel(rec.service.channel_index).center_mhz();
  const double floor_dbm = rec.required_rx_dbm - db.protection_ratio_db;
  const double reach = interference_range_m(cenb_max_eirp_dbm, floor_dbm, prop, freq);
  return {rec.protected_radius_m, rec.protected_radius_m + reach + db.grey_margin_m};
}

Region classify_region(const GeoDb& db, Point point, int channel_index, double cenb_max_eirp_dbm,
                       const PropagationConfig& prop, const ChannelGrid& grid) {
  if (!grid.valid(channel_index)) {
    throw RangeError("channel " + std::to_string(channel_index) + " is not in the grid");
  }
  Region result = Region::White;
  for (const auto& [id, rec] : db.records()) {
    if (rec.service.channel_index != channel_index) continue;
    const double d = distance(point, rec.service.location);
    const auto radii = region_radii(db, rec, cenb_max_eirp_dbm, prop, grid);
    if (d <= radii.black_m) return Region::Black;
    if (d <= radii.white_m) result = Region::Grey;
  }
  return result;
}

std::vector<ChannelRegion> query_vacant_channels(const GeoDb& db, Point point,
                                                 double cenb_max_eirp_dbm,
                                                 const PropagationConfig& prop,
                                                 const ChannelGrid& grid) {
  std::vector<ChannelRegion> out;
  out.reserve(static_cast<std::size_t>(grid.size()));
  for (const auto& ch : grid.channels()) {
    out.push_back({ch.index, classify_region(db, point, ch.index, cenb_max_eirp_dbm, prop, grid)});
  }
  return out;
}

namespace {

constexpr std::string_view kGeoHeader =
    "id,standard,channel,x_m,y_m,eirp_dbm,height_m,required_rx_dbm,protected_radius_m";
constexpr std::string_view kGeoMagic = "# tvws-geodb";

}  // namespace

void save_geodb(const std::string& path, const GeoDb& db) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << kGeoMagic << " version=" << db.version() << " grey_margin_m=" << format_double(db.grey_margin_m)
      << " protection_ratio_db=" << format_double(db.protection_ratio_db) << '\n'
      << kGeoHeader << '\n';
  for (const auto& [id, rec] : db.records()) {
    const auto& s = rec.service;
    out << s.id << ',' << to_string(s.standard) << ',' << s.channel_index << ','
        << format_double(s.location.x_m) << ',' << format_double(s.location.y_m) << ','
        << format_double(s.eirp_dbm) << ',' << format_double(s.antenna_height_m) << ','
        << format_double(rec.required_rx_dbm) << ',' << format_double(rec.protected_radius_m) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

GeoDb load_geodb(const std::string& path, const ChannelGrid& grid, const PropagationConfig& prop) {
  const auto lines = read_lines(path);
  GeoDb db;
  std::size_t i = 0;
  bool have_version = false;
  if (i < lines.size() && lines[i].starts_with(kGeoMagic)) {
    std::istringstream meta(lines[i].substr(kGeoMagic.size()));
    std::string token;
    while (meta >> token) {
      auto eq = token.find('=');
      if (eq == std::string::npos) throw ParseError(path, i + 1, "bad metadata token '" + token + "'");
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      try {
        if (key == "version") {
          db.version_ = static_cast<std::uint64_t>(parse_int(value));
          have_version = true;
        } else if (key == "grey_margin_m") {
          db.grey_margin_m = parse_double(value);
        } else if (key == "protection_ratio_db") {
          db.protection_ratio_db = parse_double(value);
        } else {
          throw ParseError(path, i + 1, "unknown metadata key '" + key + "'");
        }
      } catch (const ValidationError& e) {
        throw ParseError(path, i + 1, e.what());
      }
    }
    ++i;
  }
  if (i >= lines.size() || trim(lines[i]) != kGeoHeader) {
    throw ParseError(path, i + 1, "expected header '" + std::string(kGeoHeader) + "'");
  }
  ++i;
  std::map<std::string, GeoRecord> records;
  for (; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != 9) throw ParseError(path, line_no, "expected 9 fields, got " + std::to_string(f.size()));
    GeoRecord rec;
    try {
      auto& s = rec.service;
      s.id = std::string(trim(f[0]));
      if (s.id.empty()) throw ValidationError("empty id");
      s.standard = parse_standard(trim(f[1]));
      s.channel_index = static_cast<int>(parse_int(f[2]));
      s.location = {parse_double(f[3]), parse_double(f[4])};
      s.eirp_dbm = parse_double(f[5]);
      s.antenna_height_m = parse_double(f[6]);
      rec.required_rx_dbm = parse_double(f[7]);
      s.validate(grid);
      rec.protected_radius_m =
          trim(f[8]).empty() ? protected_radius(rec, prop, grid) : parse_double(f[8]);
      rec.validate();
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path, line_no, e.what());
    }
    if (records.contains(rec.service.id)) {
      throw ParseError(path, line_no, "duplicate key '" + rec.service.id + "'");
    }
    records.emplace(rec.service.id, std::move(rec));
  }
  db.records_ = std::move(records);
  // Files without a version line are treated as freshly populated.
  if (!have_version) db.version_ = db.records_.size();
  return db;
}

void SeparationTable::validate() const {
  if (powers_dbm.empty() || heights_m.empty()) throw ValidationError("separation table is empty");
  auto increasing = [](const std::vector<double>& v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
  };
  if (!increasing(powers_dbm) || !increasing(heights_m)) {
    throw ValidationError("separation table axes must be strictly increasing");
  }
  if (distance_m.size() != powers_dbm.size()) throw ValidationError("separation table row count mismatch");
  for (std::size_t p = 0; p < distance_m.size(); ++p) {
    if (distance_m[p].size() != heights_m.size()) {
      throw ValidationError("separation table column count mismatch");
    }
    for (std::size_t h = 0; h < heights_m.size(); ++h) {
      const double v = distance_m[p][h];
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("separation distances must be finite and >= 0");
      if ((h > 0 && v < distance_m[p][h - 1]) || (p > 0 && v < distance_m[p - 1][h])) {
        throw ValidationError("separation table must be non-decreasing in power and height");
      }
    }
  }
}

namespace {

// Cell index and fraction along one axis after clamping to the axis range.
struct AxisPos {
  std::size_t lo = 0;
  double frac = 0.0;
  bool clamped = false;
};

AxisPos locate(const std::vector<double>& axis, double x) {
  AxisPos pos;
  if (x < axis.front() || x > axis.back()) {
    pos.clamped = true;
    x = std::clamp(x, axis.front(), axis.back());
  }
  if (axis.size() == 1) return pos;
  auto it = std::upper_bound(axis.begin(), axis.end(), x);
  std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - axis.begin()), axis.size() - 1);
  pos.lo = hi - 1;
  pos.frac = (x - axis[pos.lo]) / (axis[hi] - axis[pos.lo]);
  return pos;
}

}  // namespace

SeparationLookup required_separation(double wsd_power_dbm, double wsd_height_m,
                                     const SeparationTable& table) {
  table.validate();
  const AxisPos p = locate(table.powers_dbm, wsd_power_dbm);
  const AxisPos h = locate(table.heights_m, wsd_height_m);
  auto at = [&](std::size_t pi, std::size_t hi) {
    return table.distance_m[std::min(pi, table.powers_dbm.size() - 1)]
                           [std::min(hi, table.heights_m.size() - 1)];
  };
  const double low = at(p.lo, h.lo) * (1 - h.frac) + at(p.lo, h.lo + 1) * h.frac;
  const double high = at(p.lo + 1, h.lo) * (1 - h.frac) + at(p.lo + 1, h.lo + 1) * h.frac;
  return {low * (1 - p.frac) + high * p.frac, p.clamped || h.clamped};
}

SeparationTable default_separation_table() {
  SeparationTable t;
  t.powers_dbm = {10, 20, 30, 40};
  t.heights_m = {10, 30, 60};
  PropagationConfig prop;
  for (double p : t.powers_dbm) {
    std::vector<double> row;
    for (double h : t.heights_m) {
      const double gain = 20.0 * std::log10(h / 10.0);
      row.push_back(std::round(interference_range_m(p + gain, -84.0 - 23.0, prop, 700.0)));
    }
    t.distance_m.push_back(std::move(row));
  }
  return t;
}

SeparationTable load_separation_table(const std::string& path) {
  const auto lines = read_lines(path);
  SeparationTable t;
  std::size_t i = 0;
  while (i < lines.size() && (trim(lines[i]).empty() || trim(lines[i]).front() == '#')) ++i;
  if (i >= lines.size()) throw ParseError(path, i + 1, "missing header");
  auto head = split(lines[i], ',');
  if (head.size() < 2 || trim(head[0]) != "power_dbm") {
    throw ParseError(path, i + 1, "expected header 'power_dbm,<height>,...'");
  }
  try {
    for (std::size_t c = 1; c < head.size(); ++c) t.heights_m.push_back(parse_double(head[c]));
  } catch (const ValidationError& e) {
    throw ParseError(path, i + 1, e.what());
  }
  for (++i; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != head.size()) throw ParseError(path, i + 1, "row width does not match header");
    try {
      t.powers_dbm.push_back(parse_double(f[0]));
      std::vector<double> row;
      for (std::size_t c = 1; c < f.size(); ++c) row.push_back(parse_double(f[c]));
      t.distance_m.push_back(std::move(row));
    } catch (const ValidationError& e) {
      throw ParseError(path, i + 1, e.what());
    }
  }
  try {
    t.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path, lines.size(), e.what());
  }
  return t;
}

void save_separation_table(const std::string& path, const SeparationTable& table) {
  table.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "power_dbm";
  for (double h : table.heights_m) out << ',' << format_double(h);
  out << '\n';
  for (std::size_t p = 0; p < table.powers_dbm.size(); ++p) {
    out << format_double(table.powers_dbm[p]);
    for (double v : table.distance_m[p]) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tvws
