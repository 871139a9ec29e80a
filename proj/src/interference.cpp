#include "tvws/interference.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <thread>

#include "tvws/radio_env.hpp"

namespace tvws {

namespace {

constexpr double kPi = std::numbers::pi;

double degrees(double rad) { return rad * 180.0 / kPi; }

// Log-distance loss from a 1 m free-space reference, floored at the minimum coupling loss.
struct LossModel {
  double ref_db;
  double exponent;
  double mcl_db;

  double operator()(Point a, Point b) const {
    const double d = std::max(distance(a, b), 1.0);
    return std::max(ref_db + 10.0 * exponent * std::log10(d), mcl_db);
  }
};

double sector_gain_db(const Sector& s, Point target, const InterferenceConfig& cfg) {
  // A co-sited target has no defined bearing.
  if (distance(s.position, target) < 1e-9) return 0.0;
  double theta = degrees(std::atan2(target.y_m - s.position.y_m, target.x_m - s.position.x_m)) - s.boresight_deg;
  theta = std::fmod(theta + 180.0, 360.0);
  if (theta < 0) theta += 360.0;
  theta -= 180.0;
  const double ratio = theta / cfg.sector_beamwidth_deg;
  return -std::min(12.0 * ratio * ratio, cfg.front_to_back_db);
}

bool inside_cell(Point rel, double isd_m) {
  for (int k = 0; k < 6; ++k) {
    const double a = kPi / 3.0 * k;
    if (std::abs(rel.x_m * std::cos(a) + rel.y_m * std::sin(a)) > isd_m / 2.0) return false;
  }
  return true;
}

double noise_mw(double bandwidth_mhz, double nf_db) {
  return db_to_linear(thermal_noise_dbm(bandwidth_mhz * 1000.0, nf_db));
}

}  // namespace

void InterferenceConfig::validate() const {
  if (!(isd_m > 0)) throw ValidationError("inter-site distance must be positive");
  if (!(tv_radius_m > 0)) throw ValidationError("TV service radius must be positive");
  if (!(freq_mhz > 0)) throw ValidationError("carrier frequency must be positive");
  if (!(ground_exponent >= 2) || !(elevated_exponent >= 2)) throw ValidationError("path-loss exponents must be >= 2");
  if (!(sector_beamwidth_deg > 0)) throw ValidationError("sector beamwidth must be positive");
  if (tv_receivers < 1 || ues_per_sector < 1) throw ValidationError("user counts must be >= 1");
  if (!(lte_bandwidth_mhz > 0) || !(tv_bandwidth_mhz > 0)) throw ValidationError("bandwidths must be positive");
}

HexTopology build_topology(double isd_m, double tv_radius_m, Point tv_offset) {
  if (!(isd_m > 0)) throw ValidationError("inter-site distance must be positive");
  HexTopology t;
  t.isd_m = isd_m;
  t.tv_radius_m = tv_radius_m;
  t.tv_transmitter = tv_offset;
  t.sites.push_back({0, 0});
  for (int k = 0; k < 6; ++k) {
    const double a = kPi / 3.0 * k;
    t.sites.push_back({isd_m * std::cos(a), isd_m * std::sin(a)});
  }
  for (int k = 0; k < 6; ++k) {
    const double a = kPi / 3.0 * k;
    t.sites.push_back({2 * isd_m * std::cos(a), 2 * isd_m * std::sin(a)});
    const double b = a + kPi / 6.0;
    t.sites.push_back({std::sqrt(3.0) * isd_m * std::cos(b), std::sqrt(3.0) * isd_m * std::sin(b)});
  }
  for (int s = 0; s < static_cast<int>(t.sites.size()); ++s) {
    for (int k = 0; k < 3; ++k) t.sectors.push_back({s, t.sites[static_cast<std::size_t>(s)], 120.0 * k});
  }
  return t;
}

int sector_of(const HexTopology& topo, int site, Point p) {
  const Point c = topo.sites.at(static_cast<std::size_t>(site));
  double ang = std::atan2(p.y_m - c.y_m, p.x_m - c.x_m);
  if (ang < 0) ang += 2 * kPi;
  const int k = static_cast<int>(std::floor((ang + kPi / 3.0) / (2 * kPi / 3.0))) % 3;
  return site * 3 + k;
}

Drop drop_users(const HexTopology& topo, const InterferenceConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Drop drop;
  drop.sector_ues.resize(topo.sectors.size());
  const double r = topo.isd_m / std::sqrt(3.0);
  std::uniform_real_distribution<double> in_cell(-r, r);
  const auto per_sector = static_cast<std::size_t>(cfg.ues_per_sector);
  for (int s = 0; s < static_cast<int>(topo.sites.size()); ++s) {
    const Point c = topo.sites[static_cast<std::size_t>(s)];
    std::size_t placed = 0;
    while (placed < 3 * per_sector) {
      const Point rel{in_cell(rng), in_cell(rng)};
      if (!inside_cell(rel, topo.isd_m)) continue;
      const Point p{c.x_m + rel.x_m, c.y_m + rel.y_m};
      auto& bucket = drop.sector_ues[static_cast<std::size_t>(sector_of(topo, s, p))];
      if (bucket.size() >= per_sector) continue;
      bucket.push_back(p);
      ++placed;
    }
  }
  std::uniform_real_distribution<double> in_disc(-topo.tv_radius_m, topo.tv_radius_m);
  while (static_cast<int>(drop.tv_receivers.size()) < cfg.tv_receivers) {
    const double x = in_disc(rng), y = in_disc(rng);
    if (x * x + y * y > topo.tv_radius_m * topo.tv_radius_m) continue;
    drop.tv_receivers.push_back({topo.tv_transmitter.x_m + x, topo.tv_transmitter.y_m + y});
  }
  return drop;
}

SnapshotLinks compute_links(const HexTopology& topo, const InterferenceConfig& cfg, const Drop& drop) {
  cfg.validate();
  const double ref = free_space_loss_db(1.0, cfg.freq_mhz);
  const LossModel ground{ref, cfg.ground_exponent, cfg.min_coupling_loss_db};
  const LossModel elevated{ref, cfg.elevated_exponent, cfg.min_coupling_loss_db};
  const auto& sectors = topo.sectors;
  const std::size_t nsec = sectors.size();
  const Point tv = topo.tv_transmitter;

  SnapshotLinks L;
  L.ue_noise_mw = noise_mw(cfg.lte_bandwidth_mhz, cfg.ue_noise_figure_db);
  L.cenb_noise_mw = noise_mw(cfg.lte_bandwidth_mhz, cfg.cenb_noise_figure_db);
  L.tv_noise_mw = noise_mw(cfg.tv_bandwidth_mhz, cfg.tv_noise_figure_db);
  L.tv_protection = db_to_linear(cfg.tv_protection_db);

  auto from_sector = [&](std::size_t q, Point p, double power_dbm) {
    return db_to_linear(power_dbm + sector_gain_db(sectors[q], p, cfg) - ground(sectors[q].position, p));
  };

  for (std::size_t q = 0; q < nsec; ++q) {
    for (Point ue : drop.sector_ues[q]) {
      double total = 0.0, wanted = 0.0;
      for (std::size_t j = 0; j < nsec; ++j) {
        const double p = from_sector(j, ue, cfg.cenb_power_dbm);
        total += p;
        if (j == q) wanted = p;
      }
      L.dl_signal_mw.push_back(wanted);
      L.dl_interference_mw.push_back(total - wanted);
      L.dl_tv_mw.push_back(db_to_linear(cfg.tv_eirp_dbm - ground(tv, ue)));
    }
  }

  const auto slots = static_cast<std::size_t>(cfg.ues_per_sector);
  for (std::size_t k = 0; k < slots; ++k) {
    for (std::size_t q = 0; q < nsec; ++q) {
      double total = 0.0, wanted = 0.0;
      for (std::size_t j = 0; j < nsec; ++j) {
        const double p = from_sector(q, drop.sector_ues[j].at(k), cfg.ue_power_dbm);
        total += p;
        if (j == q) wanted = p;
      }
      L.ul_signal_mw.push_back(wanted);
      L.ul_interference_mw.push_back(total - wanted);
      L.ul_tv_mw.push_back(
          db_to_linear(cfg.tv_eirp_dbm + sector_gain_db(sectors[q], tv, cfg) - elevated(sectors[q].position, tv)));
    }
  }

  L.tv_from_ul_mw.assign(slots, {});
  for (Point rx : drop.tv_receivers) {
    L.tv_signal_mw.push_back(db_to_linear(cfg.tv_eirp_dbm - ground(tv, rx)));
    double dl = 0.0;
    for (std::size_t q = 0; q < nsec; ++q) dl += from_sector(q, rx, cfg.cenb_power_dbm);
    L.tv_from_dl_mw.push_back(dl);
    for (std::size_t k = 0; k < slots; ++k) {
      double ul = 0.0;
      for (std::size_t q = 0; q < nsec; ++q) {
        ul += db_to_linear(cfg.ue_power_dbm - ground(drop.sector_ues[q][k], rx));
      }
      L.tv_from_ul_mw[k].push_back(ul);
    }
  }
  return L;
}

SnapshotOutcome evaluate_snapshot(const SnapshotLinks& L, double acir_db) {
  const double a = acir_db == kInf ? 0.0 : db_to_linear(-acir_db);
  SnapshotOutcome out;
  out.tv_receivers = static_cast<int>(L.tv_signal_mw.size());
  const std::size_t slots = L.tv_from_ul_mw.size();
  int ul_outages = 0;
  for (std::size_t r = 0; r < L.tv_signal_mw.size(); ++r) {
    const double s = L.tv_signal_mw[r];
    if (s / L.tv_noise_mw < L.tv_protection) continue;
    ++out.tv_eligible;
    if (s / (L.tv_noise_mw + a * L.tv_from_dl_mw[r]) < L.tv_protection) ++out.tv_outage_dl;
    for (std::size_t k = 0; k < slots; ++k) {
      if (s / (L.tv_noise_mw + a * L.tv_from_ul_mw[k][r]) < L.tv_protection) ++ul_outages;
    }
  }
  out.tv_outage_ul = slots ? static_cast<double>(ul_outages) / static_cast<double>(slots) : 0.0;

  double dl = 0.0;
  for (std::size_t u = 0; u < L.dl_signal_mw.size(); ++u) {
    dl += std::log2(1.0 + L.dl_signal_mw[u] / (L.ue_noise_mw + L.dl_interference_mw[u] + a * L.dl_tv_mw[u]));
  }
  out.dl_capacity = L.dl_signal_mw.empty() ? 0.0 : dl / static_cast<double>(L.dl_signal_mw.size());
  double ul = 0.0;
  for (std::size_t i = 0; i < L.ul_signal_mw.size(); ++i) {
    ul += std::log2(1.0 + L.ul_signal_mw[i] / (L.cenb_noise_mw + L.ul_interference_mw[i] + a * L.ul_tv_mw[i]));
  }
  out.ul_capacity = L.ul_signal_mw.empty() ? 0.0 : ul / static_cast<double>(L.ul_signal_mw.size());
  return out;
}

SnapshotOutcome simulate_snapshot(const HexTopology& topo, const InterferenceConfig& cfg,
                                  double acir_db, std::uint64_t drop_seed) {
  return evaluate_snapshot(compute_links(topo, cfg, drop_users(topo, cfg, drop_seed)), acir_db);
}

AcirCurve acir_sweep(const HexTopology& topo, const InterferenceConfig& cfg,
                     std::span<const double> acir_db, std::uint64_t snapshots, std::uint64_t seed,
                     unsigned workers) {
  if (snapshots < 100) throw ValidationError("an ACIR sweep needs at least 100 snapshots");
  cfg.validate();
  std::vector<double> acirs(acir_db.begin(), acir_db.end());
  std::sort(acirs.begin(), acirs.end());
  const std::size_t n = acirs.size();

  // [snapshot][acir]; the reference column (+inf) is appended last.
  std::vector<std::vector<SnapshotOutcome>> results(snapshots);
  auto run = [&](std::uint64_t lo, std::uint64_t hi) {
    for (std::uint64_t s = lo; s < hi; ++s) {
      const auto links = compute_links(topo, cfg, drop_users(topo, cfg, derive_seed(seed, s)));
      auto& row = results[s];
      for (double a : acirs) row.push_back(evaluate_snapshot(links, a));
      row.push_back(evaluate_snapshot(links, kInf));
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    run(0, snapshots);
  } else {
    std::vector<std::jthread> pool;
    const std::uint64_t chunk = (snapshots + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::uint64_t lo = w * chunk, hi = std::min(snapshots, lo + chunk);
      if (lo < hi) pool.emplace_back(run, lo, hi);
    }
  }

  AcirCurve curve;
  curve.snapshots = snapshots;
  curve.seed = seed;
  double eligible = 0, receivers = 0, ref_dl = 0, ref_ul = 0;
  std::vector<double> out_dl(n, 0), out_ul(n, 0), cap_dl(n, 0), cap_ul(n, 0);
  for (const auto& row : results) {
    eligible += row[n].tv_eligible;
    receivers += row[n].tv_receivers;
    ref_dl += row[n].dl_capacity;
    ref_ul += row[n].ul_capacity;
    for (std::size_t i = 0; i < n; ++i) {
      out_dl[i] += row[i].tv_outage_dl;
      out_ul[i] += row[i].tv_outage_ul;
      cap_dl[i] += row[i].dl_capacity;
      cap_ul[i] += row[i].ul_capacity;
    }
  }
  curve.tv_baseline_outage = receivers > 0 ? 1.0 - eligible / receivers : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    AcirPoint p;
    p.acir_db = acirs[i];
    p.tv_outage_dl = eligible > 0 ? out_dl[i] / eligible : 0.0;
    p.tv_outage_ul = eligible > 0 ? out_ul[i] / eligible : 0.0;
    p.dl_cap_loss = ref_dl > 0 ? std::clamp(1.0 - cap_dl[i] / ref_dl, 0.0, 1.0) : 0.0;
    p.ul_cap_loss = ref_ul > 0 ? std::clamp(1.0 - cap_ul[i] / ref_ul, 0.0, 1.0) : 0.0;
    curve.points.push_back(p);
  }
  return curve;
}

void write_acir_csv(const std::string& path, const AcirCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "acir_db,tv_outage_dl,tv_outage_ul,dl_cap_loss,ul_cap_loss,snapshots,seed\n";
  for (const auto& p : curve.points) {
    out << format_double(p.acir_db) << ',' << format_double(p.tv_outage_dl) << ','
        << format_double(p.tv_outage_ul) << ',' << format_double(p.dl_cap_loss) << ','
        << format_double(p.ul_cap_loss) << ',' << curve.snapshots << ',' << curve.seed << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

void GuardBandMap::validate() const {
  if (acir_db.empty() || acir_db.size() != separation_mhz.size()) {
    throw ValidationError("guard band map needs matching, non-empty columns");
  }
  for (std::size_t i = 1; i < acir_db.size(); ++i) {
    if (!(acir_db[i] > acir_db[i - 1]) || !(separation_mhz[i] > separation_mhz[i - 1])) {
      throw ValidationError("guard band map must be strictly increasing in both columns");
    }
  }
}

double GuardBandMap::lookup(double required_acir_db) const {
  validate();
  auto it = std::lower_bound(acir_db.begin(), acir_db.end(), required_acir_db);
  if (it == acir_db.end()) {
    throw RangeError("required ACIR " + format_double(required_acir_db) + " dB exceeds the guard band map");
  }
  return separation_mhz[static_cast<std::size_t>(it - acir_db.begin())];
}

GuardBandMap default_guard_band_map() {
  return {{0, 20, 30, 40, 50, 60, 70, 80, 90, 100}, {0, 1, 2, 3, 4, 5, 6, 7, 9, 12}};
}

GuardBandMap load_guard_band_map(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != "acir_db,separation_mhz") {
    throw ParseError(path, 1, "expected header 'acir_db,separation_mhz'");
  }
  GuardBandMap map;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != 2) throw ParseError(path, i + 1, "expected 2 fields");
    try {
      map.acir_db.push_back(parse_double(f[0]));
      map.separation_mhz.push_back(parse_double(f[1]));
    } catch (const ValidationError& e) {
      throw ParseError(path, i + 1, e.what());
    }
  }
  try {
    map.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path, lines.size(), e.what());
  }
  return map;
}

void save_guard_band_map(const std::string& path, const GuardBandMap& map) {
  map.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "acir_db,separation_mhz\n";
  for (std::size_t i = 0; i < map.acir_db.size(); ++i) {
    out << format_double(map.acir_db[i]) << ',' << format_double(map.separation_mhz[i]) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

double required_acir(std::span<const double> acir_db, std::span<const double> metric, double budget) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < acir_db.size() && i < metric.size(); ++i) {
    if (std::isfinite(acir_db[i])) pts.emplace_back(acir_db[i], metric[i]);
  }
  if (pts.empty()) throw InsufficientDataError("no finite ACIR points in the sweep");
  std::sort(pts.begin(), pts.end());
  std::optional<std::size_t> last_over;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].second > budget) last_over = i;
  }
  if (!last_over) return pts.front().first;
  const std::size_t i = *last_over;
  if (i + 1 == pts.size()) {
    throw InsufficientDataError("sweep ends at " + format_double(pts.back().first) +
                                " dB still above the " + format_double(budget) + " budget");
  }
  const auto [x0, y0] = pts[i];
  const auto [x1, y1] = pts[i + 1];
  return x0 + (y0 - budget) / (y0 - y1) * (x1 - x0);
}

GuardBandResult guard_band_from_constraints(std::vector<ConstraintAcir> constraints, const GuardBandMap& map) {
  if (constraints.empty()) throw ValidationError("no guard band constraints");
  GuardBandResult res;
  res.constraints = std::move(constraints);
  res.binding = *std::max_element(res.constraints.begin(), res.constraints.end(),
                                  [](const auto& a, const auto& b) { return a.required_acir_db < b.required_acir_db; });
  res.separation_mhz = map.lookup(res.binding.required_acir_db);
  return res;
}

GuardBandResult determine_guard_band(const AcirCurve& curve, const GuardBandMap& map, double loss_budget) {
  std::vector<double> x, tv_dl, tv_ul, dl, ul;
  for (const auto& p : curve.points) {
    x.push_back(p.acir_db);
    tv_dl.push_back(p.tv_outage_dl);
    tv_ul.push_back(p.tv_outage_ul);
    dl.push_back(p.dl_cap_loss);
    ul.push_back(p.ul_cap_loss);
  }
  return guard_band_from_constraints({{"tv_vs_lte_dl", required_acir(x, tv_dl, loss_budget)},
                                      {"tv_vs_lte_ul", required_acir(x, tv_ul, loss_budget)},
                                      {"lte_dl", required_acir(x, dl, loss_budget)},
                                      {"lte_ul", required_acir(x, ul, loss_budget)}},
                                     map);
}

std::string GuardBandResult::summary() const {
  std::string s = "guard_band_mhz=" + format_double(separation_mhz) + " binding=" + binding.name +
                  " binding_acir_db=" + format_double(std::round(binding.required_acir_db * 100) / 100);
  for (const auto& c : constraints) {
    s += " " + c.name + "=" + format_double(std::round(c.required_acir_db * 100) / 100);
  }
  return s;
}

}  // namespace tvws
