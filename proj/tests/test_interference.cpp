#include "doctest.h"

#include <cmath>
#include <numbers>
#include <numeric>

#include "tvws/interference.hpp"

using namespace tvws;

namespace {

HexTopology default_topology(Point offset = {5000, 0}) { return build_topology(500, 6000, offset); }

Point rotate(Point p, double deg) {
  const double a = deg * std::numbers::pi / 180.0;
  return {p.x_m * std::cos(a) - p.y_m * std::sin(a), p.x_m * std::sin(a) + p.y_m * std::cos(a)};
}

int nearest_site(const HexTopology& t, Point p) {
  int best = 0;
  for (int s = 1; s < static_cast<int>(t.sites.size()); ++s) {
    if (distance(t.sites[static_cast<std::size_t>(s)], p) < distance(t.sites[static_cast<std::size_t>(best)], p)) best = s;
  }
  return best;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

const std::vector<double> kAcirs{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};

}  // namespace

TEST_CASE("two-ring layout has 19 sites and 57 sectors") {
  auto t = default_topology();
  REQUIRE(t.sites.size() == 19);
  REQUIRE(t.sectors.size() == 57);
  int ring1 = 0, ring2_far = 0, ring2_near = 0;
  for (const auto& s : t.sites) {
    const double r = std::hypot(s.x_m, s.y_m);
    if (std::abs(r - 500) < 1e-9) ++ring1;
    if (std::abs(r - 1000) < 1e-9) ++ring2_far;
    if (std::abs(r - 500 * std::sqrt(3.0)) < 1e-9) ++ring2_near;
  }
  CHECK(ring1 == 6);
  CHECK(ring2_far == 6);
  CHECK(ring2_near == 6);
  // Neighboring sites are exactly one ISD apart.
  for (std::size_t i = 0; i < t.sites.size(); ++i) {
    double nearest = 1e9;
    for (std::size_t j = 0; j < t.sites.size(); ++j) {
      if (i != j) nearest = std::min(nearest, distance(t.sites[i], t.sites[j]));
    }
    CHECK(nearest == doctest::Approx(500));
  }
}

TEST_CASE("sector_of follows the boresight") {
  auto t = default_topology();
  CHECK(sector_of(t, 0, {100, 1}) == 0);
  CHECK(sector_of(t, 0, rotate({100, 0}, 120)) == 1);
  CHECK(sector_of(t, 0, rotate({100, 0}, 240)) == 2);
  CHECK(sector_of(t, 0, rotate({100, 0}, 59)) == 0);
  CHECK(sector_of(t, 0, rotate({100, 0}, 61)) == 1);
  CHECK(sector_of(t, 4, {t.sites[4].x_m + 10, t.sites[4].y_m}) == 12);
}

TEST_CASE("drop fills every sector inside its own cell") {
  InterferenceConfig cfg;
  auto t = default_topology();
  auto d = drop_users(t, cfg, 42);
  REQUIRE(d.sector_ues.size() == 57);
  for (std::size_t q = 0; q < 57; ++q) {
    REQUIRE(d.sector_ues[q].size() == 10);
    const auto& sec = t.sectors[q];
    for (Point p : d.sector_ues[q]) {
      CHECK(nearest_site(t, p) == sec.site);
      CHECK(sector_of(t, sec.site, p) == static_cast<int>(q));
    }
  }
  REQUIRE(d.tv_receivers.size() == 10);
  for (Point p : d.tv_receivers) CHECK(distance(p, t.tv_transmitter) <= 6000);
}

TEST_CASE("noise floors match kTB plus noise figure") {
  // -174 dBm/Hz + 10log10(B) + NF, computed by hand.
  InterferenceConfig cfg;
  auto t = default_topology();
  auto links = compute_links(t, cfg, drop_users(t, cfg, 1));
  CHECK(linear_to_db(links.ue_noise_mw) == doctest::Approx(-174 + 72.5527250510331 + 9).epsilon(1e-3));
  CHECK(linear_to_db(links.cenb_noise_mw) == doctest::Approx(-174 + 72.5527250510331 + 5).epsilon(1e-3));
  CHECK(linear_to_db(links.tv_noise_mw) == doctest::Approx(-174 + 68.8081359228079 + 7).epsilon(1e-3));
  CHECK(links.tv_protection == doctest::Approx(199.52623149688796));
}

TEST_CASE("perfect isolation leaves TV and LTE at their baselines") {
  InterferenceConfig cfg;
  auto t = default_topology();
  auto links = compute_links(t, cfg, drop_users(t, cfg, 3));
  auto inf = evaluate_snapshot(links, kInf);
  CHECK(inf.tv_outage_dl == 0);
  CHECK(inf.tv_outage_ul == 0);
  auto very_high = evaluate_snapshot(links, 400);
  CHECK(very_high.dl_capacity == doctest::Approx(inf.dl_capacity));
  CHECK(very_high.ul_capacity == doctest::Approx(inf.ul_capacity));
  auto poor = evaluate_snapshot(links, 0);
  CHECK(poor.dl_capacity < inf.dl_capacity);
  CHECK(poor.ul_capacity < inf.ul_capacity);
}

TEST_CASE("sweep curves are monotone and downlink hurts TV at least as much as uplink") {
  InterferenceConfig cfg;
  auto t = default_topology();
  auto curve = acir_sweep(t, cfg, kAcirs, 100, 7, 4);
  REQUIRE(curve.points.size() == kAcirs.size());
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    CHECK(b.acir_db > a.acir_db);
    CHECK(b.tv_outage_dl <= a.tv_outage_dl);
    CHECK(b.tv_outage_ul <= a.tv_outage_ul);
    CHECK(b.dl_cap_loss <= a.dl_cap_loss);
    CHECK(b.ul_cap_loss <= a.ul_cap_loss);
  }
  for (const auto& p : curve.points) CHECK(p.tv_outage_dl >= p.tv_outage_ul);
  CHECK(curve.points.front().ul_cap_loss > curve.points.front().dl_cap_loss);
  CHECK(curve.points.back().dl_cap_loss < 0.01);
}

TEST_CASE("more CeNB power never reduces TV outage") {
  InterferenceConfig cfg;
  auto louder = cfg;
  louder.cenb_power_dbm += 3;
  auto t = default_topology();
  auto base = acir_sweep(t, cfg, kAcirs, 100, 11);
  auto loud = acir_sweep(t, louder, kAcirs, 100, 11);
  for (std::size_t i = 0; i < kAcirs.size(); ++i) {
    CHECK(loud.points[i].tv_outage_dl >= base.points[i].tv_outage_dl);
  }
}

TEST_CASE("sweep is deterministic and independent of worker count") {
  InterferenceConfig cfg;
  auto t = default_topology();
  std::vector<double> acirs{20, 45, 70};
  auto a = acir_sweep(t, cfg, acirs, 100, 5, 1);
  auto b = acir_sweep(t, cfg, acirs, 100, 5, 7);
  for (std::size_t i = 0; i < acirs.size(); ++i) {
    CHECK(a.points[i].tv_outage_dl == b.points[i].tv_outage_dl);
    CHECK(a.points[i].tv_outage_ul == b.points[i].tv_outage_ul);
    CHECK(a.points[i].dl_cap_loss == b.points[i].dl_cap_loss);
    CHECK(a.points[i].ul_cap_loss == b.points[i].ul_cap_loss);
  }
  CHECK_THROWS_AS(acir_sweep(t, cfg, acirs, 99, 5), ValidationError);
}

TEST_CASE("rotating a drop by 120 degrees leaves the link budget unchanged") {
  InterferenceConfig cfg;
  cfg.tv_radius_m = 3000;
  auto t = build_topology(500, 3000, {0, 0});
  auto d = drop_users(t, cfg, 99);
  Drop r;
  r.sector_ues.resize(d.sector_ues.size());
  for (std::size_t q = 0; q < d.sector_ues.size(); ++q) {
    const Point moved = rotate(t.sectors[q].position, 120);
    const int site = nearest_site(t, moved);
    const int target = sector_of(t, site, rotate(d.sector_ues[q].front(), 120));
    for (Point p : d.sector_ues[q]) r.sector_ues[static_cast<std::size_t>(target)].push_back(rotate(p, 120));
  }
  for (Point p : d.tv_receivers) r.tv_receivers.push_back(rotate(p, 120));
  for (const auto& v : r.sector_ues) REQUIRE(v.size() == 10);

  auto a = compute_links(t, cfg, d);
  auto b = compute_links(t, cfg, r);
  CHECK(sum(b.dl_signal_mw) == doctest::Approx(sum(a.dl_signal_mw)).epsilon(1e-9));
  CHECK(sum(b.dl_interference_mw) == doctest::Approx(sum(a.dl_interference_mw)).epsilon(1e-9));
  CHECK(sum(b.ul_signal_mw) == doctest::Approx(sum(a.ul_signal_mw)).epsilon(1e-9));
  CHECK(sum(b.ul_interference_mw) == doctest::Approx(sum(a.ul_interference_mw)).epsilon(1e-9));
  CHECK(sum(b.tv_from_dl_mw) == doctest::Approx(sum(a.tv_from_dl_mw)).epsilon(1e-9));
  for (double acir : {0.0, 30.0, 60.0}) {
    auto oa = evaluate_snapshot(a, acir);
    auto ob = evaluate_snapshot(b, acir);
    CHECK(ob.tv_outage_dl == oa.tv_outage_dl);
    CHECK(ob.dl_capacity == doctest::Approx(oa.dl_capacity).epsilon(1e-9));
    CHECK(ob.ul_capacity == doctest::Approx(oa.ul_capacity).epsilon(1e-9));
  }
}

TEST_CASE("required ACIR interpolates the budget crossing") {
  std::vector<double> x{0, 10, 20, 30};
  std::vector<double> y{0.5, 0.2, 0.04, 0.01};
  // Between 10 (0.2) and 20 (0.04): 10 + 10 * 0.15 / 0.16.
  CHECK(required_acir(x, y, 0.05) == doctest::Approx(19.375));
  std::vector<double> low{0.01, 0.0, 0.0, 0.0};
  CHECK(required_acir(x, low, 0.05) == 0);
  std::vector<double> high{0.9, 0.8, 0.7, 0.6};
  CHECK_THROWS_AS(required_acir(x, high, 0.05), InsufficientDataError);
  std::vector<double> with_inf{0, 10, kInf};
  std::vector<double> m{0.3, 0.01, 0.0};
  CHECK(required_acir(with_inf, m, 0.05) == doctest::Approx(10 * 0.25 / 0.29));
}

TEST_CASE("binding constraint picks the largest ACIR") {
  auto map = default_guard_band_map();
  auto res = guard_band_from_constraints(
      {{"tv_vs_lte_dl", 75}, {"tv_vs_lte_ul", 30}, {"lte_dl", 27}, {"lte_ul", 78}}, map);
  CHECK(res.binding.name == "lte_ul");
  CHECK(res.binding.required_acir_db == 78);
  CHECK(res.separation_mhz == 7);
  CHECK(res.summary().find("guard_band_mhz=7") == 0);
  CHECK(map.lookup(80) == 7);
  CHECK(map.lookup(80.01) == 9);
  CHECK(map.lookup(-5) == 0);
  CHECK_THROWS_AS(map.lookup(101), RangeError);
}

TEST_CASE("committed guard band map equals the default") {
  auto map = load_guard_band_map(std::string(TVWS_DATA_DIR) + "/guard_band_map.csv");
  auto def = default_guard_band_map();
  CHECK(map.acir_db == def.acir_db);
  CHECK(map.separation_mhz == def.separation_mhz);
}

TEST_CASE("default study lands on a 7 MHz guard band bound by uplink capacity") {
  InterferenceConfig cfg;
  auto t = default_topology();
  auto curve = acir_sweep(t, cfg, kAcirs, 100, 2024, 4);
  auto res = determine_guard_band(curve, default_guard_band_map());
  MESSAGE(res.summary());
  CHECK(res.binding.name == "lte_ul");
  CHECK(res.separation_mhz == 7);
  for (const auto& p : curve.points) {
    CHECK(p.tv_outage_dl <= 0.05);
    CHECK(p.tv_outage_ul <= 0.05);
  }
  auto loose = determine_guard_band(curve, default_guard_band_map(), 1.0);
  CHECK(loose.separation_mhz == 0);
}
