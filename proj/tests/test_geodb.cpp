#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <numbers>

#include "tvws/geodb.hpp"

using namespace tvws;

namespace {

// Friis loss at 1 m computed independently of the library.
double friis_1m(double freq_mhz) {
  return 20.0 * std::log10(4.0 * std::numbers::pi * freq_mhz * 1e6 / 299792458.0);
}

TvTransmitter service(std::string id, int channel, Point where, double eirp) {
  TvTransmitter tx;
  tx.id = std::move(id);
  tx.channel_index = channel;
  tx.location = where;
  tx.eirp_dbm = eirp;
  return tx;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("contour radius closed form") {
  PropagationConfig prop;
  // 10^((60 + 84 - 29.3497) / 35)
  CHECK(contour_radius_m(60, -84, prop, 700) == doctest::Approx(1886.7814567906692).epsilon(1e-9));
  // At exactly the reference loss the contour sits on the reference distance.
  CHECK(contour_radius_m(-84 + friis_1m(700), -84, prop, 700) == doctest::Approx(1.0));
  const double r = contour_radius_m(50, -84, prop, 700);
  CHECK(contour_radius_m(50 + 35 * std::log10(2.0), -84, prop, 700) == doctest::Approx(2 * r));
  CHECK_THROWS_AS(contour_radius_m(-60, -84, prop, 700), DegenerateContourError);
}

TEST_CASE("received power on the contour equals the required level") {
  auto grid = ChannelGrid::china_uhf();
  PropagationConfig prop;
  for (double eirp : {30.0, 45.0, 60.0, 80.0}) {
    for (int ch : {0, 12, 36}) {
      GeoRecord rec{service("s", ch, {}, eirp), -84.0, 0.0};
      double r = protected_radius(rec, prop, grid);
      double rx = eirp - median_path_loss_db(prop, r, grid.channel(ch).center_mhz());
      CHECK(std::abs(rx - (-84.0)) < 0.01);
    }
  }
}

TEST_CASE("empty database is White everywhere") {
  GeoDb db;
  auto grid = ChannelGrid::china_uhf();
  auto q = query_vacant_channels(db, {0, 0}, 20, {}, grid);
  CHECK(q.size() == 37);
  for (const auto& c : q) CHECK(c.region == Region::White);
  CHECK_THROWS_AS(classify_region(db, {0, 0}, 37, 20, {}, grid), RangeError);
}

TEST_CASE("transmitter location is Black; only its channel is affected") {
  GeoDb db;
  auto grid = ChannelGrid::china_uhf();
  PropagationConfig prop;
  db.register_service(service("tv10", 10, {1000, 2000}, 60), -84, prop, grid);
  CHECK(classify_region(db, {1000, 2000}, 10, 20, prop, grid) == Region::Black);
  auto q = query_vacant_channels(db, {1100, 2000}, 20, prop, grid);
  for (const auto& c : q) {
    CHECK(c.region == (c.channel_index == 10 ? Region::Black : Region::White));
    CHECK(c.region == classify_region(db, {1100, 2000}, c.channel_index, 20, prop, grid));
  }
}

TEST_CASE("radial sweep crosses Black-Grey-White at the analytic radii") {
  GeoDb db;
  auto grid = ChannelGrid::china_uhf();
  PropagationConfig prop;
  const int ch = 20;
  const double f = grid.channel(ch).center_mhz();
  db.register_service(service("tv", ch, {0, 0}, 60), -84, prop, grid);
  // Hand-derived crossovers: contour where 60 - L(d) = -84; CeNB reach where 20 - L(d) = -107.
  const double black = std::pow(10.0, (60 + 84 - friis_1m(f)) / 35.0);
  const double reach = std::pow(10.0, (20 + 107 - friis_1m(f)) / 35.0);
  const double white = black + reach + 1000.0;

  Region prev = Region::Black;
  double first_grey = -1, first_white = -1;
  for (double d = 0; d < 6000; d += 0.5) {
    Region r = classify_region(db, {d * 0.6, d * 0.8}, ch, 20, prop, grid);
    CHECK(r >= prev);
    if (r == Region::Grey && first_grey < 0) first_grey = d;
    if (r == Region::White && first_white < 0) first_white = d;
    prev = r;
  }
  CHECK(std::abs(first_grey - black) <= 0.5 + 1e-6);
  CHECK(std::abs(first_white - white) <= 0.5 + 1e-6);
  auto radii = region_radii(db, *db.find("tv"), 20, prop, grid);
  CHECK(radii.black_m == doctest::Approx(black).epsilon(1e-9));
  CHECK(radii.white_m == doctest::Approx(white).epsilon(1e-9));
}

TEST_CASE("adjacent-channel services do not change the region") {
  GeoDb db;
  auto grid = ChannelGrid::china_uhf();
  db.register_service(service("tv", 5, {0, 0}, 70), -84, {}, grid);
  CHECK(classify_region(db, {0, 0}, 4, 20, {}, grid) == Region::White);
  CHECK(classify_region(db, {0, 0}, 6, 20, {}, grid) == Region::White);
}

TEST_CASE("version counts every mutation") {
  GeoDb db;
  auto grid = ChannelGrid::china_uhf();
  CHECK(db.version() == 0);
  db.register_service(service("a", 1, {}, 60), -84, {}, grid);
  db.register_service(service("a", 2, {}, 60), -84, {}, grid);
  CHECK(db.version() == 2);
  CHECK(db.size() == 1);
  CHECK_FALSE(db.remove("zzz"));
  CHECK(db.version() == 2);
  CHECK(db.remove("a"));
  CHECK(db.version() == 3);
  CHECK_THROWS_AS(db.upsert(GeoRecord{service("b", 1, {}, 60), -84, 0.0}), ValidationError);
  CHECK_THROWS_AS(db.upsert(GeoRecord{service("b", 1, {}, -90), -84, 10.0}), ValidationError);
}

TEST_CASE("persistence round trip") {
  auto grid = ChannelGrid::china_uhf();
  auto path = temp_path("tvws_geodb.csv");
  GeoDb empty;
  save_geodb(path, empty);
  CHECK(load_geodb(path, grid) == empty);

  GeoDb db;
  db.grey_margin_m = 750;
  db.register_service(service("zeta", 3, {10.5, -3}, 55), -84, {}, grid);
  db.register_service(service("alpha", 30, {-400, 20}, 62), -80, {}, grid);
  auto d = service("mid", 12, {7, 7}, 50);
  d.standard = TvStandard::DigitalDtmb;
  db.register_service(d, -90, {}, grid);
  save_geodb(path, db);
  auto back = load_geodb(path, grid);
  CHECK(back == db);
  CHECK(back.version() == 3);
  std::vector<std::string> keys;
  for (const auto& [k, v] : back.records()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"alpha", "mid", "zeta"});
  std::filesystem::remove(path);
}

TEST_CASE("loader computes blank radii and rejects duplicates by name") {
  auto grid = ChannelGrid::china_uhf();
  auto path = temp_path("tvws_geodb_bad.csv");
  {
    std::ofstream out(path);
    out << "id,standard,channel,x_m,y_m,eirp_dbm,height_m,required_rx_dbm,protected_radius_m\n"
        << "a,PAL-D,4,0,0,60,30,-84,\n";
  }
  auto db = load_geodb(path, grid);
  GeoRecord probe{service("a", 4, {}, 60), -84, 0};
  CHECK(db.find("a")->protected_radius_m == doctest::Approx(protected_radius(probe, {}, grid)));
  {
    std::ofstream out(path);
    out << "id,standard,channel,x_m,y_m,eirp_dbm,height_m,required_rx_dbm,protected_radius_m\n"
        << "tvA,PAL-D,4,0,0,60,30,-84,\n"
        << "tvB,PAL-D,5,0,0,60,30,-84,\n"
        << "tvA,PAL-D,6,0,0,60,30,-84,\n";
  }
  try {
    load_geodb(path, grid);
    FAIL("duplicate key accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("tvA") != std::string::npos);
  }
  {
    std::ofstream out(path);
    out << "id,standard,channel,x_m,y_m,eirp_dbm,height_m,required_rx_dbm,protected_radius_m\n"
        << "a,PAL-D,4,0,zero,60,30,-84,\n";
  }
  try {
    load_geodb(path, grid);
    FAIL("malformed row accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::filesystem::remove(path);
}

TEST_CASE("separation table bilinear lookup") {
  SeparationTable t{{10, 20}, {10, 30}, {{100, 300}, {200, 600}}};
  CHECK(required_separation(20, 30, t).distance_m == 600);
  CHECK_FALSE(required_separation(20, 30, t).clamped);
  CHECK(required_separation(15, 20, t).distance_m == doctest::Approx((100 + 300 + 200 + 600) / 4.0));
  auto low = required_separation(0, 20, t);
  CHECK(low.clamped);
  CHECK(low.distance_m == doctest::Approx(200));
  CHECK(required_separation(25, 40, t).distance_m == 600);
  SeparationTable bad{{10, 20}, {10, 30}, {{100, 300}, {50, 600}}};
  CHECK_THROWS_AS(required_separation(15, 20, bad), ValidationError);
}

TEST_CASE("default separation table is monotone and matches the committed file") {
  auto t = default_separation_table();
  CHECK_NOTHROW(t.validate());
  // Hand values: 10^((P + 20 log10(h/10) + 107 - 29.3497) / 35), rounded.
  CHECK(t.distance_m[1][0] == 617);
  CHECK(t.distance_m[3][2] == 6399);
  double prev = 0;
  for (double p = 5; p <= 45; p += 0.5) {
    double d = required_separation(p, 25, t).distance_m;
    CHECK(d >= prev);
    prev = d;
  }
  auto file = load_separation_table(std::string(TVWS_DATA_DIR) + "/separation_table.csv");
  CHECK(file.powers_dbm == t.powers_dbm);
  CHECK(file.heights_m == t.heights_m);
  CHECK(file.distance_m == t.distance_m);
}
