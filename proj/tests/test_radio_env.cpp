#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tvws/radio_env.hpp"

using namespace tvws;

namespace {

TvTransmitter pal_tx(int channel) {
  TvTransmitter tx;
  tx.id = "tv";
  tx.standard = TvStandard::AnalogPalD;
  tx.channel_index = channel;
  return tx;
}

bool is_local_max(const PowerSpectrum& s, double freq_mhz) {
  auto i = *s.bin_containing(freq_mhz);
  return s.bins_dbm[i] > s.bins_dbm[i - 1] && s.bins_dbm[i] > s.bins_dbm[i + 1];
}

}  // namespace

TEST_CASE("china uhf grid has 37 channels and skips the reallocated band") {
  auto grid = build_channel_grid(FrequencyBand::make(470, 806), 8, {FrequencyBand::make(566, 606)});
  CHECK(grid.size() == 37);
  CHECK(grid == ChannelGrid::china_uhf());
  const FrequencyBand gap = FrequencyBand::make(566, 606);
  for (const auto& ch : grid.channels()) {
    CHECK_FALSE(FrequencyBand::make(ch.low_mhz, ch.high_mhz).overlaps(gap));
    CHECK(ch.low_mhz >= 470);
    CHECK(ch.high_mhz <= 806);
  }
  CHECK(grid.channel(11).high_mhz == 566);
  CHECK(grid.channel(12).low_mhz == 606);
  CHECK(grid.channel(36).high_mhz == 806);
}

TEST_CASE("grid without exclusions") {
  CHECK(build_channel_grid(FrequencyBand::make(470, 806), 8).size() == 42);
  auto one = build_channel_grid(FrequencyBand::make(470, 478), 8);
  REQUIRE(one.size() == 1);
  CHECK(one.channel(0).low_mhz == 470);
  CHECK(one.channel(0).index == 0);
}

TEST_CASE("grid alignment and range errors") {
  CHECK_THROWS_AS(build_channel_grid(FrequencyBand::make(470, 806), 8, {FrequencyBand::make(567, 606)}),
                  AlignmentError);
  CHECK_THROWS_AS(build_channel_grid(FrequencyBand::make(470, 475), 8), AlignmentError);
  CHECK_THROWS_AS(FrequencyBand::make(500, 470), ValidationError);
  CHECK_THROWS_AS(FrequencyBand::make(0, 470), ValidationError);
  CHECK_THROWS_AS(ChannelGrid::china_uhf().channel(37), RangeError);
  auto grid = ChannelGrid::china_uhf();
  CHECK(grid.index_of(470.0) == 0);
  CHECK(grid.index_of(580.0) == std::nullopt);
  CHECK(grid.index_of(805.9) == 36);
}

TEST_CASE("PAL-D signature has carrier peaks at the feature offsets") {
  auto grid = build_channel_grid(FrequencyBand::make(698, 706), 8);
  auto s = synthesize_tv_spectrum(pal_tx(0), grid, 200, 0.0);
  CHECK(s.size() == 40);
  CHECK(is_local_max(s, 699.25));
  CHECK(is_local_max(s, 703.68));
  CHECK(is_local_max(s, 705.75));
  // Oracle: 10*log10(0.8).
  CHECK(s.bins_dbm[*s.bin_containing(699.25)] == doctest::Approx(-0.969100130080564).epsilon(1e-12));
  CHECK(std::abs(linear_to_db(s.total_linear_mw())) < 0.1);
}

TEST_CASE("PAL-D on a grid channel is confined to that channel") {
  auto grid = ChannelGrid::china_uhf();
  auto s = synthesize_tv_spectrum(pal_tx(5), grid, 200, -20.0);
  const auto& ch = grid.channel(5);
  double in = 0.0, out = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double f = s.bin_center_mhz(i);
    (f > ch.low_mhz && f < ch.high_mhz ? in : out) += db_to_linear(s.bins_dbm[i]);
  }
  CHECK(out == 0.0);
  CHECK(linear_to_db(in) == doctest::Approx(-20.0).epsilon(1e-9));
}

TEST_CASE("transmitter off renders the floor sentinel") {
  auto grid = build_channel_grid(FrequencyBand::make(698, 706), 8);
  auto s = synthesize_tv_spectrum(pal_tx(0), grid, 200, -kInf);
  for (double b : s.bins_dbm) CHECK(b == kFloorDbm);
}

TEST_CASE("DTMB renders flat") {
  auto grid = build_channel_grid(FrequencyBand::make(698, 706), 8);
  auto tx = pal_tx(0);
  tx.standard = TvStandard::DigitalDtmb;
  auto s = synthesize_tv_spectrum(tx, grid, 200, 0.0);
  for (double b : s.bins_dbm) CHECK(b == doctest::Approx(-10.0 * std::log10(40.0)));
}

TEST_CASE("rbw coarser than the carrier spacing is rejected") {
  auto grid = build_channel_grid(FrequencyBand::make(698, 706), 8);
  CHECK_THROWS_AS(synthesize_tv_spectrum(pal_tx(0), grid, 4000, 0.0), ResolutionError);
  CHECK_THROWS_AS(synthesize_tv_spectrum(pal_tx(0), grid, 2100, 0.0), ResolutionError);
  CHECK_NOTHROW(synthesize_tv_spectrum(pal_tx(0), grid, 1000, 0.0));
  CHECK_THROWS_AS(synthesize_tv_spectrum(pal_tx(0), grid, 300, 0.0), ResolutionError);
}

TEST_CASE("path loss reference and slope") {
  PropagationConfig cfg;
  // Friis oracle at 700 MHz, 1 m: 20*log10(4*pi*f/c).
  CHECK(path_loss(cfg, 1.0, 700) == doctest::Approx(29.349744022168508).epsilon(1e-12));
  cfg.ref_loss_db = 40.0;
  cfg.ref_distance_m = 5.0;
  CHECK(path_loss(cfg, 5.0, 700) == 40.0);
  CHECK(path_loss(cfg, 50.0, 700) == doctest::Approx(75.0).epsilon(1e-12));
  CHECK_THROWS_AS(path_loss(cfg, 0.0, 700), DomainError);
  CHECK_THROWS_AS(path_loss(cfg, -3.0, 700), DomainError);
  cfg.exponent = 1.5;
  CHECK_THROWS_AS(path_loss(cfg, 10.0, 700), ValidationError);
}

TEST_CASE("shadowing is deterministic per seed and call sequence") {
  PropagationConfig cfg;
  cfg.shadowing_sigma_db = 8.0;
  cfg.seed = 42;
  PathLossModel a(cfg), b(cfg);
  std::vector<double> sa, sb;
  for (int i = 0; i < 20; ++i) {
    sa.push_back(a.loss_db(100.0 + i, 700));
    sb.push_back(b.loss_db(100.0 + i, 700));
  }
  CHECK(sa == sb);
  cfg.seed = 43;
  PathLossModel c(cfg);
  CHECK(c.loss_db(100.0, 700) != sa[0]);
}

TEST_CASE("noise-only received spectrum sits at kTB plus noise figure") {
  auto grid = ChannelGrid::china_uhf();
  PathLossModel prop{PropagationConfig{}};
  auto s = received_spectrum({0, 0}, {}, 0, prop, grid, 200, 6.0);
  // Oracle: -174 + 10*log10(2e5) + 6.
  for (double b : s.bins_dbm) CHECK(b == doctest::Approx(-114.98970004336019).epsilon(1e-12));
}

TEST_CASE("zero path loss reproduces the synthesized spectrum plus noise") {
  auto grid = build_channel_grid(FrequencyBand::make(698, 706), 8);
  PropagationConfig cfg;
  cfg.ref_loss_db = 0.0;
  cfg.ref_distance_m = 1000.0;
  PathLossModel prop(cfg);
  auto tx = pal_tx(0);
  tx.eirp_dbm = -50.0;
  std::vector<TvTransmitter> txs{tx};
  auto got = received_spectrum({10, 0}, txs, 0, prop, grid, 200, 6.0);
  auto want = synthesize_tv_spectrum(tx, grid, 200, -50.0);
  const double noise = db_to_linear(thermal_noise_dbm(200, 6.0));
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(db_to_linear(got.bins_dbm[i]) ==
          doctest::Approx(db_to_linear(want.bins_dbm[i]) + noise).epsilon(1e-12));
  }
}

TEST_CASE("scheduled-off transmitter contributes nothing") {
  auto grid = ChannelGrid::china_uhf();
  PathLossModel prop{PropagationConfig{}};
  auto tx = pal_tx(3);
  tx.eirp_dbm = 60.0;
  tx.schedule = {{1000, 2000}};
  std::vector<TvTransmitter> txs{tx};
  auto noise_only = received_spectrum({100, 0}, {}, 500, prop, grid, 200);
  CHECK(received_spectrum({100, 0}, txs, 500, prop, grid, 200).bins_dbm == noise_only.bins_dbm);
  CHECK(received_spectrum({100, 0}, txs, 2000, prop, grid, 200).bins_dbm == noise_only.bins_dbm);
  CHECK(received_spectrum({100, 0}, txs, 1500, prop, grid, 200).bins_dbm != noise_only.bins_dbm);
}

TEST_CASE("received power superposes linearly") {
  auto grid = ChannelGrid::china_uhf();
  PathLossModel prop{PropagationConfig{}};
  auto a = pal_tx(4);
  a.eirp_dbm = 50;
  a.location = {300, 0};
  auto b = pal_tx(4);
  b.id = "b";
  b.eirp_dbm = 45;
  b.location = {0, -700};
  auto c = pal_tx(9);
  c.id = "c";
  c.eirp_dbm = 55;
  std::vector<TvTransmitter> both{a, b, c}, only_a{a}, only_bc{b, c};
  auto sum = received_signal_spectrum({0, 0}, both, 0, prop, grid, 200);
  auto sa = received_signal_spectrum({0, 0}, only_a, 0, prop, grid, 200);
  auto sbc = received_signal_spectrum({0, 0}, only_bc, 0, prop, grid, 200);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    double want = db_to_linear(sa.bins_dbm[i]) + db_to_linear(sbc.bins_dbm[i]);
    double got = db_to_linear(sum.bins_dbm[i]);
    CHECK(std::abs(got - want) <= 1e-9 * std::max(want, 1e-300));
  }
}

TEST_CASE("received power is non-increasing in distance without shadowing") {
  auto grid = ChannelGrid::china_uhf();
  PathLossModel prop{PropagationConfig{}};
  auto tx = pal_tx(20);
  tx.eirp_dbm = 60;
  std::vector<TvTransmitter> txs{tx};
  double prev = kInf;
  for (double d : {0.0, 0.5, 1.0, 2.0, 10.0, 100.0, 1000.0, 5000.0, 20000.0}) {
    double p = received_signal_spectrum({d, 0}, txs, 0, prop, grid, 200).total_linear_mw();
    CHECK(p <= prev);
    prev = p;
  }
}

TEST_CASE("schedule parsing and activity") {
  auto s = parse_schedule("0:100; 200:");
  REQUIRE(s.size() == 2);
  CHECK(s[1].off_ms == kForeverMs);
  CHECK(format_schedule(s) == "0:100;200:");
  auto tx = pal_tx(0);
  tx.schedule = s;
  CHECK(tx.active_at(0));
  CHECK_FALSE(tx.active_at(100));
  CHECK_FALSE(tx.active_at(150));
  CHECK(tx.active_at(1'000'000));
  tx.schedule = {{100, 300}, {200, 400}};
  CHECK_THROWS_AS(tx.validate(ChannelGrid::china_uhf()), ValidationError);
  CHECK_THROWS_AS(parse_schedule("5"), ValidationError);
}

TEST_CASE("transmitter CSV round trip and line-numbered errors") {
  auto dir = std::filesystem::temp_directory_path();
  auto path = (dir / "tvws_tx_roundtrip.csv").string();
  auto grid = ChannelGrid::china_uhf();
  auto a = pal_tx(3);
  a.eirp_dbm = 57.5;
  a.location = {12.5, -40};
  a.schedule = {{1000, kForeverMs}};
  auto b = pal_tx(30);
  b.id = "dtmb1";
  b.standard = TvStandard::DigitalDtmb;
  std::vector<TvTransmitter> txs{a, b};
  save_transmitters(path, txs);
  CHECK(load_transmitters(path, grid) == txs);

  {
    std::ofstream out(path);
    out << "id,standard,channel,x_m,y_m,eirp_dbm,height_m,schedule\n"
        << "a,PAL-D,3,0,0,50,30,\n"
        << "b,PAL-D,99,0,0,50,30,\n";
  }
  try {
    load_transmitters(path, grid);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::filesystem::remove(path);
}
