#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tvws/harness.hpp"

using namespace tvws;
namespace fs = std::filesystem;

namespace {

const std::string kHandover = std::string(TVWS_DATA_DIR) + "/scenarios/handover.ini";

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tvws_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write(const fs::path& path, const std::string& body) {
  std::ofstream(path) << body;
  return path.string();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Copy of the handover scenario inputs next to a custom scenario file.
fs::path scenario_dir(const std::string& name) {
  auto dir = scratch(name);
  for (const char* f : {"handover_transmitters.csv", "handover_geodb.csv"}) {
    fs::copy_file(fs::path(TVWS_DATA_DIR) / "scenarios" / f, dir / f);
  }
  return dir;
}

const std::string kQuietBase =
    "scenario.seed = 3\n"
    "grid.low_mhz = 702\n"
    "grid.high_mhz = 806\n"
    "grid.exclude =\n"
    "sensing.threshold_dbm = -114.9\n"
    "cenb.a.x_m = 0\n"
    "cenb.a.y_m = 0\n"
    "cenb.a.block = 0-2\n";

}  // namespace

TEST_CASE("minimal scenario gets documented defaults") {
  auto dir = scratch("minimal");
  auto path = write(dir / "min.ini", "scenario.seed = 5\ncenb.x.x_m = 1\ncenb.x.y_m = 2\n");
  auto cfg = load_scenario(path);
  CHECK(cfg.seed == 5);
  CHECK(cfg.duration_ms == 2000);
  CHECK(cfg.grid().size() == 37);
  CHECK(cfg.detector.target_pfa == 0.001);
  CHECK(cfg.policy.confirm_frames == 2);
  CHECK(cfg.packets_per_subframe == 10);
  REQUIRE(cfg.cenbs.size() == 1);
  CHECK(cfg.cenbs[0].location == Point{1, 2});
  CHECK(cfg.cenbs[0].power_dbm == 20);
  CHECK_FALSE(cfg.study.enabled);
}

TEST_CASE("scenario errors name the key") {
  auto dir = scratch("errors");
  auto expect = [&](const std::string& body, const std::string& needle) {
    auto path = write(dir / "bad.ini", body);
    try {
      load_scenario(path);
      FAIL("accepted: " << body);
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  expect("scenario.seed = 1\ncenb.a.x_m = 0\ncenb.a.y_m = 0\nscenario.fooo = 3\n", "fooo");
  expect("scenario.duration_ms = 2000\ncenb.a.x_m = 0\ncenb.a.y_m = 0\n", "scenario.seed");
  expect("scenario.seed = 1\nscenario.duration_ms = 1995\ncenb.a.x_m = 0\ncenb.a.y_m = 0\n", "duration_ms");
  expect("scenario.seed = 1\nfiles.transmitters = nowhere.csv\ncenb.a.x_m = 0\ncenb.a.y_m = 0\n", "files.transmitters");
  expect("scenario.seed = 1\ncenb.a.x_m = zero\ncenb.a.y_m = 0\n", "cenb.a.x_m");
  expect("scenario.seed = 1\ncenb.a.x_m = 0\n", "cenb.a.y_m");
}

TEST_CASE("quiet band: no loss and no handover") {
  auto dir = scratch("quiet");
  auto cfg = load_scenario(write(dir / "quiet.ini", kQuietBase));
  auto m = run_simulation(cfg);
  REQUIRE(m.plr.size() == 200);
  for (const auto& s : m.plr) {
    CHECK(s.plr() == 0.0);
    CHECK(s.lost + s.delivered == s.offered);
  }
  CHECK(m.handovers.empty());
  for (std::size_t i = 0; i < m.plr.size(); ++i) CHECK(m.plr[i].t_ms == static_cast<std::int64_t>(i) * 10);
}

TEST_CASE("Black initial block refuses to start") {
  auto dir = scenario_dir("black");
  // tv_b's contour covers a CeNB placed next to it.
  auto cfg = load_scenario(write(dir / "s.ini", kQuietBase + "files.geodb = handover_geodb.csv\n"
                                                             "files.transmitters = handover_transmitters.csv\n"
                                                             "cenb.b.x_m = 0\ncenb.b.y_m = 75\ncenb.b.block = 4-6\n"));
  CHECK_THROWS_AS(run_simulation(cfg), StartupError);
}

TEST_CASE("handover scenario recovers within 50 ms of the TV switching on") {
  auto cfg = load_scenario(kHandover);
  auto m = run_simulation(cfg);
  REQUIRE(m.plr.size() == 200);
  for (std::size_t i = 0; i < 100; ++i) CHECK(m.plr[i].plr() == 0.0);
  std::size_t lossy = 0;
  for (std::size_t i = 100; i < 200; ++i) {
    if (m.plr[i].plr() > 0) {
      ++lossy;
      CHECK(i < 105);
    }
  }
  CHECK(lossy >= 1);
  CHECK(lossy <= 5);
  REQUIRE(m.handovers.size() == 1);
  const auto& h = m.handovers[0];
  CHECK(h.event.cenb_id == "cenb1");
  CHECK_FALSE(h.event.aborted);
  CHECK(h.onset_ms == 1000);
  CHECK(h.event.restore_ms - 1000 <= 50);
  CHECK(h.latency_ms() <= 50);
  CHECK(h.event.to == ChannelBlock{2, 3});
  for (const auto& s : m.plr) CHECK(s.lost + s.delivered == s.offered);
}

TEST_CASE("decisions never use reports from their own frame") {
  auto cfg = load_scenario(kHandover);
  auto m = run_simulation(cfg);
  for (const auto& h : m.handovers) {
    REQUIRE(h.detect_ms);
    CHECK(*h.detect_ms < h.event.decision_ms);
  }
}

TEST_CASE("same seed gives byte-identical reports") {
  auto cfg = load_scenario(kHandover);
  auto a = scratch("det_a");
  auto b = scratch("det_b");
  emit_report(run_simulation(cfg), a);
  emit_report(run_simulation(cfg), b);
  for (const char* f : {"plr.csv", "events.csv", "handover_summary.txt"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "plr.csv").find("sample_index,t_ms,plr\n") == 0);
}

TEST_CASE("empty metrics write header-only files") {
  auto dir = scratch("empty");
  emit_report(MetricsSeries{}, dir);
  CHECK(slurp(dir / "plr.csv") == "sample_index,t_ms,plr\n");
  CHECK(slurp(dir / "events.csv") == "t_ms,cenb_id,event,detail\n");
  CHECK(slurp(dir / "handover_summary.txt").find("handovers=0") == 0);
  CHECK_FALSE(fs::exists(dir / "acir_curve.csv"));
}

TEST_CASE("ASM assigns blocks at start when none is configured") {
  auto dir = scratch("asm");
  auto cfg = load_scenario(write(dir / "s.ini", "scenario.seed = 9\nscenario.duration_ms = 100\n"
                                                "grid.low_mhz = 702\ngrid.high_mhz = 806\ngrid.exclude =\n"
                                                "sensing.threshold_dbm = -114.9\n"
                                                "cenb.a.x_m = 0\ncenb.a.y_m = 0\n"
                                                "cenb.b.x_m = 100\ncenb.b.y_m = 0\n"));
  auto m = run_simulation(cfg);
  REQUIRE_FALSE(m.events.empty());
  CHECK(m.events.front().kind == EventKind::AsmEpoch);
  CHECK(m.events.front().detail == "epoch=0 a=0-2 b=3-5");
  CHECK(m.bandwidth.front().block == ChannelBlock{0, 3});
  CHECK(m.bandwidth.front().bandwidth_mhz == 20);
}
