#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "tvws/harness.hpp"
#include "tvws/occupancy.hpp"

using namespace tvws;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<double> power_range(double lo, double hi, double step) {
  if (!(step > 0) || hi < lo) throw ConfigError("empty power range");
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double p = lo + i * step;
    if (p > hi + 1e-9) break;
    out.push_back(p);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ChannelGrid grid_from(double low, double high, double width, const std::string& exclude) {
  std::vector<FrequencyBand> ex;
  for (const auto& part : split(exclude, ';')) {
    const auto p = trim(part);
    if (p.empty()) continue;
    const auto dash = p.find('-');
    if (dash == std::string_view::npos) throw ConfigError("--exclude expects low-high ranges");
    ex.push_back(FrequencyBand::make(parse_double(p.substr(0, dash)), parse_double(p.substr(dash + 1))));
  }
  return ChannelGrid::build(FrequencyBand::make(low, high), width, ex);
}

struct GridOptions {
  double low = 470, high = 806, width = 8;
  std::string exclude = "566-606";

  void attach(CLI::App* app) {
    app->add_option("--grid-low", low, "Grid low edge (MHz)")->capture_default_str();
    app->add_option("--grid-high", high, "Grid high edge (MHz)")->capture_default_str();
    app->add_option("--channel-mhz", width, "Channel width (MHz)")->capture_default_str();
    app->add_option("--exclude", exclude, "Excluded ranges, low-high;low-high")->capture_default_str();
  }
  ChannelGrid grid() const { return grid_from(low, high, width, exclude); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TV white space TD-LTE simulator"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a scenario and write its metrics");
  std::string scenario_path;
  std::string sim_out;
  sim->add_option("scenario", scenario_path, "Scenario INI file")->required();
  sim->add_option("--out", sim_out, "Output directory (overrides scenario.output_dir)");

  // roc
  auto* roc = app.add_subcommand("roc", "Calibrate the detector or estimate its ROC");
  std::string detector_path;
  bool calibrate = false;
  std::uint64_t roc_trials = 0;
  std::uint64_t roc_seed = 1;
  double p_lo = -130, p_hi = -110, p_step = 1;
  std::string roc_out;
  unsigned roc_workers = 1;
  roc->add_option("detector", detector_path, "Detector calibration CSV")->required();
  roc->add_flag("--calibrate", calibrate, "Recompute the threshold and write the calibration file");
  roc->add_option("--trials", roc_trials, "Monte Carlo trials (default 100000 to calibrate, 10000 for ROC)");
  roc->add_option("--seed", roc_seed, "RNG seed")->capture_default_str();
  roc->add_option("--power-min", p_lo, "Lowest received PAL-D power (dBm)")->capture_default_str();
  roc->add_option("--power-max", p_hi, "Highest received PAL-D power (dBm)")->capture_default_str();
  roc->add_option("--power-step", p_step, "Power step (dB)")->capture_default_str();
  roc->add_option("--out", roc_out, "Output file (calibration CSV or roc.csv)");
  roc->add_option("--workers", roc_workers, "Worker threads")->capture_default_str();

  // acir
  auto* acir = app.add_subcommand("acir", "Run the ACIR sweep and pick the guard band");
  std::string study_path;
  std::string acir_out = "out/acir";
  acir->add_option("study", study_path, "Study INI file")->required();
  acir->add_option("--out", acir_out, "Output directory")->capture_default_str();

  // geodb
  auto* geo = app.add_subcommand("geodb", "Geo-location database queries");
  geo->require_subcommand(1);
  GridOptions geo_grid;
  std::string db_path;
  double qx = 0, qy = 0, q_eirp = 20;
  auto* geo_query = geo->add_subcommand("query", "Region of every channel at a location");
  geo_query->add_option("db", db_path, "Database CSV")->required();
  geo_query->add_option("--x", qx, "x (m)")->required();
  geo_query->add_option("--y", qy, "y (m)")->required();
  geo_query->add_option("--eirp", q_eirp, "CeNB maximum EIRP (dBm)")->capture_default_str();
  geo_grid.attach(geo_query);
  auto* geo_show = geo->add_subcommand("show", "List the registered services");
  geo_show->add_option("db", db_path, "Database CSV")->required();
  geo_grid.attach(geo_show);
  auto* geo_sep = geo->add_subcommand("separation", "Required separation for a WSD");
  double s_power = 20, s_height = 30;
  std::string table_path;
  geo_sep->add_option("--power", s_power, "WSD power (dBm)")->capture_default_str();
  geo_sep->add_option("--height", s_height, "WSD antenna height (m)")->capture_default_str();
  geo_sep->add_option("--table", table_path, "Separation table CSV (default: built-in)");

  // occupancy
  auto* occ = app.add_subcommand("occupancy", "Analyze a spectrum sweep trace");
  std::string trace_path, subbands_path, occ_out;
  std::optional<double> fixed_dbm;
  double pct = 10, margin = 6;
  std::int64_t interval_ms = 3'600'000;
  bool periodicity = false;
  GridOptions occ_grid;
  bool use_grid = false;
  occ->add_option("trace", trace_path, "Trace CSV")->required();
  occ->add_option("--subbands", subbands_path, "Subband table CSV");
  occ->add_option("--threshold-dbm", fixed_dbm, "Fixed occupancy threshold (dBm)");
  occ->add_option("--percentile", pct, "Noise-floor percentile")->capture_default_str();
  occ->add_option("--margin-db", margin, "Margin above the noise floor (dB)")->capture_default_str();
  occ->add_flag("--channels", use_grid, "Per-channel duty cycle and class over the grid");
  occ->add_flag("--periodicity", periodicity, "Detect a daily period in the band occupancy");
  occ->add_option("--interval-ms", interval_ms, "Aggregation interval for --periodicity")->capture_default_str();
  occ->add_option("--out", occ_out, "Output directory for CSV reports");
  occ_grid.attach(occ);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) {
      const auto cfg = load_scenario(scenario_path);
      const fs::path dir = sim_out.empty() ? cfg.output_dir : fs::path(sim_out);
      const auto metrics = run_simulation(cfg);
      emit_report(metrics, dir);
      std::cout << handover_summary(metrics) << "output: " << dir.string() << '\n';
    } else if (*roc) {
      auto cal = load_calibration(detector_path);
      const unsigned workers = std::max(1u, roc_workers);
      if (calibrate) {
        const auto trials = roc_trials ? roc_trials : 100000;
        const double thr = calibrate_threshold(cal.detector, cal.noise, trials, roc_seed, workers);
        cal.seed = roc_seed;
        cal.trials = trials;
        const auto out = roc_out.empty() ? detector_path : roc_out;
        save_calibration(out, cal);
        std::cout << "threshold_dbm=" << format_double(thr) << " trials=" << trials << " seed=" << roc_seed
                  << " -> " << out << '\n';
      } else {
        const auto trials = roc_trials ? roc_trials : 10000;
        const auto powers = power_range(p_lo, p_hi, p_step);
        const auto points = estimate_roc(cal.detector, cal.noise, powers, trials, roc_seed, workers);
        const auto out = roc_out.empty() ? std::string("roc.csv") : roc_out;
        write_roc_csv(out, points);
        for (const auto& p : points) {
          std::printf("%8.2f dBm  pd=%.5f  pfa=%.5f\n", p.power_dbm, p.pd, p.pfa);
        }
        std::cout << "output: " << out << '\n';
      }
    } else if (*acir) {
      std::uint64_t seed = 0;
      const auto study = load_study(study_path, &seed);
      const auto& ic = study.interference;
      const auto topo = build_topology(ic.isd_m, ic.tv_radius_m, ic.tv_offset);
      const auto curve = acir_sweep(topo, ic, study.acir_values(), study.snapshots, seed, study.workers);
      const auto map = study.guard_band_map ? load_guard_band_map(study.guard_band_map->string())
                                            : default_guard_band_map();
      const auto result = determine_guard_band(curve, map, study.loss_budget);
      fs::create_directories(acir_out);
      write_acir_csv((fs::path(acir_out) / "acir_curve.csv").string(), curve);
      write_text(fs::path(acir_out) / "guard_band.txt", result.summary() + "\n");
      std::cout << result.summary() << '\n' << "output: " << acir_out << '\n';
    } else if (*geo) {
      if (*geo_sep) {
        const auto table = table_path.empty() ? default_separation_table() : load_separation_table(table_path);
        const auto r = required_separation(s_power, s_height, table);
        std::cout << "separation_m=" << format_double(r.distance_m) << (r.clamped ? " clamped" : "") << '\n';
      } else {
        const auto grid = geo_grid.grid();
        const auto db = load_geodb(db_path, grid);
        if (*geo_show) {
          std::cout << "version=" << db.version() << " services=" << db.size() << '\n';
          for (const auto& [id, rec] : db.records()) {
            std::printf("%-12s %-6s ch=%-3d x=%.1f y=%.1f eirp=%.1f dBm contour=%.1f m\n", id.c_str(),
                        to_string(rec.service.standard).c_str(), rec.service.channel_index,
                        rec.service.location.x_m, rec.service.location.y_m, rec.service.eirp_dbm,
                        rec.protected_radius_m);
          }
        } else {
          for (const auto& cr : query_vacant_channels(db, {qx, qy}, q_eirp, {}, grid)) {
            const auto& ch = grid.channel(cr.channel_index);
            std::printf("ch=%-3d %.0f-%.0f MHz %s\n", cr.channel_index, ch.low_mhz, ch.high_mhz,
                        to_string(cr.region).c_str());
          }
        }
      }
    } else if (*occ) {
      const auto m = ingest_trace(trace_path);
      ThresholdRule rule;
      if (fixed_dbm) rule = ThresholdRule::fixed(*fixed_dbm);
      rule.noise_percentile = pct;
      rule.margin_db = margin;
      std::cout << "# trace: " << m.meta().site << " sweeps=" << m.rows() << " bins=" << m.cols()
                << " rbw_khz=" << format_double(m.meta().rbw_khz) << '\n';
      if (!occ_out.empty()) fs::create_directories(occ_out);
      if (!subbands_path.empty()) {
        const auto subbands = load_subbands(subbands_path);
        const auto summary = summarize_band(m, subbands, rule);
        std::cout << format_summary_text(summary);
        if (!occ_out.empty()) write_summary_csv((fs::path(occ_out) / "subband_summary.csv").string(), summary);
      }
      if (use_grid) {
        const auto grid = occ_grid.grid();
        const auto duty = duty_cycle(m, grid, rule);
        std::string csv = "# threshold: " + rule.to_string() + "\nchannel,low_mhz,high_mhz,occupancy,threshold_dbm,class,never_seen\n";
        std::cout << "# threshold: " << rule.to_string() << "\n";
        for (const auto& ch : grid.channels()) {
          const auto i = static_cast<std::size_t>(ch.index);
          const double noise = duty.threshold_dbm[i] - (rule.fixed_dbm ? 0.0 : rule.margin_db);
          const auto cls = classify_channel(m, grid, ch.index, noise);
          std::printf("ch=%-3d %.0f-%.0f MHz occupancy=%.4f class=%s%s\n", ch.index, ch.low_mhz, ch.high_mhz,
                      duty.occupancy[i], to_string(cls.cls).c_str(), cls.never_seen ? " never-seen" : "");
          csv += std::to_string(ch.index) + "," + format_double(ch.low_mhz) + "," + format_double(ch.high_mhz) +
                 "," + format_double(duty.occupancy[i]) + "," + format_double(duty.threshold_dbm[i]) + "," +
                 to_string(cls.cls) + "," + (cls.never_seen ? "1" : "0") + "\n";
        }
        std::printf("band_average=%.4f\n", duty.band_average);
        if (!occ_out.empty()) write_text(fs::path(occ_out) / "channel_occupancy.csv", csv);
      }
      if (periodicity) {
        const auto series = occupancy_series(m, m.span(), rule, interval_ms);
        const auto p = detect_periodicity(series, interval_ms);
        std::cout << "period_hours=" << format_double(p.period_hours) << " strength=" << format_double(p.strength)
                  << (p.significant ? "" : " not-significant") << '\n';
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
