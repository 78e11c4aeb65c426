// Command-line front end: deterministic end-to-end runs, loss sweeps and
// preset inspection.  Exit codes: 0 success, 2 synchronization failure,
// 3 configuration error.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qkdsim/harness.hpp"

namespace {

struct CommonOpts {
  std::string config_file;
  std::string preset_name;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> sync_len;
  std::optional<double> duration_s;
  std::optional<double> rate_hz;
  std::optional<double> gate_window_ps;
};

void add_common(CLI::App* app, CommonOpts& o, bool require_source) {
  auto* cfg = app->add_option("--config", o.config_file, "config file (key = value sections)");
  auto* pre = app->add_option("--preset", o.preset_name,
                              "named preset: intrinsic_qber, longrun_polcomp, skr_vs_loss, "
                              "fig4, spad_projection");
  if (require_source) {
    cfg->excludes(pre);
    pre->excludes(cfg);
  }
  app->add_option("--seed", o.seed, "master seed override");
  app->add_option("--out", o.out_dir, "output directory for CSV/report files");
  app->add_option("--sync-len", o.sync_len, "sync prefix length L override");
  app->add_option("--duration-s", o.duration_s, "run duration in seconds");
  app->add_option("--rate-hz", o.rate_hz, "pulse rate override");
  app->add_option("--gate-window-ps", o.gate_window_ps, "detection gate window override");
}

qkdsim::ScenarioConfig load_config(const CommonOpts& o) {
  qkdsim::ScenarioConfig cfg;
  if (!o.config_file.empty()) {
    cfg = qkdsim::parse_config_file(o.config_file);
  } else if (!o.preset_name.empty()) {
    cfg = qkdsim::preset(o.preset_name);
  } else {
    throw qkdsim::ConfigError("either --config or --preset is required");
  }
  if (o.seed) cfg.master_seed = *o.seed;
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (o.sync_len) cfg.tx.sync_len = std::uint64_t(*o.sync_len);
  if (o.duration_s) cfg.duration_s = *o.duration_s;
  if (o.rate_hz) cfg.tx.rate_hz = *o.rate_hz;
  if (o.gate_window_ps) cfg.rx.gate_window_ps = *o.gate_window_ps;
  return cfg;
}

std::vector<double> parse_loss_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = std::stod(item, &used);
    if (used != item.size()) throw qkdsim::ConfigError("bad loss value: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw qkdsim::ConfigError("--loss-db: no values given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polarization-encoded decoy-state QKD link simulator"};
  app.require_subcommand(1);

  CommonOpts run_opts, sweep_opts, preset_opts;
  std::optional<double> run_loss;
  std::string sweep_losses;

  auto* run_cmd = app.add_subcommand("run", "single end-to-end run");
  add_common(run_cmd, run_opts, true);
  run_cmd->add_option("--loss-db", run_loss, "set total channel loss (replaces fiber+VOA)");

  auto* sweep_cmd = app.add_subcommand("sweep", "key rate versus channel loss");
  add_common(sweep_cmd, sweep_opts, true);
  sweep_cmd->add_option("--loss-db", sweep_losses, "comma-separated loss list in dB")
      ->required();

  auto* preset_cmd = app.add_subcommand("preset", "print a preset config");
  std::string preset_positional;
  preset_cmd->add_option("name", preset_positional, "preset name")->required();
  add_common(preset_cmd, preset_opts, false);
  preset_cmd->add_option("--loss-db", run_loss, "set total channel loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(run_cmd)) {
      qkdsim::ScenarioConfig cfg = load_config(run_opts);
      if (run_loss) {
        cfg.channel.fiber_km = 0;
        cfg.channel.voa_db = *run_loss;
      }
      qkdsim::RunReport rep = qkdsim::run_and_write(cfg);
      qkdsim::write_run_summary(std::cout, cfg, rep);
      return 0;
    }
    if (app.got_subcommand(sweep_cmd)) {
      qkdsim::ScenarioConfig cfg = load_config(sweep_opts);
      auto losses = parse_loss_list(sweep_losses);
      auto result = qkdsim::sweep_loss(cfg, losses);
      qkdsim::write_keyrate_csv(std::cout, result.points);
      for (const auto& f : result.failures) std::cerr << "failed point: " << f << "\n";
      return 0;
    }
    if (app.got_subcommand(preset_cmd)) {
      CommonOpts o = preset_opts;
      o.preset_name = preset_positional;
      o.config_file.clear();
      qkdsim::ScenarioConfig cfg = load_config(o);
      if (run_loss) {
        cfg.channel.fiber_km = 0;
        cfg.channel.voa_db = *run_loss;
      }
      std::cout << qkdsim::serialize_config(cfg);
      return 0;
    }
  } catch (const qkdsim::SyncFailure& e) {
    std::cerr << "sync failure: " << e.what() << "\n";
    return 2;
  } catch (const qkdsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
