#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qkdsim/harness.hpp"
#include "qkdsim/longrun.hpp"

using namespace qkdsim;

namespace {

// Small, fast scenario that still locks the clock (needs >= 1000 tags
// spanning >= 1 ms): 1 MHz slots, 0.2 s, lossless by default.
ScenarioConfig small_scenario() {
  ScenarioConfig cfg;
  cfg.tx.rate_hz = 1e6;
  cfg.tx.sync_len = 10000;
  cfg.tx.comp_string_len = 2000;
  cfg.channel.fiber_km = 0;
  cfg.channel.voa_db = 0;
  cfg.channel.drift_rate_rad_per_s = 0;
  cfg.duration_s = 0.2;
  cfg.master_seed = 11;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

}  // namespace

TEST_CASE("config serialization round-trips") {
  ScenarioConfig cfg = preset("longrun_polcomp");
  cfg.output_dir = "out/some_dir";
  std::string text = serialize_config(cfg);
  ScenarioConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.tx.rate_hz == cfg.tx.rate_hz);
  CHECK(back.channel.voa_db == cfg.channel.voa_db);
  CHECK(back.randomize_channel_unitary == cfg.randomize_channel_unitary);
  CHECK(back.polcomp.enabled == cfg.polcomp.enabled);
  CHECK(back.output_dir == cfg.output_dir);
}

TEST_CASE("comments, blank lines and exponent notation parse") {
  auto cfg = parse_config(
      "# experiment file\n"
      "[transmitter]\n"
      "sync_len = 1e6   # one million\n"
      "\n"
      "[run]\n"
      "duration_s = 0.5\n");
  CHECK(cfg.tx.sync_len == 1000000);
  CHECK(cfg.duration_s == 0.5);
}

TEST_CASE("unknown keys and sections are hard errors with a line number") {
  CHECK_THROWS_AS(parse_config("[transmitter]\nrate_khz = 50\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[transmitterz]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rate_hz = 50\n"), ConfigError);  // key before any section
  CHECK_THROWS_AS(parse_config("[transmitter]\nrate_hz 50\n"), ConfigError);  // missing '='
  CHECK_THROWS_AS(parse_config("[transmitter\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[transmitter]\nmu1 = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[transmitter]\nsync_len = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[polcomp]\nenabled = maybe\n"), ConfigError);
  try {
    parse_config("[transmitter]\nrate_khz = 50\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("presets carry the intended experiment settings") {
  auto iq = preset("intrinsic_qber");
  CHECK(iq.channel.total_loss_db() == Catch::Approx(11.0));
  CHECK(iq.rx.p_z_bob == 0.5);
  CHECK_FALSE(iq.polcomp.enabled);
  CHECK(iq.channel.drift_rate_rad_per_s == 0.0);

  auto lr = preset("longrun_polcomp");
  CHECK(lr.channel.total_loss_db() == Catch::Approx(19.0));
  CHECK(lr.polcomp.enabled);
  CHECK(lr.randomize_channel_unitary);

  auto spad = preset("spad_projection");
  CHECK(spad.rx.eta[0] == 0.15);
  CHECK(spad.rx.dark_hz == 500.0);
  CHECK(spad.rx.hold_off_us == 20.0);

  // `fig4` is an alias of the loss-sweep preset
  CHECK(serialize_config(preset("fig4")) == serialize_config(preset("skr_vs_loss")));

  CHECK_THROWS_AS(preset("fig5"), ConfigError);
}

TEST_CASE("full engine smoke run: lock, audit conservation, determinism") {
  ScenarioConfig cfg = small_scenario();
  RunReport a = run_scenario(cfg);

  // clock locked on the true grid (1e6 ps slots, 1e-6 skew)
  CHECK(a.clock.peak_significance >= cfg.sync.corr_threshold);
  CHECK(a.clock.period_ps == Catch::Approx(1e6 * (1 + 1e-6)).epsilon(1e-6));
  CHECK(std::abs(a.clock.offset_ps) < 0.5e6);

  // every tag is accounted for exactly once
  CHECK(a.audit.tags_total == a.audit.accounted());
  CHECK(a.audit.key_sifted == std::uint64_t(a.counts.n_z() + a.counts.n_x()));
  CHECK(a.counts.n_z() > 0);
  CHECK(a.polcomp_log.size() > 0);

  // bit-identical rerun
  RunReport b = run_scenario(cfg);
  CHECK(a.keyrate.skr_inf == b.keyrate.skr_inf);
  CHECK(a.keyrate.skr_fk == b.keyrate.skr_fk);
  CHECK(a.counts.n_z_mu1 == b.counts.n_z_mu1);
  CHECK(a.counts.m_x_mu1 == b.counts.m_x_mu1);
  CHECK(a.audit.tags_total == b.audit.tags_total);

  // a different seed gives a different realization
  cfg.master_seed = 12;
  RunReport c = run_scenario(cfg);
  CHECK(c.counts.n_z_mu1 != a.counts.n_z_mu1);
}

TEST_CASE("identity channel with an ideal source has zero QBER and positive rate") {
  ScenarioConfig cfg = small_scenario();
  cfg.tx.extinction_ratio_db = kPerfectExtinction;
  cfg.rx.dark_hz = 0;
  cfg.duration_s = 0.1;  // 1e5 slots
  RunReport rep = run_scenario(cfg);
  CHECK(rep.counts.q_z() == 0.0);
  CHECK(rep.counts.q_x() == 0.0);
  CHECK(rep.keyrate.skr_inf > 0.0);
  // cross-basis detections sit at the unbiased 50% (within 3 sigma)
  double n = double(rep.cross.z_sent_x_measured);
  REQUIRE(n > 100);
  CHECK(std::abs(rep.cross.q_cross_zx() - 0.5) < 3 * std::sqrt(0.25 / n));
}

TEST_CASE("a run too short to lock reports a sync failure") {
  ScenarioConfig cfg = small_scenario();
  cfg.channel.voa_db = 60.0;  // ~1 photon per 1e6 slots: only darks arrive
  CHECK_THROWS_AS(run_scenario(cfg), SyncFailure);
}

TEST_CASE("a loss sweep survives failed points and stays ordered") {
  ScenarioConfig base = small_scenario();
  base.duration_s = 0.5;  // enough X-basis statistics for stable bounds
  auto sweep = sweep_loss(base, {3.0, 9.0, 60.0});
  REQUIRE(sweep.points.size() == 3);
  REQUIRE(sweep.model_curve.size() == 3);

  CHECK(sweep.points[0].skr_inf > sweep.points[1].skr_inf);  // more loss, less key
  CHECK(sweep.points[1].skr_inf > 0.0);
  CHECK(std::isnan(sweep.points[2].skr_inf));  // failed point marked, not dropped
  REQUIRE(sweep.failures.size() == 1);
  CHECK(sweep.failures[0].find("60") != std::string::npos);

  // the closed-form curve is finite everywhere and ordered the same way
  CHECK(sweep.model_curve[0].skr_inf > sweep.model_curve[1].skr_inf);
  CHECK(std::isfinite(sweep.model_curve[2].skr_inf));

  CHECK_THROWS_AS(sweep_loss(base, {}), ConfigError);
}

TEST_CASE("output files are written and reproducible") {
  namespace fs = std::filesystem;
  fs::path dir1 = fs::temp_directory_path() / "qkdsim_test_out1";
  fs::path dir2 = fs::temp_directory_path() / "qkdsim_test_out2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  ScenarioConfig cfg = small_scenario();
  cfg.output_dir = dir1.string();
  run_and_write(cfg);
  cfg.output_dir = dir2.string();
  run_and_write(cfg);

  for (const char* name : {"polcomp.csv", "keyrate.csv", "clock.txt", "summary.txt"}) {
    CHECK(fs::exists(dir1 / name));
  }
  // identical configs produce byte-identical data files
  CHECK(slurp(dir1 / "polcomp.csv") == slurp(dir2 / "polcomp.csv"));
  CHECK(slurp(dir1 / "keyrate.csv") == slurp(dir2 / "keyrate.csv"));
  CHECK(slurp(dir1 / "clock.txt") == slurp(dir2 / "clock.txt"));

  // CSV headers match the documented formats
  std::istringstream pol(slurp(dir1 / "polcomp.csv"));
  std::string header;
  std::getline(pol, header);
  CHECK(header == "interval,q_z,q_x,n_z,n_x,theta0,theta1,theta2,theta3,active,direction");
  std::istringstream key(slurp(dir1 / "keyrate.csv"));
  std::getline(key, header);
  CHECK(header == "loss_db,t_s,n_z,q_z,q_x,s_z0,s_z1,phi_z,skr_inf,skr_fk");

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("interval-aggregated engine agrees with the tag-level engine") {
  // same link, no drift, compensation off: both engines should see the same
  // QBER level (the aggregated one is the 6-hour emulation workhorse)
  ScenarioConfig cfg = small_scenario();
  cfg.polcomp.enabled = false;
  cfg.channel.voa_db = 6.0;
  RunReport tag_level = run_scenario(cfg);

  LongRunConfig lr;
  lr.tx = cfg.tx;
  lr.channel = cfg.channel;
  lr.rx = cfg.rx;
  lr.polcomp.enabled = false;
  lr.n_intervals = 50;
  lr.seed = 11;
  auto agg = run_compensation_loop(lr);

  CHECK(agg.mean_q_z == Catch::Approx(tag_level.counts.q_z()).margin(0.004));
}
