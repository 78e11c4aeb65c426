#include <catch_amalgamated.hpp>
#include <cmath>

#include "qkdsim/transmitter.hpp"

using namespace qkdsim;

namespace {
TransmitterConfig small_cfg() {
  TransmitterConfig cfg;
  cfg.rate_hz = 1e6;
  cfg.sync_len = 4;
  cfg.comp_string_len = 0;  // comp disabled
  cfg.seed = 21;
  return cfg;
}
}  // namespace

TEST_CASE("tiny schedule: prefix then key") {
  auto cfg = small_cfg();
  auto sched = build_schedule(cfg, 8e-6);  // 8 slots
  REQUIRE(sched.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(sched[i].role == PulseRole::Sync);
    CHECK(sched[i].basis == Basis::Z);
    CHECK(sched[i].intensity == Intensity::Mu1);
  }
  for (int i = 4; i < 8; ++i) CHECK(sched[i].role == PulseRole::Key);
}

TEST_CASE("comp blocks sit at the start of each interval and fill 2% of slots") {
  TransmitterConfig cfg;
  cfg.rate_hz = 1e6;       // 1e6 slots per 1 s interval
  cfg.sync_len = 10000;
  cfg.comp_string_len = 20000;  // 2% of an interval
  cfg.comp_period_s = 1.0;
  cfg.seed = 3;
  const std::uint64_t total = 3000000;  // 3 s
  ScheduleView view(cfg, total);
  std::uint64_t n_sync = 0, n_comp = 0, n_key = 0;
  for (std::uint64_t s = 0; s < total; ++s) {
    switch (view.role(s)) {
      case PulseRole::Sync: ++n_sync; break;
      case PulseRole::Comp: ++n_comp; break;
      case PulseRole::Key: ++n_key; break;
    }
  }
  CHECK(n_sync == cfg.sync_len);
  CHECK(n_comp == 3 * cfg.comp_string_len);  // one block per interval
  CHECK(double(n_comp) / double(total - n_sync) == Catch::Approx(0.02).epsilon(0.01));
  // blocks start right after the prefix at each interval boundary
  CHECK(view.role(cfg.sync_len) == PulseRole::Comp);
  CHECK(view.role(cfg.sync_len + cfg.comp_string_len) == PulseRole::Key);
  CHECK(view.role(cfg.sync_len + 1000000) == PulseRole::Comp);
  // comp pulses carry the public pattern in Z at mu1
  auto p = view.at(cfg.sync_len + 5);
  CHECK(p.basis == Basis::Z);
  CHECK(p.intensity == Intensity::Mu1);
  CHECK(p.bit == comp_string_bit(cfg, 5));
}

TEST_CASE("key statistics match the configured probabilities") {
  TransmitterConfig cfg;
  cfg.rate_hz = 1e6;
  cfg.sync_len = 10;
  cfg.comp_string_len = 0;
  cfg.seed = 5;
  const std::uint64_t n = 1000000;
  ScheduleView view(cfg, n + 10);
  std::uint64_t n_z = 0, n_mu1 = 0, n_bit1 = 0;
  for (std::uint64_t s = 10; s < n + 10; ++s) {
    auto p = view.at(s);
    REQUIRE(p.role == PulseRole::Key);
    if (p.basis == Basis::Z) {
      ++n_z;
      n_bit1 += p.bit;
    } else {
      CHECK(p.bit == 0);  // three-state: only |+> in X
    }
    n_mu1 += p.intensity == Intensity::Mu1;
  }
  auto sigma = [&](double p) { return std::sqrt(p * (1 - p) / double(n)); };
  CHECK(std::abs(double(n_z) / n - 0.9) < 3 * sigma(0.9));
  CHECK(std::abs(double(n_mu1) / n - 0.7) < 3 * sigma(0.7));
  CHECK(std::abs(double(n_bit1) / n_z - 0.5) < 3 * std::sqrt(0.25 / double(n_z)));
}

TEST_CASE("pulse to state map") {
  PreparedPulse p;
  p.basis = Basis::Z;
  p.bit = 0;
  CHECK(fidelity(pulse_to_state(p), states::left()) == Catch::Approx(1.0).margin(1e-12));
  p.bit = 1;
  CHECK(fidelity(pulse_to_state(p), states::right()) == Catch::Approx(1.0).margin(1e-12));
  p.basis = Basis::X;
  p.bit = 0;
  CHECK(fidelity(pulse_to_state(p), states::plus()) == Catch::Approx(1.0).margin(1e-12));
  p.bit = 1;
  CHECK_THROWS_AS(pulse_to_state(p), std::invalid_argument);
}

TEST_CASE("photon number statistics") {
  Rng r(31);
  PreparedPulse p;
  p.mean_photons = 0.0;
  for (int i = 0; i < 100; ++i) CHECK(sample_photon_number(p, r) == 0);

  const int n = 1000000;
  p.mean_photons = 0.80;
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += sample_photon_number(p, r) == 0;
  double p0 = std::exp(-0.80);  // ~0.4493
  CHECK(std::abs(double(zeros) / n - p0) < 3 * std::sqrt(p0 * (1 - p0) / n));

  p.mean_photons = 0.28;
  int nonzero = 0;
  for (int i = 0; i < n; ++i) nonzero += sample_photon_number(p, r) >= 1;
  double p1 = 1.0 - std::exp(-0.28);  // ~0.2442
  CHECK(std::abs(double(nonzero) / n - p1) < 3 * std::sqrt(p1 * (1 - p1) / n));
}

TEST_CASE("schedules are deterministic in the seed") {
  TransmitterConfig cfg;
  cfg.rate_hz = 1e6;
  cfg.sync_len = 100;
  cfg.seed = 77;
  ScheduleView a(cfg, 100000), b(cfg, 100000);
  for (std::uint64_t s = 0; s < 100000; s += 37) {
    auto pa = a.at(s), pb = b.at(s);
    CHECK(pa.role == pb.role);
    CHECK(pa.basis == pb.basis);
    CHECK(pa.bit == pb.bit);
    CHECK(pa.intensity == pb.intensity);
  }
  // and distinct for another seed
  cfg.seed = 78;
  ScheduleView c(cfg, 100000);
  int diff = 0;
  for (std::uint64_t s = 200; s < 1200; ++s) diff += c.at(s).bit != a.at(s).bit;
  CHECK(diff > 0);
}

TEST_CASE("config validation") {
  TransmitterConfig cfg;
  cfg.mu2 = 0.9;  // violates mu1 > mu2
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TransmitterConfig{};
  cfg.p_mu1 = 0.6;  // p_mu1 + p_mu2 != 1
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TransmitterConfig{};
  CHECK_THROWS_AS(ScheduleView(cfg, cfg.sync_len - 1), std::invalid_argument);
}
