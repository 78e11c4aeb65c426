#include <catch_amalgamated.hpp>
#include <cmath>

#include "qkdsim/receiver.hpp"

using namespace qkdsim;

TEST_CASE("no photons means no events") {
  ReceiverConfig cfg;
  Rng rng(51, stream::kReceiver);
  CHECK(detect_slot(0, states::left(), 0.0, cfg, rng).empty());
}

TEST_CASE("a certain photon on a perfect detector lands at the slot time") {
  ReceiverConfig cfg;
  cfg.p_z_bob = 1.0 - 1e-15;  // effectively forced Z basis
  cfg.eta = {1, 1, 1, 1};
  cfg.jitter_ps = 0;
  cfg.clock_skew = 0;
  Rng rng(52, stream::kReceiver);
  auto ev = detect_slot(1, states::left(), 12345678.0, cfg, rng);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].detector == Detector::Z0);
  CHECK(ev[0].timetag_ps == 12345678);
}

TEST_CASE("X-arm fraction for |+> at 90:10 basis split") {
  ReceiverConfig cfg;  // p_z_bob = 0.9, eta_xp = 0.9
  cfg.jitter_ps = 0;
  Rng rng(53, stream::kReceiver);
  const int n = 1000000;
  int xp = 0;
  for (int i = 0; i < n; ++i) {
    auto ev = detect_slot(1, states::plus(), double(i) * 20000.0, cfg, rng);
    for (auto& e : ev) xp += e.detector == Detector::Xp;
  }
  double expect = 0.1 * 0.9;  // basis fraction x detector efficiency
  CHECK(std::abs(double(xp) / n - expect) < 3 * std::sqrt(expect * (1 - expect) / n));
}

TEST_CASE("dark counts follow the configured Poisson process") {
  ReceiverConfig cfg;
  cfg.dark_hz = 0;
  Rng rng(54, stream::kDarks);
  CHECK(inject_dark_counts(1.0, cfg, rng).empty());

  cfg.dark_hz = 200;
  double sum_single = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    auto ev = inject_dark_counts(10.0, cfg, rng);
    int on_z0 = 0;
    for (auto& e : ev) on_z0 += e.detector == Detector::Z0;
    sum_single += on_z0;
  }
  // one detector over 10 s: Poisson(2000)
  CHECK(std::abs(sum_single / trials - 2000.0) < 3 * std::sqrt(2000.0 / trials));

  double sum_total = 0;
  for (int t = 0; t < trials; ++t) sum_total += double(inject_dark_counts(1.0, cfg, rng).size());
  // four detectors over 1 s: Poisson(800)
  CHECK(std::abs(sum_total / trials - 800.0) < 3 * std::sqrt(800.0 / trials));
}

TEST_CASE("balancing keep probabilities") {
  ReceiverConfig cfg;
  CHECK(balance_keep_probability(cfg, Detector::Z0) == Catch::Approx(1.0));
  CHECK(balance_keep_probability(cfg, Detector::Z1) == Catch::Approx(1.0));
  CHECK(balance_keep_probability(cfg, Detector::Xp) == Catch::Approx(1.0 / 3.0));
  CHECK(balance_keep_probability(cfg, Detector::Xm) == Catch::Approx(1.0));
}

TEST_CASE("balancing discards the expected fraction") {
  ReceiverConfig cfg;
  Rng rng(55, stream::kReceiver);
  std::vector<DetectionEvent> events(100000, DetectionEvent{0, Detector::Xp});
  auto kept = balance_efficiencies(events, cfg, rng);
  double expect = 100000.0 / 3.0;
  double sd = std::sqrt(100000.0 * (1.0 / 3.0) * (2.0 / 3.0));  // ~149
  CHECK(std::abs(double(kept.size()) - expect) < 3 * sd);
}

TEST_CASE("after balancing, |L> detections split 1:1 between X arms") {
  ReceiverConfig cfg;
  cfg.jitter_ps = 0;
  Rng rng(56, stream::kReceiver);
  std::vector<DetectionEvent> raw;
  for (int i = 0; i < 400000; ++i) {
    auto ev = detect_slot(1, states::left(), double(i) * 20000.0, cfg, rng);
    for (auto& e : ev)
      if (detector_basis(e.detector) == Basis::X) raw.push_back(e);
  }
  auto kept = balance_efficiencies(raw, cfg, rng);
  long xp = 0;
  for (auto& e : kept) xp += e.detector == Detector::Xp;
  double n = double(kept.size());
  CHECK(std::abs(double(xp) / n - 0.5) < 3 * std::sqrt(0.25 / n));
}

TEST_CASE("merged tags are time sorted") {
  std::vector<DetectionEvent> a = {{300, Detector::Z0}, {100, Detector::Z1}};
  std::vector<DetectionEvent> b = {{200, Detector::Xp}};
  auto m = merge_tags(a, b);
  REQUIRE(m.size() == 3);
  CHECK(m[0].timetag_ps == 100);
  CHECK(m[1].timetag_ps == 200);
  CHECK(m[2].timetag_ps == 300);
}

TEST_CASE("hold-off drops tags inside the dead window per detector") {
  ReceiverConfig cfg;
  cfg.hold_off_us = 1.0;  // 1e6 ps
  std::vector<DetectionEvent> tags = {
      {0, Detector::Z0},       {500000, Detector::Z0},  // inside hold-off: dropped
      {500000, Detector::Z1},                           // other detector: kept
      {1200000, Detector::Z0},                          // past hold-off: kept
  };
  auto kept = apply_hold_off(tags, cfg);
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].detector == Detector::Z0);
  CHECK(kept[1].detector == Detector::Z1);
  CHECK(kept[2].timetag_ps == 1200000);
}

TEST_CASE("bob clock skew scales time tags") {
  ReceiverConfig cfg;
  cfg.clock_skew = 1e-6;
  CHECK(to_bob_clock(1e12, cfg) == 1000001000000LL);
}

TEST_CASE("receiver config validation") {
  ReceiverConfig cfg;
  cfg.eta[0] = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ReceiverConfig{};
  cfg.dark_hz = -5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
