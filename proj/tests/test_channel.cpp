#include <catch_amalgamated.hpp>
#include <cmath>

#include "qkdsim/channel.hpp"

using namespace qkdsim;

TEST_CASE("transmittance from fiber and VOA") {
  ChannelConfig cfg;
  cfg.fiber_km = 0;
  cfg.voa_db = 0;
  CHECK(transmittance(cfg) == Catch::Approx(1.0).margin(1e-15));

  cfg.fiber_km = 26;  // 9.1 dB at 0.35 dB/km
  CHECK(cfg.total_loss_db() == Catch::Approx(9.1).margin(1e-12));
  CHECK(transmittance(cfg) == Catch::Approx(0.12303).epsilon(1e-4));

  cfg.voa_db = 19.0 - 9.1;  // 19 dB total
  CHECK(transmittance(cfg) == Catch::Approx(0.0126).epsilon(1e-2));
}

TEST_CASE("drift is the identity for dt=0 or rate=0") {
  ChannelConfig cfg;
  cfg.drift_rate_rad_per_s = 0.05;
  Rng rng(41, stream::kDrift);
  ChannelState s = ChannelState::initial(rng);
  ChannelState s0 = advance_drift(s, 0.0, cfg, rng);
  CHECK(s0.unitary.m00 == s.unitary.m00);
  CHECK(s0.time_s == s.time_s);

  cfg.drift_rate_rad_per_s = 0.0;
  ChannelState s1 = advance_drift(s, 5.0, cfg, rng);
  CHECK(s1.unitary.m00 == s.unitary.m00);
  CHECK(s1.time_s == Catch::Approx(5.0));
}

TEST_CASE("drift step angle follows the folded normal") {
  ChannelConfig cfg;
  cfg.drift_rate_rad_per_s = 0.05;
  Rng rng(42, stream::kDrift);
  const int n = 10000;
  double sum = 0;
  ChannelState s = ChannelState::initial(rng);
  for (int i = 0; i < n; ++i) {
    ChannelState next = advance_drift(s, 1.0, cfg, rng);
    // rotation applied this step: U_next * U_prev^dag has trace 2 cos(a/2)
    cplx tr = next.unitary.m00 * std::conj(s.unitary.m00) +
              next.unitary.m01 * std::conj(s.unitary.m01) +
              next.unitary.m10 * std::conj(s.unitary.m10) +
              next.unitary.m11 * std::conj(s.unitary.m11);
    double c = std::min(1.0, std::abs(tr) / 2.0);
    sum += 2.0 * std::acos(c);
    s = next;
  }
  double expected = 0.05 * std::sqrt(2.0 / kPi);  // folded-normal mean
  double sd = 0.05 * std::sqrt(1.0 - 2.0 / kPi);
  CHECK(std::abs(sum / n - expected) < 3.0 * sd / std::sqrt(double(n)));
}

TEST_CASE("unitarity survives a million drift steps") {
  ChannelConfig cfg;
  cfg.drift_rate_rad_per_s = 0.01;
  Rng rng(43, stream::kDrift);
  ChannelState s = ChannelState::initial(rng);
  for (int i = 0; i < 1000000; ++i) s = advance_drift(s, 0.001, cfg, rng);
  CHECK(s.unitary.unitarity_residual() < 1e-8);
}

TEST_CASE("transmit edge cases") {
  ChannelConfig cfg;
  cfg.fiber_km = 0;
  cfg.voa_db = 0;
  Rng rng(44, stream::kChannel);
  ChannelState s = ChannelState::initial(rng);
  auto r0 = transmit(0, s, states::plus(), cfg, rng);
  CHECK(r0.surviving_photons == 0);
  auto r1 = transmit(1, s, states::plus(), cfg, rng);
  CHECK(r1.surviving_photons == 1);  // transmittance 1
}

TEST_CASE("Poisson thinning through loss") {
  ChannelConfig cfg;
  cfg.fiber_km = 0;
  cfg.voa_db = 6.0;  // T ~ 0.2512
  const double T = transmittance(cfg);
  const double mu = 0.8;
  Rng rng(45, stream::kChannel);
  ChannelState s = ChannelState::initial(rng);
  const int n = 1000000;
  long long survived = 0;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    std::uint64_t photons = rng.poisson(mu);
    auto r = transmit(photons, s, states::plus(), cfg, rng);
    survived += (long long)r.surviving_photons;
    zeros += r.surviving_photons == 0;
  }
  double lam = mu * T;
  CHECK(std::abs(double(survived) / n - lam) < 3 * std::sqrt(lam / n));
  double p0 = std::exp(-lam);
  CHECK(std::abs(double(zeros) / n - p0) < 3 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("channel config validation") {
  ChannelConfig cfg;
  cfg.voa_db = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ChannelConfig{};
  cfg.drift_rate_rad_per_s = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
