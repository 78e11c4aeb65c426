#include <catch_amalgamated.hpp>
#include <cmath>

#include "qkdsim/rng.hpp"

using namespace qkdsim;

TEST_CASE("streams with different labels are decorrelated") {
  Rng a(42, stream::kPhotons);
  Rng b(42, stream::kDarks);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a() == b();
  CHECK(same == 0);
}

TEST_CASE("same seed reproduces the same sequence") {
  Rng a(7, stream::kChannel, 3);
  Rng b(7, stream::kChannel, 3);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
}

TEST_CASE("uniform is in [0,1) with the right mean") {
  Rng r(1);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // mean 0.5, sigma of the mean = 1/sqrt(12 n)
  CHECK(std::abs(sum / n - 0.5) < 3.0 / std::sqrt(12.0 * n));
}

TEST_CASE("gauss moments") {
  Rng r(2);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double g = r.gauss();
    s += g;
    s2 += g * g;
  }
  CHECK(std::abs(s / n) < 3.0 / std::sqrt(double(n)));
  CHECK(std::abs(s2 / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("poisson mean and zero-class frequency") {
  Rng r(3);
  const double mu = 0.8;
  const int n = 1000000;
  long long total = 0;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    auto k = r.poisson(mu);
    total += (long long)k;
    zeros += k == 0;
  }
  CHECK(std::abs(double(total) / n - mu) < 3.0 * std::sqrt(mu / n));
  double p0 = std::exp(-mu);
  CHECK(std::abs(double(zeros) / n - p0) < 3.0 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("poisson of zero mean is zero") {
  Rng r(4);
  for (int i = 0; i < 100; ++i) CHECK(r.poisson(0.0) == 0);
}

TEST_CASE("binomial mean across all code paths") {
  Rng r(5);
  struct Case {
    std::uint64_t n;
    double p;
  } cases[] = {{10, 0.3}, {1000, 0.001}, {1000, 0.999}, {100000, 0.3}};
  for (auto c : cases) {
    const int trials = 20000;
    double sum = 0;
    for (int i = 0; i < trials; ++i) sum += double(r.binomial(c.n, c.p));
    double mean = double(c.n) * c.p;
    double sd = std::sqrt(double(c.n) * c.p * (1 - c.p));
    CHECK(std::abs(sum / trials - mean) < 4.0 * sd / std::sqrt(double(trials)) + 1e-9);
  }
}

TEST_CASE("binomial respects bounds") {
  Rng r(6);
  for (int i = 0; i < 1000; ++i) {
    auto k = r.binomial(50, 0.5);
    CHECK(k <= 50);
  }
  CHECK(r.binomial(0, 0.5) == 0);
  CHECK(r.binomial(17, 0.0) == 0);
  CHECK(r.binomial(17, 1.0) == 17);
}

TEST_CASE("slot hash is stateless and reproducible") {
  CHECK(slot_hash(123, 456) == slot_hash(123, 456));
  CHECK(slot_hash(123, 456) != slot_hash(123, 457));
  CHECK(slot_hash(123, 456) != slot_hash(124, 456));
  double u = slot_uniform(9, 9);
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
}
