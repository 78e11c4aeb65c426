#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace qkdsim {

// Counter-based seeding: every module draws from a substream derived by
// hashing (master seed, stream label, block index).  Slot-indexed streams
// are random access, so blocks can be generated out of order and still
// reproduce the serial result bit for bit.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

// Stream labels, so substreams of one master seed never collide.
namespace stream {
inline constexpr std::uint64_t kSchedule = 0x5348454455ULL;    // Alice's key bits
inline constexpr std::uint64_t kSyncString = 0x53594e43ULL;    // public sync prefix
inline constexpr std::uint64_t kCompString = 0x434f4d50ULL;    // public comp string
inline constexpr std::uint64_t kPhotons = 0x50484f54ULL;
inline constexpr std::uint64_t kChannel = 0x4348414eULL;
inline constexpr std::uint64_t kReceiver = 0x52454356ULL;
inline constexpr std::uint64_t kDarks = 0x4441524bULL;
inline constexpr std::uint64_t kDrift = 0x44524654ULL;
inline constexpr std::uint64_t kPolComp = 0x504f4c43ULL;
inline constexpr std::uint64_t kHarness = 0x4841524eULL;
}  // namespace stream

/// Small stateful generator (xorshift-star over a splitmix-seeded state).
/// Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x853c49e6748fea9bULL)) {
    if (state_ == 0) state_ = 0x2545f4914f6cdd1dULL;
  }
  Rng(std::uint64_t master, std::uint64_t stream_label, std::uint64_t block = 0)
      : Rng(mix_seed(mix_seed(master, stream_label), block)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }

  std::uint64_t operator()() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dULL;
  }

  /// Uniform in [0, 1).
  double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call, cached pair).
  double gauss() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(6.283185307179586 * u2);
    have_cached_ = true;
    return r * std::cos(6.283185307179586 * u2);
  }

  double gauss(double mean, double sigma) { return mean + sigma * gauss(); }

  /// Poisson sample; Knuth inversion for small means, normal tail otherwise.
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
      double limit = std::exp(-mean);
      double prod = uniform();
      std::uint64_t n = 0;
      while (prod > limit) {
        prod *= uniform();
        ++n;
      }
      return n;
    }
    // Gaussian approximation is fine at these means for a desk-scale model.
    double x = std::round(gauss(mean, std::sqrt(mean)));
    return x < 0.0 ? 0 : std::uint64_t(x);
  }

  /// Binomial(n, p) by direct Bernoulli trials for small n, normal otherwise.
  std::uint64_t binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (n < 64) {
      std::uint64_t k = 0;
      for (std::uint64_t i = 0; i < n; ++i) k += bernoulli(p);
      return k;
    }
    double mean = double(n) * p;
    if (mean < 20.0 || double(n) - mean < 20.0) {
      if (p > 0.5) return n - binomial(n, 1.0 - p);
      // waiting-time method: geometric gaps between successes
      double log_q = std::log1p(-p);
      std::uint64_t k = 0;
      double trials = 0.0;
      while (true) {
        double u = 0.0;
        while (u == 0.0) u = uniform();
        trials += std::floor(std::log(u) / log_q) + 1.0;
        if (trials > double(n)) break;
        ++k;
      }
      return k;
    }
    double x = std::round(gauss(mean, std::sqrt(mean * (1.0 - p))));
    if (x < 0.0) return 0;
    if (x > double(n)) return n;
    return std::uint64_t(x);
  }

  /// Exponential with given mean.
  double exponential(double mean) {
    double u = 0.0;
    while (u == 0.0) u = uniform();
    return -mean * std::log(u);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// Stateless per-slot hash draw: the schedule and photon streams use this so
/// any slot's randomness can be regenerated without replaying the stream.
inline std::uint64_t slot_hash(std::uint64_t stream_seed, std::uint64_t slot) {
  return splitmix64(stream_seed ^ (slot * 0xd6e8feb86659fd93ULL + 0xa0761d6478bd642fULL));
}

inline double slot_uniform(std::uint64_t stream_seed, std::uint64_t slot) {
  return double(slot_hash(stream_seed, slot) >> 11) * 0x1.0p-53;
}

}  // namespace qkdsim
