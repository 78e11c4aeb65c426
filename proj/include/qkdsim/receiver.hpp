#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkdsim/polstate.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

enum class Detector : std::uint8_t { Z0 = 0, Z1 = 1, Xp = 2, Xm = 3 };
inline constexpr int kNumDetectors = 4;

inline Basis detector_basis(Detector d) {
  return (d == Detector::Z0 || d == Detector::Z1) ? Basis::Z : Basis::X;
}
inline int detector_outcome(Detector d) {
  return (d == Detector::Z0 || d == Detector::Xp) ? 0 : 1;
}

struct ReceiverConfig {
  double p_z_bob = 0.9;
  std::array<double, 4> eta = {0.85, 0.85, 0.90, 0.30};  // Z0, Z1, Xp, Xm
  double dark_hz = 200.0;
  double jitter_ps = 10.0;
  double gate_window_ps = 300.0;  // full width around the expected arrival
  double hold_off_us = 0.0;       // 0 disables dead time (SNSPD default)
  double clock_skew = 1e-6;       // Bob's clock runs at (1+skew) x Alice's
  std::uint64_t seed = 1;

  void validate() const {
    if (!(p_z_bob > 0 && p_z_bob < 1)) throw std::invalid_argument("p_z_bob must be in (0,1)");
    for (double e : eta)
      if (e < 0 || e > 1) throw std::invalid_argument("efficiencies must be in [0,1]");
    if (dark_hz < 0) throw std::invalid_argument("dark_hz must be >= 0");
  }
};

/// One time tag, integer picoseconds in Bob's clock.
struct DetectionEvent {
  std::int64_t timetag_ps = 0;
  Detector detector = Detector::Z0;
};

inline bool operator<(const DetectionEvent& a, const DetectionEvent& b) {
  return a.timetag_ps < b.timetag_ps ||
         (a.timetag_ps == b.timetag_ps && a.detector < b.detector);
}

inline std::int64_t to_bob_clock(double alice_time_ps, const ReceiverConfig& cfg) {
  return std::int64_t(std::llround(alice_time_ps * (1.0 + cfg.clock_skew)));
}

/// Detect the surviving photons of one slot.  Each photon independently
/// picks a basis, an outcome by the Born rule and fires its detector with
/// the detector's efficiency; a detector can click at most once per slot.
inline std::vector<DetectionEvent> detect_slot(std::uint64_t photons, const PolarizationState& pol,
                                               double slot_time_ps, const ReceiverConfig& cfg,
                                               Rng& rng) {
  std::vector<DetectionEvent> events;
  if (photons == 0) return events;
  bool fired[kNumDetectors] = {false, false, false, false};
  double p_z0 = -1.0, p_x0 = -1.0;  // lazily computed Born probabilities
  for (std::uint64_t i = 0; i < photons; ++i) {
    Basis basis = rng.bernoulli(cfg.p_z_bob) ? Basis::Z : Basis::X;
    Detector det;
    if (basis == Basis::Z) {
      if (p_z0 < 0) p_z0 = measure_probability(pol, Basis::Z, 0);
      det = rng.bernoulli(p_z0) ? Detector::Z0 : Detector::Z1;
    } else {
      if (p_x0 < 0) p_x0 = measure_probability(pol, Basis::X, 0);
      det = rng.bernoulli(p_x0) ? Detector::Xp : Detector::Xm;
    }
    int d = int(det);
    if (fired[d]) continue;
    if (!rng.bernoulli(cfg.eta[d])) continue;
    fired[d] = true;
    double t = slot_time_ps + (cfg.jitter_ps > 0 ? rng.gauss(0.0, cfg.jitter_ps) : 0.0);
    events.push_back({to_bob_clock(t, cfg), det});
  }
  return events;
}

/// Homogeneous Poisson dark counts, per detector, over the run.
/// Tags are in Bob's clock and unsorted.
inline std::vector<DetectionEvent> inject_dark_counts(double duration_s, const ReceiverConfig& cfg,
                                                      Rng& rng) {
  std::vector<DetectionEvent> events;
  if (duration_s < 0) throw std::invalid_argument("duration must be >= 0");
  if (cfg.dark_hz <= 0 || duration_s == 0) return events;
  double span_ps = duration_s * 1e12;
  for (int d = 0; d < kNumDetectors; ++d) {
    std::uint64_t n = rng.poisson(cfg.dark_hz * duration_s);
    for (std::uint64_t i = 0; i < n; ++i) {
      events.push_back({std::int64_t(rng.uniform() * span_ps), Detector(d)});
    }
  }
  return events;
}

/// Keep probability used to equalize efficiencies within each basis.
inline double balance_keep_probability(const ReceiverConfig& cfg, Detector d) {
  double eta_min = detector_basis(d) == Basis::Z ? std::min(cfg.eta[0], cfg.eta[1])
                                                 : std::min(cfg.eta[2], cfg.eta[3]);
  double e = cfg.eta[int(d)];
  return e > 0 ? std::min(1.0, eta_min / e) : 1.0;
}

/// Random discard in post-processing so that the surviving effective
/// efficiencies are equal within each basis.
inline std::vector<DetectionEvent> balance_efficiencies(const std::vector<DetectionEvent>& events,
                                                        const ReceiverConfig& cfg, Rng& rng) {
  std::vector<DetectionEvent> kept;
  kept.reserve(events.size());
  double keep[kNumDetectors];
  for (int d = 0; d < kNumDetectors; ++d) keep[d] = balance_keep_probability(cfg, Detector(d));
  for (const auto& e : events) {
    double p = keep[int(e.detector)];
    if (p >= 1.0 || rng.bernoulli(p)) kept.push_back(e);
  }
  return kept;
}

/// Merge and time-sort per-detector streams (TDC dump order).
inline std::vector<DetectionEvent> merge_tags(std::vector<DetectionEvent> a,
                                              const std::vector<DetectionEvent>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

/// Drop tags that violate per-detector dead time (hold-off), in time order.
inline std::vector<DetectionEvent> apply_hold_off(std::vector<DetectionEvent> tags,
                                                  const ReceiverConfig& cfg) {
  if (cfg.hold_off_us <= 0) return tags;
  std::sort(tags.begin(), tags.end());
  double hold_ps = cfg.hold_off_us * 1e6;
  std::int64_t last[kNumDetectors];
  for (auto& t : last) t = std::numeric_limits<std::int64_t>::min();
  std::vector<DetectionEvent> kept;
  kept.reserve(tags.size());
  for (const auto& e : tags) {
    int d = int(e.detector);
    if (double(e.timetag_ps - last[d]) >= hold_ps || last[d] == std::numeric_limits<std::int64_t>::min()) {
      kept.push_back(e);
      last[d] = e.timetag_ps;
    }
  }
  return kept;
}

}  // namespace qkdsim
