#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkdsim/polstate.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

enum class PulseRole : std::uint8_t { Sync, Comp, Key };
enum class Intensity : std::uint8_t { Mu1, Mu2 };

struct TransmitterConfig {
  double rate_hz = 5.0e7;
  double mu1 = 0.80;
  double mu2 = 0.28;
  double p_mu1 = 0.7;
  double p_mu2 = 0.3;
  double p_z_alice = 0.9;
  std::uint64_t sync_len = 1'000'000;        // L, public prefix
  std::uint64_t comp_string_len = 1'000'000; // 0 disables the comp string
  double comp_period_s = 1.0;
  double extinction_ratio_db = 33.0;         // source imperfection; inf = ideal
  double pulse_fwhm_ps = 270.0;              // optical pulse temporal width
  std::uint64_t seed = 1;

  double slot_period_ps() const { return 1e12 / rate_hz; }
  /// Gaussian-equivalent sigma of the pulse temporal profile.
  double pulse_sigma_ps() const { return pulse_fwhm_ps / 2.3548200450309493; }
  double mean_photons(Intensity k) const { return k == Intensity::Mu1 ? mu1 : mu2; }

  void validate() const {
    if (rate_hz <= 0) throw std::invalid_argument("rate_hz must be > 0");
    if (!(mu1 > mu2 && mu2 > 0)) throw std::invalid_argument("need mu1 > mu2 > 0");
    if (std::abs(p_mu1 + p_mu2 - 1.0) > 1e-12)
      throw std::invalid_argument("p_mu1 + p_mu2 must be 1");
    if (!(p_z_alice > 0 && p_z_alice < 1))
      throw std::invalid_argument("p_z_alice must be in (0,1)");
    if (pulse_fwhm_ps < 0) throw std::invalid_argument("pulse_fwhm_ps must be >= 0");
  }

  // Public seeds for the two shared strings; independent streams, both
  // reproducible by Bob.
  std::uint64_t sync_string_seed() const { return mix_seed(seed, stream::kSyncString); }
  std::uint64_t comp_string_seed() const { return mix_seed(seed, stream::kCompString); }
};

struct PreparedPulse {
  std::uint64_t slot = 0;
  PulseRole role = PulseRole::Key;
  Basis basis = Basis::Z;
  std::uint8_t bit = 0;
  Intensity intensity = Intensity::Mu1;
  double mean_photons = 0.0;
};

/// (Z,0)->|L>, (Z,1)->|R>, (X,0)->|+>.  (X,1) is never prepared in the
/// three-state protocol.
inline PolarizationState pulse_to_state(const PreparedPulse& p) {
  if (p.basis == Basis::Z) return p.bit == 0 ? states::left() : states::right();
  if (p.bit != 0) throw std::invalid_argument("three-state protocol never prepares (X,1)");
  return states::plus();
}

/// Bit of the public sync prefix at position `i` (0 <= i < L).
inline std::uint8_t sync_string_bit(const TransmitterConfig& cfg, std::uint64_t i) {
  return std::uint8_t(slot_hash(cfg.sync_string_seed(), i) & 1u);
}

/// Bit of the public compensation string at in-block position `i`; the same
/// pattern repeats every interval.
inline std::uint8_t comp_string_bit(const TransmitterConfig& cfg, std::uint64_t i) {
  return std::uint8_t(slot_hash(cfg.comp_string_seed(), i) & 1u);
}

/// Random-access view of Alice's pulse schedule.  Slot -> pulse is a pure
/// function of the config, so blocks can be generated in parallel or on
/// demand (e.g. when matching a detection back to its preparation).
class ScheduleView {
 public:
  ScheduleView(const TransmitterConfig& cfg, std::uint64_t total_slots)
      : cfg_(cfg), total_slots_(total_slots) {
    cfg_.validate();
    if (total_slots < cfg.sync_len)
      throw std::invalid_argument("duration too short to hold the sync prefix");
    slots_per_period_ =
        cfg.comp_string_len > 0
            ? std::uint64_t(cfg.comp_period_s * cfg.rate_hz + 0.5)
            : 0;
    key_seed_ = mix_seed(cfg.seed, stream::kSchedule);
  }

  std::uint64_t total_slots() const { return total_slots_; }
  const TransmitterConfig& config() const { return cfg_; }

  PulseRole role(std::uint64_t slot) const {
    if (slot < cfg_.sync_len) return PulseRole::Sync;
    if (slots_per_period_ > 0) {
      std::uint64_t rel = slot - cfg_.sync_len;
      if (rel % slots_per_period_ < cfg_.comp_string_len) return PulseRole::Comp;
    }
    return PulseRole::Key;
  }

  PreparedPulse at(std::uint64_t slot) const {
    PreparedPulse p;
    p.slot = slot;
    p.role = role(slot);
    switch (p.role) {
      case PulseRole::Sync:
        p.basis = Basis::Z;
        p.bit = sync_string_bit(cfg_, slot);
        p.intensity = Intensity::Mu1;
        break;
      case PulseRole::Comp: {
        std::uint64_t rel = (slot - cfg_.sync_len) % slots_per_period_;
        p.basis = Basis::Z;
        p.bit = comp_string_bit(cfg_, rel);
        p.intensity = Intensity::Mu1;
        break;
      }
      case PulseRole::Key: {
        std::uint64_t h = slot_hash(key_seed_, slot);
        // low 53 bits -> uniform for the basis choice, remaining bits for
        // bit value and intensity
        double u_basis = double(h >> 11) * 0x1.0p-53;
        p.basis = u_basis < cfg_.p_z_alice ? Basis::Z : Basis::X;
        p.bit = p.basis == Basis::Z ? std::uint8_t(h & 1u) : 0;
        double u_int = double(slot_hash(key_seed_ ^ 0x494e54ULL, slot) >> 11) * 0x1.0p-53;
        p.intensity = u_int < cfg_.p_mu1 ? Intensity::Mu1 : Intensity::Mu2;
        break;
      }
    }
    p.mean_photons = cfg_.mean_photons(p.intensity);
    return p;
  }

 private:
  TransmitterConfig cfg_;
  std::uint64_t total_slots_;
  std::uint64_t slots_per_period_ = 0;
  std::uint64_t key_seed_ = 0;
};

/// Materialized schedule (tests and diagnostics; production paths stream
/// through ScheduleView).
inline std::vector<PreparedPulse> build_schedule(const TransmitterConfig& cfg, double duration_s) {
  if (duration_s <= 0) throw std::invalid_argument("duration must be > 0");
  std::uint64_t total = std::uint64_t(duration_s * cfg.rate_hz + 0.5);
  ScheduleView view(cfg, total);
  std::vector<PreparedPulse> out;
  out.reserve(total);
  for (std::uint64_t s = 0; s < total; ++s) out.push_back(view.at(s));
  return out;
}

/// Poisson photon number of a phase-randomized weak coherent pulse.
inline std::uint64_t sample_photon_number(const PreparedPulse& p, Rng& rng) {
  return rng.poisson(p.mean_photons);
}

}  // namespace qkdsim
