#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qkdsim/polstate.hpp"
#include "qkdsim/rng.hpp"

namespace qkdsim {

struct ChannelConfig {
  double fiber_km = 26.0;
  double fiber_db_per_km = 0.35;
  double voa_db = 0.0;
  double drift_rate_rad_per_s = 0.0;
  double drift_axis_correlation_time_s = 300.0;
  // Static rotation about the circular axis left over after compensation;
  // gives an error probability of sin^2(angle/2) in both measured bases.
  double residual_misalignment_rad = 0.0;
  std::uint64_t seed = 1;

  double total_loss_db() const { return fiber_km * fiber_db_per_km + voa_db; }

  void validate() const {
    if (fiber_km < 0 || fiber_db_per_km < 0 || voa_db < 0)
      throw std::invalid_argument("attenuations must be >= 0");
    if (drift_rate_rad_per_s < 0) throw std::invalid_argument("drift rate must be >= 0");
    if (residual_misalignment_rad < 0)
      throw std::invalid_argument("residual misalignment must be >= 0");
  }

  /// Basis error probability contributed by the residual misalignment.
  double residual_misalignment_error() const {
    double s = std::sin(0.5 * residual_misalignment_rad);
    return s * s;
  }
};

inline double transmittance(const ChannelConfig& cfg) {
  return std::pow(10.0, -cfg.total_loss_db() / 10.0);
}

/// Slowly drifting fiber birefringence: a rotation random walk whose axis
/// itself wanders on the Poincare sphere with a configured correlation time.
struct ChannelState {
  PolarizationUnitary unitary = PolarizationUnitary::identity();
  double time_s = 0.0;
  std::array<double, 3> axis = {1.0, 0.0, 0.0};
  std::uint64_t steps_since_renorm = 0;

  static ChannelState initial(Rng& rng) {
    ChannelState s;
    s.axis = random_axis(rng);
    return s;
  }

  static ChannelState initial(const ChannelConfig& cfg, Rng& rng) {
    ChannelState s = initial(rng);
    if (cfg.residual_misalignment_rad != 0.0)
      s.unitary = rotation_circ(cfg.residual_misalignment_rad);
    return s;
  }

  static std::array<double, 3> random_axis(Rng& rng) {
    // uniform on the sphere
    double z = rng.uniform(-1.0, 1.0);
    double phi = rng.uniform(0.0, 2.0 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }
};

inline ChannelState advance_drift(ChannelState state, double dt, const ChannelConfig& cfg,
                                  Rng& rng) {
  if (dt < 0) throw std::invalid_argument("dt must be >= 0");
  if (dt == 0.0) return state;
  state.time_s += dt;
  if (cfg.drift_rate_rad_per_s == 0.0) return state;

  // Axis wanders with the configured correlation time.
  double axis_sigma = std::sqrt(2.0 * dt / std::max(cfg.drift_axis_correlation_time_s, 1e-9));
  std::array<double, 3>& a = state.axis;
  for (double& c : a) c += axis_sigma * rng.gauss();
  double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  if (n < 1e-12) {
    a = ChannelState::random_axis(rng);
  } else {
    for (double& c : a) c /= n;
  }

  double angle = std::abs(rng.gauss(0.0, cfg.drift_rate_rad_per_s * dt));
  state.unitary = poincare_rotation(a, angle) * state.unitary;
  if (++state.steps_since_renorm >= 1024) {
    state.unitary = state.unitary.reorthonormalized();
    state.steps_since_renorm = 0;
  }
  return state;
}

struct TransmitResult {
  std::uint64_t surviving_photons = 0;
  PolarizationState pol_out;
};

/// Per-photon loss (binomial thinning, keeps exact Poisson semantics for the
/// decoy oracle) plus the current drift rotation.
inline TransmitResult transmit(std::uint64_t photons, const ChannelState& state,
                               const PolarizationState& pol, const ChannelConfig& cfg, Rng& rng) {
  TransmitResult r;
  r.surviving_photons = rng.binomial(photons, transmittance(cfg));
  r.pol_out = state.unitary * pol;
  return r;
}

}  // namespace qkdsim
