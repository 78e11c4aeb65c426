#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "qkdsim/keyrate.hpp"
#include "qkdsim/polstate.hpp"

namespace qkdsim {

/// Four piezo actuators, axes alternating at 0 and 45 degrees, i.e.
/// Poincare rotations about the H/V and diagonal axes.
struct ActuatorBank {
  std::array<double, 4> theta = {0.0, 0.0, 0.0, 0.0};
  double theta_max = 4.0 * kPi;

  PolarizationUnitary unitary() const {
    return rotation_hv(theta[0]) * rotation_diag(theta[1]) * rotation_hv(theta[2]) *
           rotation_diag(theta[3]);
  }
};

inline PolarizationState apply_compensator(const ActuatorBank& bank, const PolarizationState& pol) {
  return bank.unitary() * pol;
}

/// Per-interval QBER estimate from the public comp string (Z) and the
/// revealed-basis X detections.
struct QberSample {
  double q_z = 0.0, q_x = 0.0;
  std::uint64_t n_z = 0, n_x = 0;
  std::uint64_t interval_index = 0;
  bool stale = false;  // carried over from the previous interval
};

/// Coordinate-descent state.  One actuator moves at a time with a step
/// proportional to the measured QBER; a cost increase reverses the
/// direction once per round, a second increase advances to the next
/// actuator.
struct CompensatorState {
  ActuatorBank bank;
  int active_actuator = 0;
  int direction = +1;
  int reversals_this_round = 0;
  double gain = 2.0;           // radians per unit QBER
  double max_step_rad = 0.3;   // clamp, keeps the 1 s loop stable
  std::uint64_t min_samples = 100;  // hold position below this statistic
  double prev_cost = -1.0;     // < 0: no previous interval yet
  std::uint64_t total_reversals = 0;
  std::uint64_t rounds = 0;
};

/// Estimate the interval QBER.  COMP detections are compared against the
/// public string; X detections against the only X state (|+>).  When a
/// basis has no comparisons the previous estimate is carried and the sample
/// is flagged stale.
inline QberSample estimate_qber(const std::vector<MatchedEvent>& interval_events,
                                std::uint64_t interval_index, const QberSample* previous) {
  QberSample s;
  s.interval_index = interval_index;
  std::uint64_t err_z = 0, err_x = 0;
  for (const auto& e : interval_events) {
    if (e.role == PulseRole::Comp) {
      if (e.bob_basis != Basis::Z) continue;
      ++s.n_z;
      err_z += e.bob_bit != e.alice_bit;
    } else if (e.role == PulseRole::Key && e.alice_basis == Basis::X &&
               e.bob_basis == Basis::X) {
      ++s.n_x;
      err_x += e.bob_bit != 0;
    }
  }
  if (s.n_z > 0) {
    s.q_z = double(err_z) / double(s.n_z);
  } else {
    s.q_z = previous ? previous->q_z : 0.0;
    s.stale = true;
  }
  if (s.n_x > 0) {
    s.q_x = double(err_x) / double(s.n_x);
  } else {
    s.q_x = previous ? previous->q_x : 0.0;
    s.stale = true;
  }
  return s;
}

/// Scalar objective fed to the optimizer.  Both bases must stay aligned in
/// the three-state protocol, so the worse of the two QBERs is minimized.
inline double compensation_cost(const QberSample& s) { return std::max(s.q_z, s.q_x); }

inline CompensatorState controller_step(CompensatorState state, const QberSample& sample) {
  double cost = compensation_cost(sample);

  // Hold on low statistics: stepping on noise does more harm than waiting.
  if (sample.n_z + sample.n_x < state.min_samples) return state;

  if (state.prev_cost >= 0.0 && cost > state.prev_cost) {
    if (state.reversals_this_round == 0) {
      state.direction = -state.direction;
      state.reversals_this_round = 1;
      ++state.total_reversals;
    } else {
      state.active_actuator = (state.active_actuator + 1) % 4;
      state.reversals_this_round = 0;
      ++state.rounds;
    }
  }

  double step = std::min(state.gain * cost, state.max_step_rad) * state.direction;
  double& theta = state.bank.theta[state.active_actuator];
  theta += step;
  // retardance is 2*pi-periodic; wrap into the actuator range
  double range = state.bank.theta_max;
  theta = std::fmod(theta, 2.0 * kPi);
  if (theta < 0) theta += 2.0 * kPi;
  if (theta > range) theta = std::fmod(theta, range);

  state.prev_cost = cost;
  return state;
}

}  // namespace qkdsim
