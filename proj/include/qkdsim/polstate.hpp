#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "qkdsim/rng.hpp"

namespace qkdsim {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

enum class Basis : std::uint8_t { Z, X };

/// Jones vector of a single pulse.  Unit norm is an invariant; depolarization
/// is not modeled, channel drift acts as a unitary.
struct PolarizationState {
  cplx amp_h{1.0, 0.0};
  cplx amp_v{0.0, 0.0};

  double norm_sq() const { return std::norm(amp_h) + std::norm(amp_v); }

  PolarizationState normalized() const {
    double n = std::sqrt(norm_sq());
    return {amp_h / n, amp_v / n};
  }
};

inline cplx overlap(const PolarizationState& a, const PolarizationState& b) {
  return std::conj(a.amp_h) * b.amp_h + std::conj(a.amp_v) * b.amp_v;
}

/// |<a|b>|^2; state equality in tests means fidelity 1 (global phase is
/// unobservable).
inline double fidelity(const PolarizationState& a, const PolarizationState& b) {
  return std::norm(overlap(a, b));
}

namespace states {
inline const double kInvSqrt2 = 1.0 / std::sqrt(2.0);
inline PolarizationState horizontal() { return {1.0, 0.0}; }
inline PolarizationState vertical() { return {0.0, 1.0}; }
inline PolarizationState plus() { return {kInvSqrt2, kInvSqrt2}; }
inline PolarizationState minus() { return {kInvSqrt2, -kInvSqrt2}; }
inline PolarizationState left() { return {kInvSqrt2, cplx(0.0, kInvSqrt2)}; }
inline PolarizationState right() { return {kInvSqrt2, cplx(0.0, -kInvSqrt2)}; }
}  // namespace states

/// Early/late phase pair applied by the Sagnac-loop modulator.
struct PognacPhases {
  double phi_early = 0.0;
  double phi_late = 0.0;
};

/// Output state of the Sagnac-loop encoder: (|H> + e^{i(phi_e - phi_l)}|V>)/sqrt(2).
/// Only the phase difference is observable.
inline PolarizationState prepare_pognac(const PognacPhases& phases) {
  double d = phases.phi_early - phases.phi_late;
  return {states::kInvSqrt2, states::kInvSqrt2 * cplx(std::cos(d), std::sin(d))};
}

/// Born-rule probability of `outcome` (0 or 1) when measuring in `basis`.
/// Z outcomes are the circular states {|L>, |R>}, X outcomes {|+>, |->}.
inline double measure_probability(const PolarizationState& state, Basis basis, int outcome) {
  PolarizationState eigen;
  if (basis == Basis::Z) {
    eigen = outcome == 0 ? states::left() : states::right();
  } else {
    eigen = outcome == 0 ? states::plus() : states::minus();
  }
  double p = fidelity(eigen, state);
  return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
}

/// 2x2 Jones matrix; fiber birefringence, actuators and diagnostics all act
/// through this type.
struct PolarizationUnitary {
  cplx m00{1.0, 0.0}, m01{0.0, 0.0};
  cplx m10{0.0, 0.0}, m11{1.0, 0.0};

  static PolarizationUnitary identity() { return {}; }

  /// max |(U^dag U - I)_ij|
  double unitarity_residual() const {
    cplx a = std::conj(m00) * m00 + std::conj(m10) * m10 - 1.0;
    cplx b = std::conj(m00) * m01 + std::conj(m10) * m11;
    cplx c = std::conj(m01) * m00 + std::conj(m11) * m10;
    cplx d = std::conj(m01) * m01 + std::conj(m11) * m11 - 1.0;
    return std::max(std::max(std::abs(a), std::abs(b)), std::max(std::abs(c), std::abs(d)));
  }

  PolarizationUnitary operator*(const PolarizationUnitary& o) const {
    return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11,
            m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11};
  }

  PolarizationState operator*(const PolarizationState& s) const {
    return {m00 * s.amp_h + m01 * s.amp_v, m10 * s.amp_h + m11 * s.amp_v};
  }

  /// Gram-Schmidt re-orthonormalization; keeps long drift products unitary.
  PolarizationUnitary reorthonormalized() const {
    double n0 = std::sqrt(std::norm(m00) + std::norm(m10));
    cplx a0 = m00 / n0, a1 = m10 / n0;
    cplx proj = std::conj(a0) * m01 + std::conj(a1) * m11;
    cplx b0 = m01 - proj * a0, b1 = m11 - proj * a1;
    double n1 = std::sqrt(std::norm(b0) + std::norm(b1));
    return {a0, b0 / n1, a1, b1 / n1};
  }
};

/// Poincare-sphere rotation by `angle` about the unit axis
/// (s1, s2, s3) = (H/V, diagonal, circular):
/// U = cos(a/2) I - i sin(a/2) (s1 sx + s2 sy + s3 sz) in a Pauli layout
/// chosen so that each axis fixes its own eigenstates (H/V for s1, +/- for
/// s2, L/R for s3).
inline PolarizationUnitary poincare_rotation(const std::array<double, 3>& axis, double angle) {
  double c = std::cos(0.5 * angle);
  double s = std::sin(0.5 * angle);
  // In the H/V Jones basis: the H/V Poincare axis is sigma_z, the diagonal
  // axis sigma_x, the circular axis sigma_y.
  cplx i(0.0, 1.0);
  return {c - i * s * axis[0], -i * s * (axis[1] - i * axis[2]),
          -i * s * (axis[1] + i * axis[2]), c + i * s * axis[0]};
}

inline PolarizationUnitary rotation_hv(double angle) {
  return poincare_rotation({1.0, 0.0, 0.0}, angle);
}
inline PolarizationUnitary rotation_diag(double angle) {
  return poincare_rotation({0.0, 1.0, 0.0}, angle);
}
inline PolarizationUnitary rotation_circ(double angle) {
  return poincare_rotation({0.0, 0.0, 1.0}, angle);
}

/// u * state; rejects matrices that have drifted off the unitary group.
inline PolarizationState apply_unitary(const PolarizationUnitary& u, const PolarizationState& state) {
  if (u.unitarity_residual() > 1e-8) {
    throw std::invalid_argument("apply_unitary: matrix is not unitary");
  }
  return u * state;
}

/// Stokes vector (diagnostic view only).
inline std::array<double, 3> stokes(const PolarizationState& s) {
  cplx hv = std::conj(s.amp_h) * s.amp_v;
  return {std::norm(s.amp_h) - std::norm(s.amp_v), 2.0 * hv.real(), -2.0 * hv.imag()};
}

inline constexpr double kPerfectExtinction = std::numeric_limits<double>::infinity();

/// Misalignment probability implied by an extinction ratio in dB, following
/// the QBER_opt = ER/(1+ER) convention with ER as the error:signal power
/// ratio.  33 dB -> ~5.0e-4.
inline double extinction_error_probability(double extinction_ratio_db) {
  if (std::isinf(extinction_ratio_db)) return 0.0;
  double er_linear = std::pow(10.0, extinction_ratio_db / 10.0);
  return 1.0 / (1.0 + er_linear);
}

/// Coherent leakage model of source imperfection: the output has overlap
/// eps = 1/(1+10^(ER/10)) with the complement of `ideal`, with a fresh
/// uniform relative phase each pulse.
inline PolarizationState imperfect_prepare(const PolarizationState& ideal,
                                           double extinction_ratio_db, Rng& rng) {
  if (std::isinf(extinction_ratio_db)) return ideal;
  if (extinction_ratio_db <= 0.0) {
    if (extinction_ratio_db < 0.0) throw std::invalid_argument("extinction ratio must be > 0 dB");
    // 0 dB: error and signal of equal power
  }
  double eps = extinction_error_probability(extinction_ratio_db);
  PolarizationState orth{-std::conj(ideal.amp_v), std::conj(ideal.amp_h)};
  double phase = rng.uniform(0.0, 2.0 * kPi);
  cplx leak = std::sqrt(eps) * cplx(std::cos(phase), std::sin(phase));
  double keep = std::sqrt(1.0 - eps);
  return PolarizationState{keep * ideal.amp_h + leak * orth.amp_h,
                           keep * ideal.amp_v + leak * orth.amp_v}
      .normalized();
}

}  // namespace qkdsim
