#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdsim/transmitter.hpp"

namespace qkdsim {

/// Sifted detections and errors per basis x intensity.
struct CountsTable {
  double n_z_mu1 = 0, n_z_mu2 = 0;
  double m_z_mu1 = 0, m_z_mu2 = 0;
  double n_x_mu1 = 0, n_x_mu2 = 0;
  double m_x_mu1 = 0, m_x_mu2 = 0;
  double t = 0;  // acquisition seconds

  double n_z() const { return n_z_mu1 + n_z_mu2; }
  double m_z() const { return m_z_mu1 + m_z_mu2; }
  double n_x() const { return n_x_mu1 + n_x_mu2; }
  double m_x() const { return m_x_mu1 + m_x_mu2; }
  double q_z() const { return n_z() > 0 ? m_z() / n_z() : 0.0; }
  double q_x() const { return n_x() > 0 ? m_x() / n_x() : 0.0; }

  void validate() const {
    auto chk = [](double m, double n) {
      if (m < 0 || n < 0 || m > n) throw std::invalid_argument("need 0 <= m <= n");
    };
    chk(m_z_mu1, n_z_mu1);
    chk(m_z_mu2, n_z_mu2);
    chk(m_x_mu1, n_x_mu1);
    chk(m_x_mu2, n_x_mu2);
  }
};

struct SecurityParams {
  double eps_sec = 1e-10;
  double eps_conf = 1e-15;
  double f_ec = 1.06;

  void validate() const {
    if (!(eps_sec > 0 && eps_sec < 1) || !(eps_conf > 0 && eps_conf < 1))
      throw std::invalid_argument("epsilons must be in (0,1)");
    if (f_ec < 1) throw std::invalid_argument("f_ec must be >= 1");
  }
};

inline double binary_entropy(double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("binary_entropy: p outside [0,1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Poisson photon-number weight tau_n = sum_k p_k e^{-mu_k} mu_k^n / n!.
inline double tau_n(const TransmitterConfig& tx, int n) {
  double fact = 1.0;
  for (int i = 2; i <= n; ++i) fact *= i;
  return tx.p_mu1 * std::exp(-tx.mu1) * std::pow(tx.mu1, n) / fact +
         tx.p_mu2 * std::exp(-tx.mu2) * std::pow(tx.mu2, n) / fact;
}

enum class BoundMode { Asymptotic, Finite };

struct DecoyBounds {
  double s_z0_lower = 0, s_z1_lower = 0;
  double s_x0_lower = 0, s_x1_lower = 0;
  double v_x1_upper = 0;
  double phi_z_upper = 0;
  double tau0 = 0, tau1 = 0;
  std::vector<std::string> clamp_events;
};

namespace detail {

/// Hoeffding deviation at failure probability eps_sec/19.
inline double hoeffding_delta(double n, const SecurityParams& sec) {
  return n > 0 ? std::sqrt(0.5 * n * std::log(19.0 / sec.eps_sec)) : 0.0;
}

/// Statistical fluctuation of the phase-error estimate when carrying an
/// X-basis observation over to the Z basis (random-sampling bound).
inline double phase_error_fluctuation(double eps, double ratio, double n_x, double n_z) {
  if (n_x <= 0 || n_z <= 0) return 0.5;
  double b = std::min(std::max(ratio, 1e-12), 1.0 - 1e-12);
  double c = n_x, d = n_z;
  double front = (c + d) * (1.0 - b) * b / (c * d * std::log(2.0));
  double inside = (c + d) / (c * d * (1.0 - b) * b) * (441.0 / (eps * eps));
  if (inside <= 1.0) return 0.0;
  return std::sqrt(front * std::log2(inside));
}

struct BasisCounts {
  double n1, n2, m1, m2;  // detections / errors at mu1, mu2
};

struct OneBasisBounds {
  double s0_lower, s0_upper, s1_lower, v1_upper;
};

inline OneBasisBounds one_decoy_basis_bounds(const BasisCounts& c, const TransmitterConfig& tx,
                                             const SecurityParams& sec, double dev_scale,
                                             double tau0, double tau1,
                                             std::vector<std::string>& clamps,
                                             const char* basis_name) {
  double mu1 = tx.mu1, mu2 = tx.mu2;
  double r1 = std::exp(mu1) / tx.p_mu1;
  double r2 = std::exp(mu2) / tx.p_mu2;
  double dn1 = dev_scale * hoeffding_delta(c.n1, sec);
  double dn2 = dev_scale * hoeffding_delta(c.n2, sec);
  double dm1 = dev_scale * hoeffding_delta(c.m1, sec);
  double dm2 = dev_scale * hoeffding_delta(c.m2, sec);

  double n1_hi = r1 * (c.n1 + dn1);
  double n1_lo = r1 * std::max(0.0, c.n1 - dn1);
  double n2_hi = r2 * (c.n2 + dn2);
  double n2_lo = r2 * std::max(0.0, c.n2 - dn2);
  double m1_hi = r1 * (c.m1 + dm1);
  double m2_lo = r2 * std::max(0.0, c.m2 - dm2);

  OneBasisBounds b;
  b.s0_lower = tau0 * (mu1 * n2_lo - mu2 * n1_hi) / (mu1 - mu2);
  if (b.s0_lower < 0) {
    b.s0_lower = 0;
    clamps.push_back(std::string(basis_name) + ":s0_lower clamped to 0");
  }

  // Vacuum detections err with probability 1/2, so twice the observed
  // errors upper-bounds the vacuum contribution.
  double m_tot = c.m1 + c.m2;
  b.s0_upper = 2.0 * (m_tot + dev_scale * hoeffding_delta(m_tot, sec));

  b.s1_lower = tau1 * mu1 / (mu2 * (mu1 - mu2)) *
               (n2_lo - (mu2 * mu2) / (mu1 * mu1) * n1_hi -
                (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1) * b.s0_upper / tau0);
  if (b.s1_lower < 0) {
    b.s1_lower = 0;
    clamps.push_back(std::string(basis_name) + ":s1_lower clamped to 0");
  }

  b.v1_upper = tau1 * (m1_hi - m2_lo) / (mu1 - mu2);
  if (b.v1_upper < 0) {
    b.v1_upper = 0;
    clamps.push_back(std::string(basis_name) + ":v1_upper clamped to 0");
  }
  return b;
}

}  // namespace detail

/// One-decoy vacuum / single-photon bounds and the phase-error upper bound.
/// Finite mode applies Hoeffding deviations in the pessimistic direction per
/// count plus the phase-error sampling fluctuation; `deviation_scale` is a
/// test hook (0 reproduces asymptotic numbers in finite mode).
inline DecoyBounds decoy_bounds(const CountsTable& counts, const TransmitterConfig& tx,
                                const SecurityParams& sec, BoundMode mode,
                                double deviation_scale = 1.0) {
  counts.validate();
  sec.validate();
  if (!(tx.mu1 > tx.mu2)) throw std::invalid_argument("decoy_bounds: need mu1 > mu2");
  double scale = mode == BoundMode::Asymptotic ? 0.0 : deviation_scale;

  DecoyBounds out;
  out.tau0 = tau_n(tx, 0);
  out.tau1 = tau_n(tx, 1);

  detail::BasisCounts zc{counts.n_z_mu1, counts.n_z_mu2, counts.m_z_mu1, counts.m_z_mu2};
  detail::BasisCounts xc{counts.n_x_mu1, counts.n_x_mu2, counts.m_x_mu1, counts.m_x_mu2};
  auto zb = detail::one_decoy_basis_bounds(zc, tx, sec, scale, out.tau0, out.tau1,
                                           out.clamp_events, "Z");
  auto xb = detail::one_decoy_basis_bounds(xc, tx, sec, scale, out.tau0, out.tau1,
                                           out.clamp_events, "X");
  out.s_z0_lower = zb.s0_lower;
  out.s_z1_lower = zb.s1_lower;
  out.s_x0_lower = xb.s0_lower;
  out.s_x1_lower = xb.s1_lower;
  out.v_x1_upper = xb.v1_upper;

  if (xb.s1_lower <= 0) {
    out.phi_z_upper = 0.5;
    out.clamp_events.push_back("phi_z set to 0.5 (no X single-photon lower bound)");
  } else {
    double ratio = xb.v1_upper / xb.s1_lower;
    double gamma = scale > 0 ? detail::phase_error_fluctuation(sec.eps_sec, ratio,
                                                               xb.s1_lower, zb.s1_lower)
                             : 0.0;
    out.phi_z_upper = ratio + gamma;
    if (out.phi_z_upper > 0.5) {
      out.phi_z_upper = 0.5;
      out.clamp_events.push_back("phi_z clamped to 0.5");
    }
    if (out.phi_z_upper < 0) out.phi_z_upper = 0;
  }
  return out;
}

/// SKR_inf = [s_Z0 + s_Z1 (1 - h(phi_Z)) - f n_Z h(Q_Z)] / t, clamped >= 0.
inline double skr_asymptotic(const DecoyBounds& b, const CountsTable& counts,
                             const SecurityParams& sec) {
  if (counts.t <= 0) throw std::invalid_argument("skr_asymptotic: t must be > 0");
  double phi = std::min(std::max(b.phi_z_upper, 0.0), 0.5);
  double key = b.s_z0_lower + b.s_z1_lower * (1.0 - binary_entropy(phi)) -
               sec.f_ec * counts.n_z() * binary_entropy(std::min(counts.q_z(), 0.5));
  return std::max(0.0, key / counts.t);
}

/// Finite-key penalty: [6 log2(19/eps_sec) + log2(2/eps_conf)] / t.
inline double finite_key_penalty(double t, const SecurityParams& sec) {
  if (t <= 0) throw std::invalid_argument("finite_key_penalty: t must be > 0");
  return (6.0 * std::log2(19.0 / sec.eps_sec) + std::log2(2.0 / sec.eps_conf)) / t;
}

/// SKR_fk = SKR_inf(finite bounds) - penalty, clamped >= 0.
inline double skr_finite(double skr_inf_with_finite_bounds, double t, const SecurityParams& sec) {
  return std::max(0.0, skr_inf_with_finite_bounds - finite_key_penalty(t, sec));
}

struct KeyRateReport {
  double loss_db = 0;
  double t_s = 0;
  double n_z = 0, q_z = 0, q_x = 0;
  double s_z0 = 0, s_z1 = 0, phi_z = 0;
  double skr_inf = 0;
  double skr_fk = -1;  // < 0 means "not computed"
  std::vector<std::string> clamp_events;
};

/// One matched slot: Alice's preparation joined with Bob's outcome.
struct MatchedEvent {
  std::uint64_t slot = 0;
  PulseRole role = PulseRole::Key;
  Basis alice_basis = Basis::Z;
  std::uint8_t alice_bit = 0;
  Intensity intensity = Intensity::Mu1;
  Basis bob_basis = Basis::Z;
  std::uint8_t bob_bit = 0;
  std::uint32_t source_photons = 0;  // ground truth (simulation oracle)
};

/// Standard basis reconciliation: keep KEY events with agreeing bases,
/// count errors where bits disagree (in X: a click on the minus detector
/// for a transmitted |+>).
inline CountsTable sift(const std::vector<MatchedEvent>& events, double t) {
  CountsTable c;
  c.t = t;
  for (const auto& e : events) {
    if (e.role != PulseRole::Key) continue;
    if (e.alice_basis != e.bob_basis) continue;
    bool err = e.bob_bit != e.alice_bit;
    bool mu1 = e.intensity == Intensity::Mu1;
    if (e.alice_basis == Basis::Z) {
      (mu1 ? c.n_z_mu1 : c.n_z_mu2) += 1;
      if (err) (mu1 ? c.m_z_mu1 : c.m_z_mu2) += 1;
    } else {
      (mu1 ? c.n_x_mu1 : c.n_x_mu2) += 1;
      if (err) (mu1 ? c.m_x_mu1 : c.m_x_mu2) += 1;
    }
  }
  return c;
}

}  // namespace qkdsim
