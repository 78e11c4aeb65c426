#pragma once

#include <cmath>

#include "qkdsim/channel.hpp"
#include "qkdsim/keyrate.hpp"
#include "qkdsim/receiver.hpp"
#include "qkdsim/transmitter.hpp"

namespace qkdsim {

/// Closed-form expected counts for a run with a compensated (aligned)
/// channel: Poisson photon statistics, per-detector thinning, dark counts
/// inside the gate window, balancing discards and optional hold-off dead
/// time.  This is the model curve plotted alongside the Monte Carlo points.
struct AnalyticModel {
  TransmitterConfig tx;
  ReceiverConfig rx;
  double loss_db = 0.0;         // total channel attenuation
  double extinction_ratio_db = 33.0;
  // Residual post-compensation rotation (see ChannelConfig); raises the
  // basis error probability in both bases by sin^2(angle/2).
  double misalignment_rad = 0.0;

  double transmittance() const { return std::pow(10.0, -loss_db / 10.0); }

  /// Fraction of the arrival-time distribution inside the gate.  The spread
  /// is the optical pulse profile convolved with the detection jitter.
  double arrival_sigma_ps() const {
    return std::sqrt(rx.jitter_ps * rx.jitter_ps + tx.pulse_sigma_ps() * tx.pulse_sigma_ps());
  }
  double gate_acceptance() const {
    double sigma = arrival_sigma_ps();
    if (sigma <= 0) return 1.0;
    return std::erf(0.5 * rx.gate_window_ps / (std::sqrt(2.0) * sigma));
  }

  /// Per-slot in-gate dark probability for one detector.
  double dark_per_slot() const { return rx.dark_hz * rx.gate_window_ps * 1e-12; }

  /// Fraction of slots carrying key pulses (prefix amortized away, comp
  /// string interleaved every period).
  double key_slot_fraction() const {
    if (tx.comp_string_len == 0) return 1.0;
    double per_period = tx.comp_period_s * tx.rate_hz;
    return 1.0 - double(tx.comp_string_len) / per_period;
  }

  struct Routing {
    double p[4];  // photon routing probability per detector
  };

  /// Routing probabilities for a photon of the given preparation, with the
  /// source misalignment eps folded in.
  Routing routing(Basis alice_basis) const {
    double eps = extinction_error_probability(extinction_ratio_db);
    double s = std::sin(0.5 * misalignment_rad);
    double em = s * s;
    eps = eps + em - 2.0 * eps * em;
    Routing r;
    if (alice_basis == Basis::Z) {
      r.p[0] = rx.p_z_bob * (1.0 - eps);        // correct Z detector
      r.p[1] = rx.p_z_bob * eps;                // wrong Z detector
      r.p[2] = (1.0 - rx.p_z_bob) * 0.5;
      r.p[3] = (1.0 - rx.p_z_bob) * 0.5;
    } else {
      r.p[0] = rx.p_z_bob * 0.5;
      r.p[1] = rx.p_z_bob * 0.5;
      r.p[2] = (1.0 - rx.p_z_bob) * (1.0 - eps);  // X+
      r.p[3] = (1.0 - rx.p_z_bob) * eps;          // X-
    }
    return r;
  }

  /// Hold-off throughput factor per detector, from the raw click rate.
  double dead_time_factor(int det) const {
    if (rx.hold_off_us <= 0) return 1.0;
    double T = transmittance();
    double g = gate_acceptance();
    double rate = rx.dark_hz;  // darks hit the detector whether gated or not
    for (Basis a : {Basis::Z, Basis::X}) {
      double p_a = a == Basis::Z ? tx.p_z_alice : 1.0 - tx.p_z_alice;
      Routing r = routing(a);
      double idx = a == Basis::Z ? 0 : 2;
      double p_photon;
      if (det == 0 || det == 1) {
        p_photon = a == Basis::Z ? r.p[det == 0 ? 0 : 1] : r.p[det];
      } else {
        p_photon = a == Basis::Z ? r.p[det] : r.p[det == 2 ? 2 : 3];
      }
      (void)idx;
      double mu_avg = tx.p_mu1 * tx.mu1 + tx.p_mu2 * tx.mu2;
      rate += tx.rate_hz * p_a * (1.0 - std::exp(-mu_avg * T * p_photon * rx.eta[det] * g));
    }
    return 1.0 / (1.0 + rate * rx.hold_off_us * 1e-6);
  }

  /// Expected sifted counts over `t` seconds.
  CountsTable expected_counts(double t) const {
    CountsTable c;
    c.t = t;
    double T = transmittance();
    double g = gate_acceptance();
    double nu = dark_per_slot();
    double fk = key_slot_fraction();
    double dead[4];
    for (int d = 0; d < 4; ++d) dead[d] = dead_time_factor(d);
    double keep[4];
    for (int d = 0; d < 4; ++d) keep[d] = balance_keep_probability(rx, Detector(d));

    auto cell = [&](Basis a, double mu, double p_cell, double& n, double& m) {
      Routing r = routing(a);
      int det_ok = a == Basis::Z ? 0 : 2;
      int det_err = a == Basis::Z ? 1 : 3;
      auto click = [&](int d, double p_route) {
        double lam = mu * T * p_route * rx.eta[d] * g * dead[d];
        double q = 1.0 - std::exp(-lam) * (1.0 - nu * dead[d]);
        return q * keep[d];
      };
      double q_ok = click(det_ok, r.p[det_ok]);
      double q_err = click(det_err, r.p[det_err]);
      double slots = tx.rate_hz * t * fk * p_cell;
      n += slots * (q_ok + q_err);
      m += slots * q_err;
    };

    cell(Basis::Z, tx.mu1, tx.p_z_alice * tx.p_mu1, c.n_z_mu1, c.m_z_mu1);
    cell(Basis::Z, tx.mu2, tx.p_z_alice * tx.p_mu2, c.n_z_mu2, c.m_z_mu2);
    cell(Basis::X, tx.mu1, (1.0 - tx.p_z_alice) * tx.p_mu1, c.n_x_mu1, c.m_x_mu1);
    cell(Basis::X, tx.mu2, (1.0 - tx.p_z_alice) * tx.p_mu2, c.n_x_mu2, c.m_x_mu2);
    return c;
  }

  /// Asymptotic secure key rate at this loss from the expected counts.
  double skr_infinity(double t, const SecurityParams& sec) const {
    CountsTable c = expected_counts(t);
    auto b = decoy_bounds(c, tx, sec, BoundMode::Asymptotic);
    return skr_asymptotic(b, c, sec);
  }
};

/// Highest loss (dB, on a grid) with a positive asymptotic key rate.
inline double skr_positive_loss_limit(AnalyticModel model, const SecurityParams& sec,
                                      double lo_db, double hi_db, double step_db,
                                      double t = 1000.0) {
  double last_positive = lo_db - step_db;
  for (double loss = lo_db; loss <= hi_db + 1e-9; loss += step_db) {
    model.loss_db = loss;
    if (model.skr_infinity(t, sec) > 0.0) last_positive = loss;
  }
  return last_positive;
}

}  // namespace qkdsim
