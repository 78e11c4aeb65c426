#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qkdsim/analytic.hpp"
#include "qkdsim/channel.hpp"
#include "qkdsim/polcomp.hpp"
#include "qkdsim/receiver.hpp"
#include "qkdsim/rng.hpp"
#include "qkdsim/simulate.hpp"
#include "qkdsim/transmitter.hpp"

namespace qkdsim {

/// Interval-aggregated drift/compensation study.  One step per feedback
/// interval: the channel unitary drifts, per-interval counts are drawn from
/// the closed-form click probabilities (no per-slot work), and the
/// compensator takes its step.  Hours of link time run in seconds, with the
/// same controller, drift model and statistics as the tag-level engine.
struct LongRunConfig {
  TransmitterConfig tx;
  ChannelConfig channel;
  ReceiverConfig rx;
  PolCompSettings polcomp;
  std::uint64_t n_intervals = 3600;
  std::uint64_t seed = 1;
  bool randomize_channel_unitary = false;
};

struct LongRunResult {
  std::vector<PolCompLogRow> log;
  CountsTable counts;  // aggregated sifted key counts across the run
  double mean_q_z = 0;
  double mean_cost = 0;
};

namespace detail {

/// Per-slot kept-click probability for one detector: Poissonian signal
/// thinned by routing/efficiency/gate, one dark chance in the gate, then the
/// balancing discard.
inline double kept_click_probability(double mu, double transmit, double route, double eta,
                                     double gate_acc, double dark_per_slot, double keep) {
  double lam = mu * transmit * route * eta * gate_acc;
  return (1.0 - std::exp(-lam) * (1.0 - dark_per_slot)) * keep;
}

}  // namespace detail

inline LongRunResult run_compensation_loop(const LongRunConfig& cfg) {
  cfg.tx.validate();
  cfg.channel.validate();
  cfg.rx.validate();

  AnalyticModel model;
  model.tx = cfg.tx;
  model.rx = cfg.rx;
  const double T = transmittance(cfg.channel);
  const double g = model.gate_acceptance();
  const double nu = model.dark_per_slot();
  const double eps = extinction_error_probability(cfg.tx.extinction_ratio_db);
  double keep[kNumDetectors];
  for (int d = 0; d < kNumDetectors; ++d)
    keep[d] = balance_keep_probability(cfg.rx, Detector(d));

  const std::uint64_t spi =
      std::uint64_t(cfg.tx.comp_period_s * cfg.tx.rate_hz + 0.5);
  const std::uint64_t n_comp = std::min(cfg.tx.comp_string_len, spi);
  const std::uint64_t n_key = spi - n_comp;
  const double interval_s = cfg.tx.comp_period_s;

  Rng rng(cfg.seed, stream::kPolComp);
  Rng drift_rng(cfg.seed, stream::kDrift);
  ChannelState chan = ChannelState::initial(cfg.channel, drift_rng);
  if (cfg.randomize_channel_unitary)
    chan.unitary = detail::random_channel_unitary(drift_rng);

  CompensatorState comp;
  comp.gain = cfg.polcomp.gain;
  comp.max_step_rad = cfg.polcomp.max_step_rad;
  comp.min_samples = cfg.polcomp.min_samples;

  LongRunResult out;
  out.counts.t = double(cfg.n_intervals) * interval_s;
  QberSample prev;
  bool have_prev = false;
  double sum_cost = 0;

  for (std::uint64_t interval = 0; interval < cfg.n_intervals; ++interval) {
    const PolarizationUnitary u_eff = comp.bank.unitary() * chan.unitary;
    // basis-level misalignment error probabilities, source floor folded in
    double e_z = measure_probability(u_eff * states::left(), Basis::Z, 1);
    double e_x = measure_probability(u_eff * states::plus(), Basis::X, 1);
    e_z = e_z + eps * (1.0 - 2.0 * e_z);
    e_x = e_x + eps * (1.0 - 2.0 * e_x);

    // --- comp string (Z basis, mu1) ---
    double p_ok = detail::kept_click_probability(cfg.tx.mu1, T, cfg.rx.p_z_bob * (1.0 - e_z),
                                                 cfg.rx.eta[0], g, nu, keep[0]);
    double p_er = detail::kept_click_probability(cfg.tx.mu1, T, cfg.rx.p_z_bob * e_z,
                                                 cfg.rx.eta[1], g, nu, keep[1]);
    std::uint64_t k_ok = rng.binomial(n_comp, p_ok);
    std::uint64_t k_er = rng.binomial(n_comp, p_er);

    // --- key slots: Z for the key counts, X for the feedback ---
    auto key_cell = [&](Basis basis, double mu, double p_cell, double e, double& n, double& m) {
      int det_ok = basis == Basis::Z ? 0 : 2;
      int det_er = basis == Basis::Z ? 1 : 3;
      double p_basis = basis == Basis::Z ? cfg.rx.p_z_bob : 1.0 - cfg.rx.p_z_bob;
      double q_ok = detail::kept_click_probability(mu, T, p_basis * (1.0 - e),
                                                   cfg.rx.eta[det_ok], g, nu, keep[det_ok]);
      double q_er = detail::kept_click_probability(mu, T, p_basis * e, cfg.rx.eta[det_er], g, nu,
                                                   keep[det_er]);
      std::uint64_t slots = std::uint64_t(double(n_key) * p_cell + 0.5);
      std::uint64_t ok = rng.binomial(slots, q_ok);
      std::uint64_t er = rng.binomial(slots, q_er);
      n += double(ok + er);
      m += double(er);
    };

    CountsTable ic;
    key_cell(Basis::Z, cfg.tx.mu1, cfg.tx.p_z_alice * cfg.tx.p_mu1, e_z, ic.n_z_mu1, ic.m_z_mu1);
    key_cell(Basis::Z, cfg.tx.mu2, cfg.tx.p_z_alice * cfg.tx.p_mu2, e_z, ic.n_z_mu2, ic.m_z_mu2);
    key_cell(Basis::X, cfg.tx.mu1, (1.0 - cfg.tx.p_z_alice) * cfg.tx.p_mu1, e_x, ic.n_x_mu1,
             ic.m_x_mu1);
    key_cell(Basis::X, cfg.tx.mu2, (1.0 - cfg.tx.p_z_alice) * cfg.tx.p_mu2, e_x, ic.n_x_mu2,
             ic.m_x_mu2);
    out.counts.n_z_mu1 += ic.n_z_mu1;
    out.counts.n_z_mu2 += ic.n_z_mu2;
    out.counts.m_z_mu1 += ic.m_z_mu1;
    out.counts.m_z_mu2 += ic.m_z_mu2;
    out.counts.n_x_mu1 += ic.n_x_mu1;
    out.counts.n_x_mu2 += ic.n_x_mu2;
    out.counts.m_x_mu1 += ic.m_x_mu1;
    out.counts.m_x_mu2 += ic.m_x_mu2;

    QberSample q;
    q.interval_index = interval;
    q.n_z = k_ok + k_er;
    q.n_x = std::uint64_t(ic.n_x());
    if (q.n_z > 0) {
      q.q_z = double(k_er) / double(q.n_z);
    } else {
      q.q_z = have_prev ? prev.q_z : 0.0;
      q.stale = true;
    }
    if (q.n_x > 0) {
      q.q_x = ic.m_x() / ic.n_x();
    } else {
      q.q_x = have_prev ? prev.q_x : 0.0;
      q.stale = true;
    }

    if (cfg.polcomp.enabled) comp = controller_step(comp, q);

    PolCompLogRow row;
    row.interval = interval;
    row.q_z = q.q_z;
    row.q_x = q.q_x;
    row.n_z = q.n_z;
    row.n_x = q.n_x;
    for (int a = 0; a < 4; ++a) row.theta[a] = comp.bank.theta[a];
    row.active = comp.active_actuator;
    row.direction = comp.direction;
    out.log.push_back(row);
    sum_cost += compensation_cost(q);
    prev = q;
    have_prev = true;

    chan = advance_drift(chan, interval_s, cfg.channel, drift_rng);
  }

  out.mean_q_z = out.counts.q_z();
  out.mean_cost = cfg.n_intervals > 0 ? sum_cost / double(cfg.n_intervals) : 0.0;
  return out;
}

}  // namespace qkdsim
