#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdsim/channel.hpp"
#include "qkdsim/keyrate.hpp"
#include "qkdsim/polcomp.hpp"
#include "qkdsim/qubit4sync.hpp"
#include "qkdsim/receiver.hpp"
#include "qkdsim/rng.hpp"
#include "qkdsim/transmitter.hpp"

namespace qkdsim {

struct PolCompSettings {
  bool enabled = true;
  double gain = 2.0;
  double max_step_rad = 0.3;
  std::uint64_t min_samples = 100;
};

/// Full description of one run.  `master_seed` drives every random stream;
/// two runs with equal configs are bit-identical.
struct ScenarioConfig {
  TransmitterConfig tx;
  ChannelConfig channel;
  ReceiverConfig rx;
  SyncConfig sync;
  PolCompSettings polcomp;
  SecurityParams security;
  double duration_s = 1.0;
  std::uint64_t master_seed = 1;
  std::string output_dir;   // empty: no files written
  bool randomize_channel_unitary = false;  // start from a random fiber unitary
  bool collect_matched = false;            // keep every matched event (tests)

  /// Copy the shared knobs into the sub-configs so the modules agree.
  void normalize() {
    sync.nominal_period_ps = tx.slot_period_ps();
    sync.sync_len = tx.sync_len;
    sync.gate_window_ps = rx.gate_window_ps;
    tx.seed = master_seed;
    channel.seed = master_seed;
    rx.seed = master_seed;
  }

  void validate() const {
    tx.validate();
    channel.validate();
    rx.validate();
    sync.validate();
    security.validate();
    if (duration_s <= 0) throw std::invalid_argument("duration_s must be > 0");
    if (duration_s * tx.rate_hz < double(tx.sync_len))
      throw std::invalid_argument("duration too short to hold the sync prefix");
  }
};

/// Every time tag ends up in exactly one bucket; the conservation identity
/// tags_total == sum(buckets) is asserted by the audit test.
struct AuditCounters {
  std::uint64_t tags_total = 0;
  std::uint64_t out_of_schedule = 0;   // slot index outside the run
  std::uint64_t gated_out = 0;         // residual beyond the gate window
  std::uint64_t balance_discarded = 0; // efficiency-balancing discard
  std::uint64_t squash_dropped = 0;    // extra clicks in a multi-click slot
  std::uint64_t sync_assigned = 0;
  std::uint64_t comp_assigned = 0;
  std::uint64_t key_basis_mismatch = 0;
  std::uint64_t key_sifted = 0;

  std::uint64_t accounted() const {
    return out_of_schedule + gated_out + balance_discarded + squash_dropped + sync_assigned +
           comp_assigned + key_basis_mismatch + key_sifted;
  }
};

/// Simulation-only oracle: photon numbers actually emitted for the sifted
/// detections, used to validate the decoy estimates against ground truth.
struct GroundTruthTallies {
  std::uint64_t z_sifted_vacuum = 0;  // source emitted 0 photons (click was a dark)
  std::uint64_t z_sifted_single = 0;
  std::uint64_t z_sifted_multi = 0;
  std::uint64_t x_sifted_vacuum = 0;
  std::uint64_t x_sifted_single = 0;
  std::uint64_t x_sifted_multi = 0;
};

/// Basis-mismatched detections (normally discarded by sifting).  With
/// mutually unbiased bases their "error" fraction sits at 50%; a deviation
/// flags a basis-alignment defect.
struct CrossBasisTallies {
  std::uint64_t z_sent_x_measured = 0;
  std::uint64_t z_sent_x_minus = 0;  // outcome 1 of the above
  std::uint64_t x_sent_z_measured = 0;
  std::uint64_t x_sent_z_one = 0;

  double q_cross_zx() const {
    return z_sent_x_measured ? double(z_sent_x_minus) / double(z_sent_x_measured) : 0.0;
  }
  double q_cross_xz() const {
    return x_sent_z_measured ? double(x_sent_z_one) / double(x_sent_z_measured) : 0.0;
  }
};

/// One feedback interval of the compensation loop, as written to the CSV.
struct PolCompLogRow {
  std::uint64_t interval = 0;
  double q_z = 0, q_x = 0;
  std::uint64_t n_z = 0, n_x = 0;
  double theta[4] = {0, 0, 0, 0};
  int active = 0;
  int direction = +1;
};

struct RunReport {
  ClockSolution clock;
  std::uint64_t lock_interval = 0;  // feedback interval in which lock happened
  std::vector<PolCompLogRow> polcomp_log;
  CountsTable counts;
  DecoyBounds bounds_asym;
  DecoyBounds bounds_finite;
  KeyRateReport keyrate;
  AuditCounters audit;
  GroundTruthTallies truth;
  CrossBasisTallies cross;
  std::vector<MatchedEvent> matched;  // only when collect_matched
  double wall_seconds = 0.0;
};

namespace detail {

/// Rotation about a uniform random axis by a uniform angle; used to start a
/// run from an unknown fiber transformation.
inline PolarizationUnitary random_channel_unitary(Rng& rng) {
  return poincare_rotation(ChannelState::random_axis(rng), rng.uniform(0.0, 2.0 * kPi));
}

inline void add_sifted(CountsTable& c, const MatchedEvent& e) {
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

inline void add_truth(GroundTruthTallies& t, const MatchedEvent& e) {
  if (e.alice_basis == Basis::Z) {
    if (e.source_photons == 0)
      ++t.z_sifted_vacuum;
    else if (e.source_photons == 1)
      ++t.z_sifted_single;
    else
      ++t.z_sifted_multi;
  } else {
    if (e.source_photons == 0)
      ++t.x_sifted_vacuum;
    else if (e.source_photons == 1)
      ++t.x_sifted_single;
    else
      ++t.x_sifted_multi;
  }
}

/// Accumulators for the per-interval clock refit (residual vs time).  The
/// abscissa is shifted to the first sample: late in a run the raw timestamps
/// reach ~1e14 ps while their in-interval spread is ~1e12 ps, and the moment
/// sums would lose the slope to cancellation.
struct RefitSums {
  double n = 0, sx = 0, sr = 0, sxx = 0, sxr = 0;
  double x0 = 0;
  void add(double x, double r) {
    if (n == 0) x0 = x;
    double u = x - x0;
    n += 1;
    sx += u;
    sr += r;
    sxx += u * u;
    sxr += u * r;
  }
};

}  // namespace detail

/// Tag-level Monte Carlo of the whole link: pulse schedule, photon
/// statistics, fiber drift, detection, time-of-arrival clock recovery,
/// matching, the 1 s compensation feedback loop, sifting and key-rate
/// analysis.
inline RunReport run_scenario(ScenarioConfig cfg) {
  const auto wall_start = std::chrono::steady_clock::now();
  cfg.normalize();
  cfg.validate();

  const double period_ps = cfg.tx.slot_period_ps();
  const double T = transmittance(cfg.channel);
  const std::uint64_t total_slots = std::uint64_t(cfg.duration_s * cfg.tx.rate_hz + 0.5);
  const double half_gate = 0.5 * cfg.rx.gate_window_ps;
  // The clock refit must see residuals beyond the match gate: a recovered
  // period off by one part in 1e10 walks the comb ~100 ps/s, and a refit fed
  // only by in-gate tags starves before it can correct that.  The wider
  // window picks up some uniform dark background, which is zero-mean and
  // merely dilutes the regression.
  const double refit_half_window = std::max(half_gate, 0.1 * period_ps);
  ScheduleView sched(cfg.tx, total_slots);

  // Photon time tags spread by the optical pulse profile convolved with the
  // detection jitter; darks and hold-off use the plain receiver config.
  ReceiverConfig rx_detect = cfg.rx;
  rx_detect.jitter_ps = std::sqrt(cfg.rx.jitter_ps * cfg.rx.jitter_ps +
                                  cfg.tx.pulse_sigma_ps() * cfg.tx.pulse_sigma_ps());

  const std::uint64_t photon_seed = mix_seed(cfg.master_seed, stream::kPhotons);
  const std::uint64_t match_seed = mix_seed(cfg.master_seed, stream::kReceiver);
  Rng drift_rng(cfg.master_seed, stream::kDrift);
  Rng init_rng(cfg.master_seed, stream::kChannel);

  ChannelState chan = ChannelState::initial(cfg.channel, init_rng);
  if (cfg.randomize_channel_unitary) chan.unitary = detail::random_channel_unitary(init_rng);

  CompensatorState comp;
  comp.gain = cfg.polcomp.gain;
  comp.max_step_rad = cfg.polcomp.max_step_rad;
  comp.min_samples = cfg.polcomp.min_samples;

  double keep_prob[kNumDetectors];
  for (int d = 0; d < kNumDetectors; ++d)
    keep_prob[d] = balance_keep_probability(cfg.rx, Detector(d));

  const std::uint64_t slots_per_interval =
      std::max<std::uint64_t>(1, std::uint64_t(cfg.tx.comp_period_s * cfg.tx.rate_hz + 0.5));
  const std::uint64_t n_intervals = (total_slots + slots_per_interval - 1) / slots_per_interval;

  RunReport rep;
  bool locked = false;
  std::vector<DetectionEvent> pending;  // tags buffered until clock lock
  QberSample prev_q;
  bool have_prev = false;

  for (std::uint64_t interval = 0; interval < n_intervals; ++interval) {
    const std::uint64_t s0 = interval * slots_per_interval;
    const std::uint64_t s1 = std::min(total_slots, s0 + slots_per_interval);
    const double interval_s = double(s1 - s0) * period_ps * 1e-12;
    const PolarizationUnitary u_eff = comp.bank.unitary() * chan.unitary;

    std::vector<DetectionEvent> tags;
    for (std::uint64_t slot = s0; slot < s1; ++slot) {
      PreparedPulse p = sched.at(slot);
      Rng pr(photon_seed, slot);
      std::uint64_t photons = pr.poisson(p.mean_photons);
      if (photons == 0) continue;
      std::uint64_t surviving = pr.binomial(photons, T);
      if (surviving == 0) continue;
      PolarizationState psi = pulse_to_state(p);
      psi = imperfect_prepare(psi, cfg.tx.extinction_ratio_db, pr);
      psi = u_eff * psi;
      auto events = detect_slot(surviving, psi, double(slot) * period_ps, rx_detect, pr);
      tags.insert(tags.end(), events.begin(), events.end());
    }

    Rng dark_rng(cfg.master_seed, stream::kDarks, interval);
    auto darks = inject_dark_counts(interval_s, cfg.rx, dark_rng);
    const std::int64_t bob_start = to_bob_clock(double(s0) * period_ps, cfg.rx);
    for (auto& e : darks) e.timetag_ps += bob_start;

    tags = merge_tags(std::move(tags), darks);
    tags = apply_hold_off(std::move(tags), cfg.rx);
    rep.audit.tags_total += tags.size();

    if (!locked) {
      pending.insert(pending.end(), tags.begin(), tags.end());
      bool ready = pending.size() >= 1000 &&
                   !pending.empty() &&
                   double(pending.back().timetag_ps - pending.front().timetag_ps) >= 1e9;
      if (!ready) {
        chan = advance_drift(chan, interval_s, cfg.channel, drift_rng);
        continue;  // keep buffering; SyncFailure below if the run ends first
      }
      std::vector<std::int64_t> times;
      times.reserve(pending.size());
      for (const auto& e : pending) times.push_back(e.timetag_ps);
      double period = estimate_period(times, cfg.sync);
      DecodedBits decoded = decode_slot_bits(pending, period, cfg.sync);
      rep.clock = find_offset(decoded, cfg.tx, period, cfg.sync);
      rep.lock_interval = interval;
      locked = true;
      tags = std::move(pending);  // match the whole buffered range at once
      pending.clear();
    }

    // --- matching: tag -> slot -> Alice's preparation ---
    std::vector<MatchedEvent> interval_events;  // comp + sifted-X, for the QBER feed
    detail::RefitSums refit;
    std::size_t i = 0;
    while (i < tags.size()) {
      const std::int64_t slot = rep.clock.slot_of(tags[i].timetag_ps);
      // gather the group of tags landing in this slot
      std::size_t j = i;
      while (j < tags.size() && rep.clock.slot_of(tags[j].timetag_ps) == slot) ++j;
      if (slot < 0 || std::uint64_t(slot) >= total_slots) {
        rep.audit.out_of_schedule += j - i;
        i = j;
        continue;
      }
      Rng mr(match_seed, std::uint64_t(slot));
      Detector kept[kNumDetectors];
      int n_kept = 0;
      for (std::size_t k = i; k < j; ++k) {
        double resid = rep.clock.residual_ps(tags[k].timetag_ps);
        if (std::abs(resid) <= refit_half_window)
          refit.add(double(tags[k].timetag_ps) - rep.clock.offset_ps, resid);
        if (std::abs(resid) > half_gate) {
          ++rep.audit.gated_out;
          continue;
        }
        if (!mr.bernoulli(keep_prob[int(tags[k].detector)])) {
          ++rep.audit.balance_discarded;
          continue;
        }
        kept[n_kept++] = tags[k].detector;
      }
      i = j;
      if (n_kept == 0) continue;
      int pick = n_kept == 1 ? 0 : int(mr.uniform() * n_kept);
      rep.audit.squash_dropped += std::uint64_t(n_kept - 1);
      const Detector det = kept[pick];

      PreparedPulse p = sched.at(std::uint64_t(slot));
      MatchedEvent me;
      me.slot = std::uint64_t(slot);
      me.role = p.role;
      me.alice_basis = p.basis;
      me.alice_bit = p.bit;
      me.intensity = p.intensity;
      me.bob_basis = detector_basis(det);
      me.bob_bit = std::uint8_t(detector_outcome(det));
      me.source_photons =
          std::uint32_t(Rng(photon_seed, std::uint64_t(slot)).poisson(p.mean_photons));

      switch (me.role) {
        case PulseRole::Sync:
          ++rep.audit.sync_assigned;
          break;
        case PulseRole::Comp:
          ++rep.audit.comp_assigned;
          interval_events.push_back(me);
          break;
        case PulseRole::Key:
          if (me.alice_basis != me.bob_basis) {
            ++rep.audit.key_basis_mismatch;
            if (me.alice_basis == Basis::Z) {
              ++rep.cross.z_sent_x_measured;
              rep.cross.z_sent_x_minus += me.bob_bit;
            } else {
              ++rep.cross.x_sent_z_measured;
              rep.cross.x_sent_z_one += me.bob_bit;
            }
          } else {
            ++rep.audit.key_sifted;
            detail::add_sifted(rep.counts, me);
            detail::add_truth(rep.truth, me);
            if (me.alice_basis == Basis::X) interval_events.push_back(me);
          }
          break;
      }
      if (cfg.collect_matched) rep.matched.push_back(me);
    }

    // --- slow clock tracking: residual-vs-time fit over this interval ---
    if (refit.n >= 50) {
      double denom = refit.n * refit.sxx - refit.sx * refit.sx;
      if (denom > 0) {
        double slope = (refit.n * refit.sxr - refit.sx * refit.sr) / denom;
        double intercept = (refit.sr - slope * refit.sx) / refit.n;
        // translate back from the shifted abscissa: resid = intercept + slope*(x - x0)
        rep.clock.offset_ps += intercept - slope * refit.x0;
        rep.clock.period_ps *= 1.0 + slope;
      }
    }

    // --- compensation feedback ---
    QberSample q = estimate_qber(interval_events, interval, have_prev ? &prev_q : nullptr);
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
    rep.polcomp_log.push_back(row);
    prev_q = q;
    have_prev = true;

    chan = advance_drift(chan, interval_s, cfg.channel, drift_rng);
  }

  if (!locked) throw SyncFailure("run ended before the clock could lock");

  rep.counts.t = cfg.duration_s;
  rep.bounds_asym = decoy_bounds(rep.counts, cfg.tx, cfg.security, BoundMode::Asymptotic);
  rep.bounds_finite = decoy_bounds(rep.counts, cfg.tx, cfg.security, BoundMode::Finite);
  double skr_inf = skr_asymptotic(rep.bounds_asym, rep.counts, cfg.security);
  double skr_inf_fin = skr_asymptotic(rep.bounds_finite, rep.counts, cfg.security);

  rep.keyrate.loss_db = cfg.channel.total_loss_db();
  rep.keyrate.t_s = cfg.duration_s;
  rep.keyrate.n_z = rep.counts.n_z();
  rep.keyrate.q_z = rep.counts.q_z();
  rep.keyrate.q_x = rep.counts.q_x();
  rep.keyrate.s_z0 = rep.bounds_asym.s_z0_lower;
  rep.keyrate.s_z1 = rep.bounds_asym.s_z1_lower;
  rep.keyrate.phi_z = rep.bounds_asym.phi_z_upper;
  rep.keyrate.skr_inf = skr_inf;
  rep.keyrate.skr_fk = skr_finite(skr_inf_fin, cfg.duration_s, cfg.security);
  rep.keyrate.clamp_events = rep.bounds_finite.clamp_events;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return rep;
}

}  // namespace qkdsim
