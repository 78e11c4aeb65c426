#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkdsim/receiver.hpp"
#include "qkdsim/transmitter.hpp"

namespace qkdsim {

struct SyncConfig {
  double nominal_period_ps = 20000.0;  // 50 MHz
  std::uint64_t sync_len = 1'000'000;  // L
  double corr_threshold = 6.0;         // peak significance required for lock
  double freq_search_ppm = 20.0;       // half-width of the frequency search
  double gate_window_ps = 300.0;       // decode acceptance window (full width)

  void validate() const {
    if (sync_len < 1) throw std::invalid_argument("sync_len must be >= 1");
    if (corr_threshold <= 0) throw std::invalid_argument("corr_threshold must be > 0");
  }
};

struct ClockSolution {
  double period_ps = 0.0;       // slot period in Bob's clock
  double offset_ps = 0.0;       // Bob-clock arrival time of Alice's slot 0
  double peak_significance = 0.0;

  std::int64_t slot_of(std::int64_t timetag_ps) const {
    return std::int64_t(std::llround((double(timetag_ps) - offset_ps) / period_ps));
  }
  double residual_ps(std::int64_t timetag_ps) const {
    std::int64_t s = slot_of(timetag_ps);
    return double(timetag_ps) - offset_ps - double(s) * period_ps;
  }
};

class SyncFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// |first circular moment| of tags folded modulo `period`.
inline double folding_power(const std::vector<std::int64_t>& tags, std::size_t begin,
                            std::size_t end, std::size_t stride, double t0, double period) {
  double cs = 0.0, sn = 0.0;
  for (std::size_t i = begin; i < end; i += stride) {
    double phase = 2.0 * kPi * (double(tags[i]) - t0) / period;
    cs += std::cos(phase);
    sn += std::sin(phase);
  }
  return std::sqrt(cs * cs + sn * sn);
}

}  // namespace detail

/// Recover the slot period, in Bob's clock, from times of arrival alone:
/// coarse grid over +-freq_search_ppm on a short leading window, then
/// geometrically growing windows with a refined grid, and a final linear
/// fit of the per-tag phase residuals.
inline double estimate_period(const std::vector<std::int64_t>& tags, const SyncConfig& cfg) {
  cfg.validate();
  if (tags.size() < 1000) throw SyncFailure("estimate_period: fewer than 1000 tags");
  double span = double(tags.back() - tags.front());
  if (span < 1e9) throw SyncFailure("estimate_period: tags span less than 1 ms");

  double t0 = double(tags.front());
  double period = cfg.nominal_period_ps;
  double half_width = cfg.freq_search_ppm * 1e-6;  // relative uncertainty

  // Window that keeps the worst-case phase slip below a quarter cycle.
  double window = 0.25 * period / half_width;
  // At low tag rates that window can be nearly empty, which would let the
  // coarse grid lock onto noise; grow it until it holds enough tags for the
  // folding peak to dominate.  The grid step below adapts to the window, so
  // the quarter-cycle slip bound still holds.
  constexpr std::size_t kMinWindowTags = 512;
  if (tags.size() > kMinWindowTags) {
    window = std::max(window, double(tags[kMinWindowTags - 1] - tags.front()));
  }
  window = std::min(window, span);

  constexpr std::size_t kMaxEval = 4096;
  while (true) {
    // tags inside the current window
    auto last = std::upper_bound(tags.begin(), tags.end(), std::int64_t(t0 + window));
    std::size_t n = std::size_t(last - tags.begin());
    std::size_t stride = std::max<std::size_t>(1, n / kMaxEval);
    double step = 0.25 * period / (window / period);  // ps; quarter-cycle at window edge
    step = std::min(step, period * half_width);
    double best_p = period, best_r = -1.0;
    for (double p = period * (1.0 - half_width); p <= period * (1.0 + half_width); p += step) {
      double r = detail::folding_power(tags, 0, n, stride, t0, p);
      if (r > best_r) {
        best_r = r;
        best_p = p;
      }
    }
    period = best_p;
    half_width = std::min(half_width, 1.5 * step / period);  // never grows
    if (window >= span) {
      // significance of the final folding peak against the all-noise null
      double n_eval = double((n + stride - 1) / stride);
      if (best_r < cfg.corr_threshold * std::sqrt(n_eval / 2.0)) {
        throw SyncFailure("estimate_period: no significant folding peak");
      }
      break;
    }
    window = std::min(window * 8.0, span);
  }

  // Final refinement: residual-vs-time linear regression.  The slope of the
  // nearest-slot residual is the remaining relative period error.  Tags
  // whose residual falls outside half a gate window are treated as noise.
  for (int pass = 0; pass < 2; ++pass) {
    double sw = 0, st = 0, sr = 0, stt = 0, str = 0;
    for (std::int64_t tag : tags) {
      double x = (double(tag) - t0) / period;
      double resid = (x - std::round(x)) * period;
      if (std::abs(resid) > 0.25 * period) continue;
      double t = double(tag) - t0;
      sw += 1;
      st += t;
      sr += resid;
      stt += t * t;
      str += t * resid;
    }
    double denom = sw * stt - st * st;
    if (sw < 2 || denom == 0) break;
    double slope = (sw * str - st * sr) / denom;
    period *= 1.0 + slope;
  }
  return period;
}

/// Sparse decoded sequence: slot indices relative to the first accepted tag,
/// with values +1 (bit 0) / -1 (bit 1).  X-detector tags and out-of-gate
/// tags are erasures and never appear.
struct DecodedBits {
  std::vector<std::uint64_t> index;
  std::vector<std::int8_t> value;
  std::int64_t t_ref_ps = 0;     // Bob-clock time of the first detection
  double comb_shift_ps = 0.0;    // slot-comb phase relative to t_ref_ps
};

inline DecodedBits decode_slot_bits(const std::vector<DetectionEvent>& tags, double period,
                                    const SyncConfig& cfg) {
  DecodedBits out;
  if (tags.empty()) return out;
  out.t_ref_ps = tags.front().timetag_ps;

  // Align the slot comb to the whole tag ensemble rather than to the first
  // tag alone: that tag carries its own timing spread, which would bias
  // every residual by up to a gate width.  The median wrapped residual is
  // robust against the uniform background of dark counts.
  {
    std::vector<double> wrapped;
    wrapped.reserve(tags.size());
    for (const auto& e : tags) {
      double x = double(e.timetag_ps - out.t_ref_ps) / period;
      wrapped.push_back((x - std::round(x)) * period);
    }
    std::nth_element(wrapped.begin(), wrapped.begin() + wrapped.size() / 2, wrapped.end());
    out.comb_shift_ps = wrapped[wrapped.size() / 2];
  }

  double half_gate = 0.5 * cfg.gate_window_ps;
  std::int64_t last_idx = -1;
  for (const auto& e : tags) {
    double x = (double(e.timetag_ps - out.t_ref_ps) - out.comb_shift_ps) / period;
    std::int64_t idx = std::llround(x);
    if (idx < 0) continue;
    if (std::abs((x - double(idx)) * period) > half_gate) continue;  // erasure
    if (detector_basis(e.detector) != Basis::Z) continue;            // erasure
    if (idx == last_idx) continue;  // one bit per slot
    last_idx = idx;
    out.index.push_back(std::uint64_t(idx));
    out.value.push_back(e.detector == Detector::Z0 ? +1 : -1);
  }
  return out;
}

namespace detail {

/// c[lag] = sum_i d[i] * s[i + lag] for lag in [0, n_lags), via FFT.
inline std::vector<double> fft_cross_correlation(const std::vector<double>& d,
                                                 const std::vector<double>& s,
                                                 std::size_t n_lags) {
  std::size_t need = s.size() + d.size();
  std::size_t n = 1;
  while (n < need) n <<= 1;

  double* buf = fftw_alloc_real(n);
  fftw_complex* spec_s = fftw_alloc_complex(n / 2 + 1);
  fftw_complex* spec_d = fftw_alloc_complex(n / 2 + 1);

  fftw_plan fwd = fftw_plan_dft_r2c_1d(int(n), buf, spec_s, FFTW_ESTIMATE);
  std::fill(buf, buf + n, 0.0);
  std::copy(s.begin(), s.end(), buf);
  fftw_execute(fwd);

  fftw_plan fwd2 = fftw_plan_dft_r2c_1d(int(n), buf, spec_d, FFTW_ESTIMATE);
  std::fill(buf, buf + n, 0.0);
  std::copy(d.begin(), d.end(), buf);
  fftw_execute(fwd2);

  // S * conj(D): circular correlation with s leading by `lag`
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = spec_s[k][0] * spec_d[k][0] + spec_s[k][1] * spec_d[k][1];
    double im = spec_s[k][1] * spec_d[k][0] - spec_s[k][0] * spec_d[k][1];
    spec_s[k][0] = re;
    spec_s[k][1] = im;
  }
  fftw_plan bwd = fftw_plan_dft_c2r_1d(int(n), spec_s, buf, FFTW_ESTIMATE);
  fftw_execute(bwd);

  std::vector<double> out(n_lags);
  double scale = 1.0 / double(n);
  for (std::size_t lag = 0; lag < n_lags && lag < n; ++lag) out[lag] = buf[lag] * scale;

  fftw_destroy_plan(fwd);
  fftw_destroy_plan(fwd2);
  fftw_destroy_plan(bwd);
  fftw_free(buf);
  fftw_free(spec_s);
  fftw_free(spec_d);
  return out;
}

struct CorrelationPeak {
  std::uint64_t lag = 0;
  double significance = 0.0;
  bool valid = false;
};

/// Peak of the correlation against the +-1 public string; significance is
/// (peak - mean) / std over the off-peak lags.
inline CorrelationPeak correlation_peak(const std::vector<double>& corr) {
  CorrelationPeak out;
  if (corr.size() < 8) return out;
  std::size_t best = 0;
  for (std::size_t i = 1; i < corr.size(); ++i)
    if (corr[i] > corr[best]) best = i;
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (i + 2 >= best && i <= best + 2) continue;  // exclude the peak region
    sum += corr[i];
    sum2 += corr[i] * corr[i];
    ++n;
  }
  double mean = sum / double(n);
  double var = sum2 / double(n) - mean * mean;
  double sd = var > 0 ? std::sqrt(var) : 0.0;
  out.lag = best;
  out.significance = sd > 0 ? (corr[best] - mean) / sd : 0.0;
  out.valid = true;
  return out;
}

}  // namespace detail

/// Absolute-time recovery: correlate the decoded bits against the public
/// L-bit prefix and accept the peak lag if it clears the significance
/// threshold.  Throws SyncFailure otherwise (the caller may retry with a
/// longer prefix).
inline ClockSolution find_offset(const DecodedBits& decoded, const TransmitterConfig& tx,
                                 double period, const SyncConfig& cfg) {
  cfg.validate();
  std::uint64_t L = cfg.sync_len;
  if (decoded.index.empty()) throw SyncFailure("find_offset: no decoded bits");

  std::uint64_t span = 0;
  for (std::size_t i = 0; i < decoded.index.size(); ++i)
    if (decoded.index[i] < L) span = std::max(span, decoded.index[i] + 1);
  if (span == 0) throw SyncFailure("find_offset: decoded bits do not overlap the prefix");

  std::vector<double> d(span, 0.0);
  for (std::size_t i = 0; i < decoded.index.size(); ++i)
    if (decoded.index[i] < L) d[decoded.index[i]] = double(decoded.value[i]);
  std::vector<double> s(L);
  for (std::uint64_t i = 0; i < L; ++i) s[i] = sync_string_bit(tx, i) ? -1.0 : 1.0;

  auto corr = detail::fft_cross_correlation(d, s, L);
  auto peak = detail::correlation_peak(corr);
  if (!peak.valid || peak.significance < cfg.corr_threshold) {
    throw SyncFailure("find_offset: correlation peak below threshold");
  }
  ClockSolution sol;
  sol.period_ps = period;
  sol.offset_ps = double(decoded.t_ref_ps) + decoded.comb_shift_ps - double(peak.lag) * period;
  sol.peak_significance = peak.significance;
  return sol;
}

/// Direct O(L*M) correlation scan; test oracle for find_offset (small L).
/// Returns the argmax lag, or -1 when there is nothing to correlate.
inline std::int64_t brute_force_offset(const DecodedBits& decoded, const std::vector<std::uint8_t>& public_string) {
  if (decoded.index.empty() || public_string.empty()) return -1;
  std::uint64_t L = public_string.size();
  std::int64_t best_lag = -1;
  double best = -1e300;
  for (std::uint64_t lag = 0; lag < L; ++lag) {
    double c = 0.0;
    for (std::size_t i = 0; i < decoded.index.size(); ++i) {
      std::uint64_t pos = decoded.index[i] + lag;
      if (pos >= L) break;
      c += double(decoded.value[i]) * (public_string[pos] ? -1.0 : 1.0);
    }
    if (c > best) {
      best = c;
      best_lag = std::int64_t(lag);
    }
  }
  return best_lag;
}

}  // namespace qkdsim
