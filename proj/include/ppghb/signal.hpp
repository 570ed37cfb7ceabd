#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppghb/common.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class Wavelength : int { nm660 = 660, nm730 = 730, nm850 = 850, nm940 = 940 };

inline constexpr std::array<Wavelength, 4> all_wavelengths = {
    Wavelength::nm660, Wavelength::nm730, Wavelength::nm850, Wavelength::nm940};

inline int to_nm(Wavelength w) { return static_cast<int>(w); }

inline Wavelength wavelength_from_nm(int nm) {
  for (Wavelength w : all_wavelengths)
    if (to_nm(w) == nm) return w;
  throw format_error("unknown wavelength " + std::to_string(nm) +
                     " nm (expected 660, 730, 850 or 940)");
}

// One subject's four-channel raw recording plus metadata.
struct PpgRecord {
  std::string subject_id;
  double fs = 0.0;  // Hz
  std::map<Wavelength, std::vector<double>> channels;
  double age = 0.0;  // years
  Sex sex = Sex::female;
  std::optional<double> hb_ref;  // g/L, absent at inference time
};

// The PPG band edge is 5 Hz; fs must leave Nyquist headroom above it.
inline void validate_record(const PpgRecord& rec) {
  if (rec.fs <= 10.0)
    throw format_error("record " + rec.subject_id + ": sampling rate must exceed 10 Hz");
  std::size_t len = 0;
  bool first = true;
  for (Wavelength w : all_wavelengths) {
    auto it = rec.channels.find(w);
    if (it == rec.channels.end())
      throw format_error("record " + rec.subject_id + ": missing " +
                         std::to_string(to_nm(w)) + " nm channel");
    if (first) {
      len = it->second.size();
      first = false;
    } else if (it->second.size() != len) {
      throw format_error("record " + rec.subject_id + ": channel lengths differ");
    }
  }
}

struct Segment {
  std::string subject_id;
  std::size_t index = 0;
  Wavelength wavelength = Wavelength::nm660;
  std::vector<double> raw;
  std::vector<double> filtered;  // populated by filter_segment
  double fs = 0.0;
};

struct PsdEstimate {
  std::vector<double> freqs;  // Hz, strictly increasing
  std::vector<double> power;  // one-sided density, >= 0

  double bin_width() const {
    return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0;
  }
};

struct QualityIndices {
  double snr_db = 0.0;  // +inf when no out-of-band power exists
  double sqi = 0.0;     // in [0, 1]
};

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

inline constexpr std::size_t default_window_len = 500;

// Non-overlapping fixed-length windows; the trailing partial window is
// discarded. Segment k covers the identical sample range in every channel.
inline std::map<Wavelength, std::vector<Segment>> segment_record(
    const PpgRecord& rec, std::size_t window_len = default_window_len) {
  if (window_len < 2) throw config_error("window_len must be >= 2");
  validate_record(rec);
  const std::size_t len = rec.channels.begin()->second.size();
  if (len < window_len)
    throw format_error("record too short: subject " + rec.subject_id + " has " +
                       std::to_string(len) + " samples, window is " +
                       std::to_string(window_len));
  const std::size_t n_segments = len / window_len;
  std::map<Wavelength, std::vector<Segment>> out;
  for (const auto& [w, samples] : rec.channels) {
    std::vector<Segment> segs;
    segs.reserve(n_segments);
    for (std::size_t k = 0; k < n_segments; ++k) {
      Segment s;
      s.subject_id = rec.subject_id;
      s.index = k;
      s.wavelength = w;
      s.fs = rec.fs;
      s.raw.assign(samples.begin() + static_cast<std::ptrdiff_t>(k * window_len),
                   samples.begin() + static_cast<std::ptrdiff_t>((k + 1) * window_len));
      segs.push_back(std::move(s));
    }
    out.emplace(w, std::move(segs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Butterworth bandpass design (zpk -> cascaded biquads)
// ---------------------------------------------------------------------------

struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;  // numerator
  double a1 = 0.0, a2 = 0.0;            // denominator, a0 normalized to 1
};

struct SosFilter {
  std::vector<Biquad> sections;
  double fs = 0.0;

  // H(e^{j 2 pi f / fs}) evaluated section by section.
  std::complex<double> response(double freq_hz) const {
    const double w = 2.0 * M_PI * freq_hz / fs;
    const std::complex<double> z1 = std::polar(1.0, -w);  // z^-1
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h = 1.0;
    for (const Biquad& s : sections)
      h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
  }

  double magnitude_db(double freq_hz) const {
    return 20.0 * std::log10(std::abs(response(freq_hz)));
  }
};

namespace detail {

// Largest pole magnitude of z^2 + a1 z + a2.
inline double pole_radius(const Biquad& s) {
  const std::complex<double> disc =
      std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
  const std::complex<double> r1 = (-s.a1 + disc) / 2.0;
  const std::complex<double> r2 = (-s.a1 - disc) / 2.0;
  return std::max(std::abs(r1), std::abs(r2));
}

}  // namespace detail

// Digital Butterworth bandpass via the analog prototype, lowpass-to-bandpass
// transform and bilinear transform with frequency pre-warping. Returns
// `order` biquad sections (2*order poles), each with zeros at z = +1 and -1.
inline SosFilter design_bandpass(double fs, double low_hz = 0.5, double high_hz = 5.0,
                                 int order = 3) {
  if (!(fs > 0.0) || !(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < fs / 2.0))
    throw config_error("invalid band: need 0 < low < high < fs/2, got low=" +
                       std::to_string(low_hz) + " high=" + std::to_string(high_hz) +
                       " fs=" + std::to_string(fs));
  if (order < 1 || order > 12) throw config_error("invalid band: order out of range");

  using cd = std::complex<double>;
  const double fs2 = 2.0 * fs;

  // Pre-warped analog band edges.
  const double w1 = fs2 * std::tan(M_PI * low_hz / fs);
  const double w2 = fs2 * std::tan(M_PI * high_hz / fs);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  // Analog lowpass prototype poles on the unit circle, left half-plane.
  std::vector<cd> proto;
  for (int k = 1; k <= order; ++k) {
    const double theta = M_PI * (2.0 * k + order - 1.0) / (2.0 * order);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  // Lowpass -> bandpass: each prototype pole yields two analog poles.
  std::vector<cd> analog_poles;
  for (const cd& p : proto) {
    const cd scaled = p * (bw / 2.0);
    const cd disc = std::sqrt(scaled * scaled - cd(w0 * w0, 0.0));
    analog_poles.push_back(scaled + disc);
    analog_poles.push_back(scaled - disc);
  }

  // Bilinear transform. Bandpass zeros sit at s=0 (-> z=+1) and s=inf
  // (-> z=-1), `order` of each. Gain: k = bw^order * Re(fs2^order / prod(fs2 - p)).
  std::vector<cd> digital_poles;
  cd denom = 1.0;
  for (const cd& p : analog_poles) {
    digital_poles.push_back((fs2 + p) / (fs2 - p));
    denom *= (fs2 - p);
  }
  cd gain_c = std::pow(cd(bw * fs2, 0.0), order) / denom;
  double gain = gain_c.real();

  // Conjugate pairing into biquads. Real poles (possible when bw/2 > w0) are
  // paired with each other in sorted order.
  std::vector<cd> upper;
  std::vector<double> reals;
  for (const cd& p : digital_poles) {
    if (std::abs(p) >= 1.0)
      throw std::runtime_error("bandpass design produced an unstable pole");
    if (std::abs(p.imag()) < 1e-10 * std::max(1.0, std::abs(p.real())))
      reals.push_back(p.real());
    else if (p.imag() > 0.0)
      upper.push_back(p);
  }
  if (reals.size() % 2 != 0 || upper.size() * 2 + reals.size() != digital_poles.size())
    throw std::runtime_error("bandpass design produced an unpaired pole set");
  std::sort(reals.begin(), reals.end());
  std::sort(upper.begin(), upper.end(),
            [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });

  SosFilter filt;
  filt.fs = fs;
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    s.a1 = -(reals[i] + reals[i + 1]);
    s.a2 = reals[i] * reals[i + 1];
    filt.sections.push_back(s);
  }
  for (const cd& p : upper) {
    Biquad s;
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    filt.sections.push_back(s);
  }
  std::sort(filt.sections.begin(), filt.sections.end(), [](const Biquad& x, const Biquad& y) {
    const double rx = detail::pole_radius(x), ry = detail::pole_radius(y);
    return rx != ry ? rx < ry : x.a1 < y.a1;
  });

  // Fold the overall gain into the first section.
  filt.sections.front().b0 *= gain;
  filt.sections.front().b1 *= gain;
  filt.sections.front().b2 *= gain;
  return filt;
}

// ---------------------------------------------------------------------------
// Zero-phase forward-backward filtering
// ---------------------------------------------------------------------------

namespace detail {

// One biquad pass, direct form II transposed, with the internal state seeded
// to the steady-state response of x[0] so a constant input produces its
// steady-state output from sample zero.
inline void biquad_pass(const Biquad& s, std::vector<double>& x) {
  const double denom = 1.0 + s.a1 + s.a2;
  const double y_unit = denom != 0.0 ? (s.b0 + s.b1 + s.b2) / denom : 0.0;
  double s1 = (y_unit - s.b0) * (x.empty() ? 0.0 : x.front());
  double s2 = (s.b2 - s.a2 * y_unit) * (x.empty() ? 0.0 : x.front());
  for (double& v : x) {
    const double xn = v;
    const double yn = s.b0 * xn + s1;
    s1 = s.b1 * xn - s.a1 * yn + s2;
    s2 = s.b2 * xn - s.a2 * yn;
    v = yn;
  }
}

inline void sos_forward(const SosFilter& f, std::vector<double>& x) {
  for (const Biquad& s : f.sections) biquad_pass(s, x);
}

// Samples until the slowest pole's envelope decays to 1% of its start.
inline std::size_t effective_impulse_len(const SosFilter& f) {
  double r = 0.0;
  for (const Biquad& s : f.sections) r = std::max(r, pole_radius(s));
  if (r <= 0.0) return 1;
  if (r >= 1.0 - 1e-12) return 1u << 20;
  return static_cast<std::size_t>(std::ceil(std::log(0.01) / std::log(r)));
}

}  // namespace detail

// Forward-backward application of the cascade. Edge transients are handled by
// odd-reflection padding of 3x the filter's effective impulse length (capped
// at n-1) on each side.
inline std::vector<double> filtfilt(const SosFilter& f, const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("filtfilt: need at least 2 samples");
  const std::size_t pad = std::min(3 * detail::effective_impulse_len(f), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[0] - x[pad - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

  detail::sos_forward(f, ext);
  std::reverse(ext.begin(), ext.end());
  detail::sos_forward(f, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

// Precondition: coeffs designed for the segment's fs.
inline Segment filter_segment(const Segment& seg, const SosFilter& f) {
  if (std::abs(f.fs - seg.fs) > 1e-9)
    throw std::invalid_argument("filter_segment: filter fs does not match segment fs");
  Segment out = seg;
  out.filtered = filtfilt(f, seg.raw);
  return out;
}

// ---------------------------------------------------------------------------
// Welch power spectral density
// ---------------------------------------------------------------------------

enum class WindowKind { hann, boxcar };

struct WelchParams {
  std::size_t nperseg = 250;
  double overlap_fraction = 0.5;
  WindowKind window = WindowKind::hann;
};

namespace detail {

// Iterative radix-2 complex FFT, in place. n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n < 2) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::hann) {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

}  // namespace detail

// Averaged one-sided periodograms with 1/(fs * sum(w^2)) density scaling, so
// sum(power) * bin_width approximates the time-domain variance of zero-mean
// input.
inline PsdEstimate welch_psd(const std::vector<double>& x, double fs,
                             const WelchParams& p = {}) {
  if (p.nperseg < 2) throw std::invalid_argument("welch_psd: nperseg must be >= 2");
  if (p.nperseg > x.size())
    throw std::invalid_argument("segment too short for PSD: " + std::to_string(x.size()) +
                                " samples, nperseg " + std::to_string(p.nperseg));
  if (p.overlap_fraction < 0.0 || p.overlap_fraction >= 1.0)
    throw std::invalid_argument("welch_psd: overlap_fraction must be in [0, 1)");

  const std::size_t nperseg = p.nperseg;
  const std::size_t noverlap =
      static_cast<std::size_t>(std::floor(static_cast<double>(nperseg) * p.overlap_fraction));
  const std::size_t hop = nperseg - noverlap;
  const std::size_t nfft = detail::next_pow2(nperseg);
  const std::size_t nfreq = nfft / 2 + 1;

  const std::vector<double> window = detail::make_window(p.window, nperseg);
  double wss = 0.0;
  for (double wi : window) wss += wi * wi;
  const double scale = 1.0 / (fs * wss);

  PsdEstimate psd;
  psd.freqs.resize(nfreq);
  for (std::size_t k = 0; k < nfreq; ++k)
    psd.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(nfft);
  psd.power.assign(nfreq, 0.0);

  std::size_t n_avg = 0;
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t start = 0; start + nperseg <= x.size(); start += hop) {
    for (std::size_t i = 0; i < nperseg; ++i) buf[i] = x[start + i] * window[i];
    for (std::size_t i = nperseg; i < nfft; ++i) buf[i] = 0.0;
    detail::fft_inplace(buf);
    for (std::size_t k = 0; k < nfreq; ++k) {
      double pk = std::norm(buf[k]) * scale;
      if (k != 0 && k != nfft / 2) pk *= 2.0;  // one-sided
      psd.power[k] += pk;
    }
    ++n_avg;
  }
  for (double& v : psd.power) v /= static_cast<double>(n_avg);
  return psd;
}

// ---------------------------------------------------------------------------
// Quality indices
// ---------------------------------------------------------------------------

inline constexpr double ppg_band_low_hz = 0.5;
inline constexpr double ppg_band_high_hz = 5.0;

// snr_db = 10 log10(P_band / P_out), sqi = P_band / P_total. A bin belongs to
// the band iff its center frequency lies in [band_lo, band_hi].
inline QualityIndices quality_indices(const std::vector<double>& x, double fs,
                                      double band_lo = ppg_band_low_hz,
                                      double band_hi = ppg_band_high_hz,
                                      const WelchParams& wp = {}) {
  const PsdEstimate psd = welch_psd(x, fs, wp);
  double p_band = 0.0, p_total = 0.0;
  for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
    p_total += psd.power[k];
    if (psd.freqs[k] >= band_lo && psd.freqs[k] <= band_hi) p_band += psd.power[k];
  }
  const double p_out = p_total - p_band;

  QualityIndices q;
  if (p_total <= 0.0) {
    q.sqi = 0.0;
    q.snr_db = 0.0;
    return q;
  }
  q.sqi = std::clamp(p_band / p_total, 0.0, 1.0);
  if (p_out <= 0.0)
    q.snr_db = std::numeric_limits<double>::infinity();
  else if (p_band <= 0.0)
    q.snr_db = -std::numeric_limits<double>::infinity();
  else
    q.snr_db = 10.0 * std::log10(p_band / p_out);
  return q;
}

// ---------------------------------------------------------------------------
// Pulse landmark detection
// ---------------------------------------------------------------------------

struct PulseLandmarks {
  std::vector<std::size_t> peaks;
  std::vector<std::size_t> troughs;

  // Fewer than two peaks means no complete pulse to measure.
  bool sufficient() const { return peaks.size() >= 2; }
};

namespace detail {

// Topographic prominence: height above the higher of the two lowest points
// reachable without climbing above the peak. Boundaries count as bases.
inline double prominence_at(const std::vector<double>& x, std::size_t p) {
  double left_min = x[p];
  for (std::size_t j = p; j-- > 0;) {
    if (x[j] > x[p]) break;
    left_min = std::min(left_min, x[j]);
  }
  double right_min = x[p];
  for (std::size_t j = p + 1; j < x.size(); ++j) {
    if (x[j] > x[p]) break;
    right_min = std::min(right_min, x[j]);
  }
  return x[p] - std::max(left_min, right_min);
}

// Plateau-aware strict local maxima; a flat top reports its middle sample.
inline std::vector<std::size_t> local_maxima(const std::vector<double>& x) {
  std::vector<std::size_t> out;
  const std::size_t n = x.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    if (x[i - 1] < x[i]) {
      std::size_t ahead = i + 1;
      while (ahead + 1 < n && x[ahead] == x[i]) ++ahead;
      if (x[ahead] < x[i]) {
        out.push_back((i + ahead - 1) / 2);
        i = ahead;
        continue;
      }
      i = ahead;
      continue;
    }
    ++i;
  }
  return out;
}

}  // namespace detail

// Systolic peaks: local maxima at least fs/f_max samples apart with prominence
// >= prominence_frac * std(x). Exactly one trough (the minimum) between each
// pair of consecutive peaks.
inline PulseLandmarks detect_peaks_troughs(const std::vector<double>& x, double fs,
                                           double f_max_hz = 3.0,
                                           double prominence_frac = 0.25) {
  PulseLandmarks lm;
  if (x.size() < 3) return lm;
  const double sigma = std::sqrt(population_variance(x));
  if (!(sigma > 0.0)) return lm;

  const double min_dist = fs / f_max_hz;
  const double min_prom = prominence_frac * sigma;

  std::vector<std::size_t> cand = detail::local_maxima(x);
  std::erase_if(cand, [&](std::size_t p) { return detail::prominence_at(x, p) < min_prom; });

  // Enforce the minimum distance, keeping taller peaks first.
  std::vector<std::size_t> order(cand.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[cand[a]] != x[cand[b]] ? x[cand[a]] > x[cand[b]] : cand[a] < cand[b];
  });
  std::vector<std::size_t> kept;
  for (std::size_t oi : order) {
    const std::size_t p = cand[oi];
    bool ok = true;
    for (std::size_t q : kept) {
      const double d = p > q ? static_cast<double>(p - q) : static_cast<double>(q - p);
      if (d < min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end());
  lm.peaks = std::move(kept);

  for (std::size_t k = 0; k + 1 < lm.peaks.size(); ++k) {
    std::size_t best = lm.peaks[k] + 1;
    for (std::size_t j = lm.peaks[k] + 1; j < lm.peaks[k + 1]; ++j)
      if (x[j] < x[best]) best = j;
    lm.troughs.push_back(best);
  }
  return lm;
}

}  // namespace ppghb
