#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ppghb/common.hpp"
#include "ppghb/signal.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Beer-Lambert synthetic corpus
// ---------------------------------------------------------------------------
//
// Transmitted intensity per wavelength:
//   I_l(t) = I0 * exp(-w_l * Hb * (d0 + dd * pulse(t))) + drift(t) + noise
//   pulse(t) = sin(2 pi HR t) + 0.3 sin(4 pi HR t)
// The extinction weights w_l are synthetic constants, NOT physiological
// values; they are chosen so 660 nm attenuates strongest and sensitivity
// falls off toward the infrared. Ground-truth Hb rides along in the record.

inline constexpr double synth_source_intensity = 100.0;  // I0, arbitrary units
inline constexpr double synth_baseline_path = 1.0;       // d0
inline constexpr double synth_pulsatile_path = 0.04;     // dd, fractional path swing
inline constexpr double synth_drift_freq_hz = 0.08;      // below the analysis band

inline std::map<Wavelength, double> default_extinction_weights() {
  return {{Wavelength::nm660, 0.009},
          {Wavelength::nm730, 0.007},
          {Wavelength::nm850, 0.005},
          {Wavelength::nm940, 0.004}};
}

struct SynthConfig {
  std::size_t n_subjects = 20;
  double fs = 100.0;
  double duration_s = 60.0;
  double hb_min_g_l = 90.0;
  double hb_max_g_l = 180.0;
  double heart_rate_min_hz = 0.9;
  double heart_rate_max_hz = 1.8;
  std::map<Wavelength, double> extinction_weights = default_extinction_weights();
  double noise_sd = 0.0;
  double drift_amplitude = 0.0;
  std::uint64_t seed = 0;
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_subjects == 0) throw config_error("synth: n_subjects must be positive");
  if (!(cfg.fs > 0.0)) throw config_error("synth: fs must be positive");
  if (!(cfg.duration_s > 0.0)) throw config_error("synth: duration must be positive");
  if (!(cfg.hb_min_g_l <= cfg.hb_max_g_l) || cfg.hb_min_g_l < 40.0 || cfg.hb_max_g_l > 250.0)
    throw config_error("synth: hb range must lie within [40, 250] g/L");
  if (!(cfg.heart_rate_min_hz <= cfg.heart_rate_max_hz) || cfg.heart_rate_min_hz < 0.5 ||
      cfg.heart_rate_max_hz > 3.0)
    throw config_error("synth: heart rate range must lie within [0.5, 3] Hz");
  if (cfg.noise_sd < 0.0) throw config_error("synth: noise_sd must be non-negative");
  if (cfg.drift_amplitude < 0.0) throw config_error("synth: drift amplitude must be non-negative");
  for (Wavelength w : all_wavelengths)
    if (!cfg.extinction_weights.count(w))
      throw config_error("synth: missing extinction weight for " + std::to_string(to_nm(w)) +
                         " nm");
  for (const auto& [w, weight] : cfg.extinction_weights)
    if (weight < 0.0 || !std::isfinite(weight))
      throw config_error("synth: extinction weights must be finite and non-negative");
}

// One subject's record with explicit physiology; `rng` supplies drift phases
// and noise. Draw order per channel (ascending nm): drift phase, then one
// normal deviate per sample.
inline PpgRecord synth_record(const SynthConfig& cfg, const std::string& subject_id,
                              double hb_g_l, double heart_rate_hz, Sex sex, double age,
                              Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));
  const double two_pi = 6.283185307179586476925286766559;

  PpgRecord rec;
  rec.subject_id = subject_id;
  rec.fs = cfg.fs;
  rec.age = age;
  rec.sex = sex;
  rec.hb_ref = hb_g_l;
  for (Wavelength w : all_wavelengths) {
    const double ext = cfg.extinction_weights.at(w);
    const double phase = rng.uniform(0.0, two_pi);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / cfg.fs;
      const double pulse =
          std::sin(two_pi * heart_rate_hz * t) + 0.3 * std::sin(2.0 * two_pi * heart_rate_hz * t);
      double v = synth_source_intensity *
                 std::exp(-ext * hb_g_l * (synth_baseline_path + synth_pulsatile_path * pulse));
      v += cfg.drift_amplitude * std::sin(two_pi * synth_drift_freq_hz * t + phase);
      if (cfg.noise_sd > 0.0) v += rng.normal(cfg.noise_sd);
      x[i] = v;
    }
    rec.channels[w] = std::move(x);
  }
  return rec;
}

// The full corpus. Every subject gets an independent RNG stream forked from
// the master seed, so the records do not depend on generation order. Per
// subject the draws are: Hb, heart rate, sex, age, then the channel noise.
inline std::vector<PpgRecord> generate(const SynthConfig& cfg) {
  validate(cfg);
  const Rng master(cfg.seed);

  std::vector<PpgRecord> records;
  records.reserve(cfg.n_subjects);
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    Rng rng = master.fork(s);
    const double hb = rng.uniform(cfg.hb_min_g_l, cfg.hb_max_g_l);
    const double hr = rng.uniform(cfg.heart_rate_min_hz, cfg.heart_rate_max_hz);
    const Sex sex = rng.uniform() < 0.5 ? Sex::male : Sex::female;
    const double age = std::floor(rng.uniform(18.0, 66.0));

    char id[32];
    std::snprintf(id, sizeof(id), "synth-%04zu", s);
    records.push_back(synth_record(cfg, id, hb, hr, sex, age, rng));
  }
  return records;
}

}  // namespace ppghb
