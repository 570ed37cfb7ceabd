#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "oracles.hpp"
#include "ppghb/signal.hpp"

using namespace ppghb;
using testoracle::sine;

namespace {

PpgRecord four_channel_record(std::size_t len, double fs = 100.0) {
  PpgRecord rec;
  rec.subject_id = "subjA";
  rec.fs = fs;
  double base = 10.0;
  for (Wavelength w : all_wavelengths) {
    rec.channels[w] = sine(1.2, fs, len, 1.0, base);
    base += 1.0;
  }
  return rec;
}

double oracle_magnitude(const SosFilter& f, double freq_hz) {
  return testoracle::filter_magnitude(f, freq_hz);
}

double oracle_magnitude_db(const SosFilter& f, double freq_hz) {
  return testoracle::filter_magnitude_db(f, freq_hz);
}

PsdEstimate oracle_welch(const std::vector<double>& x, double fs, std::size_t nperseg,
                         double overlap) {
  return testoracle::welch(x, fs, nperseg, overlap);
}

}  // namespace

TEST_CASE("segment_record splits into aligned non-overlapping windows") {
  PpgRecord rec = four_channel_record(1250);
  auto segs = segment_record(rec, 500);
  for (Wavelength w : all_wavelengths) {
    REQUIRE(segs.at(w).size() == 2);
    CHECK(segs.at(w)[0].index == 0);
    CHECK(segs.at(w)[1].index == 1);
    CHECK(segs.at(w)[0].raw.size() == 500);
    CHECK(segs.at(w)[0].raw[0] == rec.channels.at(w)[0]);
    CHECK(segs.at(w)[1].raw[0] == rec.channels.at(w)[500]);
    CHECK(segs.at(w)[1].raw[499] == rec.channels.at(w)[999]);
  }
}

TEST_CASE("segment_record edge counts") {
  CHECK(segment_record(four_channel_record(500), 500).at(Wavelength::nm660).size() == 1);
  CHECK_THROWS_WITH(segment_record(four_channel_record(499), 500),
                    Catch::Matchers::ContainsSubstring("record too short") &&
                        Catch::Matchers::ContainsSubstring("subjA"));
}

TEST_CASE("segment_record rejects malformed records") {
  PpgRecord rec = four_channel_record(600);
  rec.channels.erase(Wavelength::nm850);
  CHECK_THROWS_AS(segment_record(rec), format_error);

  PpgRecord uneven = four_channel_record(600);
  uneven.channels[Wavelength::nm940].pop_back();
  CHECK_THROWS_AS(segment_record(uneven), format_error);

  PpgRecord slow = four_channel_record(600);
  slow.fs = 8.0;
  CHECK_THROWS_AS(segment_record(slow), format_error);
}

TEST_CASE("bandpass design hits the Butterworth edge and passband targets") {
  const SosFilter f = design_bandpass(100.0, 0.5, 5.0, 3);
  REQUIRE(f.sections.size() == 3);

  CHECK_THAT(oracle_magnitude_db(f, 0.5), Catch::Matchers::WithinAbs(-3.0, 0.5));
  CHECK_THAT(oracle_magnitude_db(f, 5.0), Catch::Matchers::WithinAbs(-3.0, 0.5));

  const double center = std::sqrt(0.5 * 5.0);
  CHECK_THAT(oracle_magnitude_db(f, center), Catch::Matchers::WithinAbs(0.0, 0.1));

  // Stop band.
  CHECK(oracle_magnitude_db(f, 0.05) < -20.0);
  CHECK(oracle_magnitude_db(f, 20.0) < -20.0);

  // Library response agrees with the polynomial oracle.
  for (double freq : {0.1, 0.5, 1.0, 1.5, 3.0, 5.0, 10.0})
    CHECK_THAT(std::abs(f.response(freq)), Catch::Matchers::WithinRel(oracle_magnitude(f, freq), 1e-9));
}

TEST_CASE("bandpass design rejects invalid bands") {
  CHECK_THROWS_AS(design_bandpass(100.0, 5.0, 0.5), config_error);
  CHECK_THROWS_AS(design_bandpass(100.0, 0.0, 5.0), config_error);
  CHECK_THROWS_AS(design_bandpass(100.0, 0.5, 50.0), config_error);
  CHECK_THROWS_AS(design_bandpass(8.0, 0.5, 5.0), config_error);
}

TEST_CASE("bandpass design works across sampling rates") {
  for (double fs : {25.0, 100.0, 250.0, 1000.0}) {
    const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
    CHECK_THAT(oracle_magnitude_db(f, 0.5), Catch::Matchers::WithinAbs(-3.0, 0.5));
    CHECK_THAT(oracle_magnitude_db(f, 5.0), Catch::Matchers::WithinAbs(-3.0, 0.5));
    CHECK_THAT(oracle_magnitude_db(f, std::sqrt(2.5)), Catch::Matchers::WithinAbs(0.0, 0.1));
  }
}

TEST_CASE("filtfilt passes an in-band probe at unity per the oracle") {
  const double fs = 100.0;
  const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
  const std::vector<double> x = sine(1.5, fs, 500);
  const std::vector<double> y = filtfilt(f, x);

  double rms_in = 0.0, rms_out = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    rms_in += x[i] * x[i];
    rms_out += y[i] * y[i];
  }
  const double ratio_db = 10.0 * std::log10(rms_out / rms_in);
  // Two passes, so the expected gain is |H|^2.
  const double expected_db = 2.0 * oracle_magnitude_db(f, 1.5);
  CHECK_THAT(ratio_db, Catch::Matchers::WithinAbs(expected_db, 0.5));
  CHECK_THAT(ratio_db, Catch::Matchers::WithinAbs(0.0, 0.5));
}

TEST_CASE("filter_segment kills a constant input") {
  const double fs = 100.0;
  const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
  Segment seg;
  seg.subject_id = "subjA";
  seg.fs = fs;
  seg.raw.assign(500, 7.5);
  const Segment out = filter_segment(seg, f);
  REQUIRE(out.filtered.size() == 500);
  for (double v : out.filtered) CHECK(std::abs(v) < 1e-6 * 7.5);
}

TEST_CASE("filter_segment recovers a zero-mean in-band sinusoid") {
  const double fs = 100.0;
  const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
  Segment seg;
  seg.fs = fs;
  seg.raw = sine(1.5, fs, 500, 1.0, 10.0);
  const Segment out = filter_segment(seg, f);

  // 1.5 Hz over 500 samples is 7.5 cycles; even an ideal zero-DC output has a
  // sample mean of ~0.042 from the half-cycle remainder. The 10.0 offset
  // itself must be gone.
  CHECK(std::abs(mean_of(out.filtered)) < 0.05);
  const auto [mn, mx] = std::minmax_element(out.filtered.begin(), out.filtered.end());
  const double amplitude = (*mx - *mn) / 2.0;
  CHECK_THAT(amplitude, Catch::Matchers::WithinAbs(1.0, 0.1));
}

TEST_CASE("filtering twice is not the identity") {
  const double fs = 100.0;
  const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
  // Probe near the band edge where each pass costs ~3 dB.
  const std::vector<double> x = sine(5.0, fs, 500);
  const std::vector<double> once = filtfilt(f, x);
  const std::vector<double> twice = filtfilt(f, once);
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e1 += once[i] * once[i];
    e2 += twice[i] * twice[i];
  }
  CHECK(e2 < 0.5 * e1);
}

TEST_CASE("filtfilt is linear") {
  const double fs = 100.0;
  const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
  const std::vector<double> x = sine(1.1, fs, 500, 1.0, 3.0);
  const std::vector<double> y = sine(2.7, fs, 500, 0.5, -1.0, 0.7);
  const double a = 2.25, b = -0.75;

  std::vector<double> combo(500);
  for (std::size_t i = 0; i < 500; ++i) combo[i] = a * x[i] + b * y[i];

  const std::vector<double> lhs = filtfilt(f, combo);
  const std::vector<double> fx = filtfilt(f, x);
  const std::vector<double> fy = filtfilt(f, y);

  double max_abs = 0.0;
  for (double v : lhs) max_abs = std::max(max_abs, std::abs(v));
  for (std::size_t i = 0; i < 500; ++i)
    CHECK(std::abs(lhs[i] - (a * fx[i] + b * fy[i])) <= 1e-9 * std::max(1.0, max_abs));
}

TEST_CASE("forward-backward filtering has zero phase") {
  const double fs = 100.0;
  const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
  const std::vector<double> x = sine(1.5, fs, 500);
  const std::vector<double> y = filtfilt(f, x);

  int best_lag = -100;
  double best = -1e300;
  for (int lag = -5; lag <= 5; ++lag) {
    double acc = 0.0;
    for (int i = 50; i < 450; ++i) acc += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i + lag)];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(std::abs(best_lag) <= 1);
}

TEST_CASE("welch_psd locates a tone within one bin") {
  const double fs = 100.0;
  const std::vector<double> x = sine(1.5, fs, 500);
  const PsdEstimate psd = welch_psd(x, fs);
  const std::size_t argmax =
      static_cast<std::size_t>(std::max_element(psd.power.begin(), psd.power.end()) - psd.power.begin());
  CHECK(std::abs(psd.freqs[argmax] - 1.5) <= psd.bin_width());

  // Same argmax as the direct-DFT oracle.
  const PsdEstimate oracle = oracle_welch(x, fs, 250, 0.5);
  const std::size_t oracle_argmax = static_cast<std::size_t>(
      std::max_element(oracle.power.begin(), oracle.power.end()) - oracle.power.begin());
  CHECK(argmax == oracle_argmax);
  REQUIRE(psd.power.size() == oracle.power.size());
  for (std::size_t k = 0; k < psd.power.size(); ++k)
    CHECK_THAT(psd.power[k], Catch::Matchers::WithinAbs(oracle.power[k], 1e-9 * oracle.power[oracle_argmax]));
}

TEST_CASE("welch_psd is Parseval-consistent for white noise") {
  Rng rng(7);
  std::vector<double> x(500);
  for (double& v : x) v = rng.normal();
  const double m = mean_of(x);
  for (double& v : x) v -= m;

  const PsdEstimate psd = welch_psd(x, 100.0);
  double total = 0.0;
  for (double p : psd.power) total += p;
  total *= psd.bin_width();

  const double var = population_variance(x);
  CHECK_THAT(total, Catch::Matchers::WithinRel(var, 0.10));
}

TEST_CASE("welch_psd zero input and precondition errors") {
  const std::vector<double> zeros(500, 0.0);
  const PsdEstimate psd = welch_psd(zeros, 100.0);
  for (double p : psd.power) CHECK(p == 0.0);

  const std::vector<double> tiny(100, 1.0);
  CHECK_THROWS_WITH(welch_psd(tiny, 100.0),
                    Catch::Matchers::ContainsSubstring("segment too short for PSD"));
}

TEST_CASE("quality indices separate in-band from out-of-band tones") {
  const double fs = 100.0;
  const QualityIndices in_band = quality_indices(sine(1.2, fs, 500), fs);
  CHECK(in_band.sqi > 0.95);
  CHECK(in_band.snr_db > 13.0);

  const QualityIndices out_band = quality_indices(sine(8.0, fs, 500), fs);
  CHECK(out_band.sqi < 0.1);

  // Cross-check sqi against the direct-DFT oracle PSD.
  const PsdEstimate oracle = oracle_welch(sine(1.2, fs, 500), fs, 250, 0.5);
  double p_band = 0.0, p_total = 0.0;
  for (std::size_t k = 0; k < oracle.freqs.size(); ++k) {
    p_total += oracle.power[k];
    if (oracle.freqs[k] >= 0.5 && oracle.freqs[k] <= 5.0) p_band += oracle.power[k];
  }
  CHECK_THAT(in_band.sqi, Catch::Matchers::WithinAbs(p_band / p_total, 1e-6));
}

TEST_CASE("filtering improves SQI for in-band plus out-of-band mix") {
  const double fs = 100.0;
  const SosFilter f = design_bandpass(fs, 0.5, 5.0, 3);
  std::vector<double> raw = sine(1.2, fs, 500, 1.0, 5.0);
  const std::vector<double> interference = sine(12.0, fs, 500, 0.8);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] += interference[i];

  const QualityIndices before = quality_indices(raw, fs);
  const QualityIndices after = quality_indices(filtfilt(f, raw), fs);
  CHECK(after.sqi >= before.sqi);
  CHECK(after.snr_db >= before.snr_db);
}

TEST_CASE("quality indices stay in range and handle degenerate input") {
  const QualityIndices q = quality_indices(std::vector<double>(500, 0.0), 100.0);
  CHECK(q.sqi == 0.0);

  // A pure in-band tone may have zero out-of-band power only in contrived
  // cases; the sentinel path still needs to hold sqi in range.
  const QualityIndices s = quality_indices(sine(1.2, 100.0, 500), 100.0);
  CHECK(s.sqi >= 0.0);
  CHECK(s.sqi <= 1.0);
}

TEST_CASE("peak detection counts pulses of a sine") {
  const double fs = 100.0;
  const std::vector<double> x = sine(1.2, fs, 500);
  const PulseLandmarks lm = detect_peaks_troughs(x, fs);
  REQUIRE(lm.peaks.size() == 6);
  REQUIRE(lm.troughs.size() == 5);
  CHECK(lm.sufficient());

  // Strict interleaving and bounds.
  for (std::size_t k = 0; k < lm.troughs.size(); ++k) {
    CHECK(lm.peaks[k] < lm.troughs[k]);
    CHECK(lm.troughs[k] < lm.peaks[k + 1]);
  }
  for (std::size_t p : lm.peaks) CHECK(p < 500);
}

TEST_CASE("peak detection flags flat input as insufficient") {
  const PulseLandmarks lm = detect_peaks_troughs(std::vector<double>(500, 0.0), 100.0);
  CHECK_FALSE(lm.sufficient());
  CHECK(lm.peaks.empty());
}

TEST_CASE("harmonic content does not double the peak count") {
  const double fs = 100.0;
  std::vector<double> x = sine(1.2, fs, 500);
  const std::vector<double> second = sine(2.4, fs, 500, 0.5);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += second[i];

  const PulseLandmarks lm = detect_peaks_troughs(x, fs);
  // One maximum per fundamental cycle; the harmonic's would-be second bump is
  // rejected by the distance/prominence rules.
  CHECK(lm.peaks.size() == 6);
}

TEST_CASE("peak minimum distance suppresses nearby maxima") {
  const double fs = 100.0;
  // 2.8 Hz sine: true peaks ~35.7 samples apart, above the fs/3 = 33.3 limit.
  const PulseLandmarks ok = detect_peaks_troughs(sine(2.8, fs, 500), fs);
  CHECK(ok.peaks.size() == 14);

  // 4 Hz sine: peaks 25 samples apart; the distance rule thins them.
  const PulseLandmarks thin = detect_peaks_troughs(sine(4.0, fs, 500), fs);
  for (std::size_t k = 0; k + 1 < thin.peaks.size(); ++k)
    CHECK(static_cast<double>(thin.peaks[k + 1] - thin.peaks[k]) >= fs / 3.0);
}
