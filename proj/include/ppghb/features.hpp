#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ppghb/common.hpp"
#include "ppghb/signal.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Per-segment feature groups
// ---------------------------------------------------------------------------

struct TimeDomainFeatures {
  double mean = 0.0;
  double std_dev = 0.0;  // population (divisor N)
  double rms = 0.0;
  double ptp = 0.0;
  double variance = 0.0;
  double energy = 0.0;
};

// Absent values are the missing marker (NaN).
struct OpticalFeatures {
  double ac = missing_value;               // mean(peaks) - mean(troughs), filtered
  double dc = missing_value;               // mean of the raw segment
  double ac_dc = missing_value;
  double log_attenuation = missing_value;  // ln(dc/ac), needs dc > 0 and ac > 0
};

struct SpectralFeatures {
  double dom_freq = missing_value;      // argmax of PSD within the band
  double band_power = missing_value;    // P_band / P_total, in [0, 1]
  double spec_entropy = missing_value;  // normalized Shannon entropy, in [0, 1]
};

// Everything the per-record extraction needs in one place.
struct FeatureParams {
  std::size_t window_len = default_window_len;
  double filter_low_hz = ppg_band_low_hz;
  double filter_high_hz = ppg_band_high_hz;
  int filter_order = 3;
  WelchParams welch;
  double band_lo_hz = ppg_band_low_hz;
  double band_hi_hz = ppg_band_high_hz;
  double peak_f_max_hz = 3.0;
  double peak_prominence_frac = 0.25;
};

inline TimeDomainFeatures time_domain_features(const std::vector<double>& x) {
  if (x.empty()) throw std::invalid_argument("time_domain_features: empty input");
  for (double v : x)
    if (!std::isfinite(v)) throw format_error("corrupt segment: non-finite sample");

  TimeDomainFeatures f;
  const double n = static_cast<double>(x.size());
  double sum = 0.0, sumsq = 0.0;
  double mn = x[0], mx = x[0];
  for (double v : x) {
    sum += v;
    sumsq += v * v;
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  f.mean = sum / n;
  f.energy = sumsq;
  f.rms = std::sqrt(sumsq / n);
  f.ptp = mx - mn;
  double dev = 0.0;
  for (double v : x) dev += (v - f.mean) * (v - f.mean);
  f.variance = dev / n;
  f.std_dev = std::sqrt(f.variance);
  return f;
}

// AC from the filtered signal's systolic/diastolic landmarks, DC from the raw
// baseline. Insufficient pulses leave all four features absent.
inline OpticalFeatures optical_features(const std::vector<double>& raw,
                                        const std::vector<double>& filtered, double fs,
                                        double f_max_hz = 3.0, double prominence_frac = 0.25) {
  OpticalFeatures f;
  const PulseLandmarks lm = detect_peaks_troughs(filtered, fs, f_max_hz, prominence_frac);
  if (!lm.sufficient()) return f;

  double peak_sum = 0.0;
  for (std::size_t p : lm.peaks) peak_sum += filtered[p];
  double trough_sum = 0.0;
  for (std::size_t t : lm.troughs) trough_sum += filtered[t];
  f.ac = peak_sum / static_cast<double>(lm.peaks.size()) -
         trough_sum / static_cast<double>(lm.troughs.size());
  f.dc = mean_of(raw);
  if (std::abs(f.dc) > 1e-12) f.ac_dc = f.ac / f.dc;
  if (f.dc > 0.0 && f.ac > 0.0) f.log_attenuation = std::log(f.dc / f.ac);
  return f;
}

inline SpectralFeatures spectral_features(const std::vector<double>& filtered, double fs,
                                          const WelchParams& wp = {},
                                          double band_lo = ppg_band_low_hz,
                                          double band_hi = ppg_band_high_hz) {
  SpectralFeatures f;
  const PsdEstimate psd = welch_psd(filtered, fs, wp);

  double p_total = 0.0, p_band = 0.0;
  double best_power = -1.0;
  double best_freq = missing_value;
  for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
    p_total += psd.power[k];
    if (psd.freqs[k] >= band_lo && psd.freqs[k] <= band_hi) {
      p_band += psd.power[k];
      if (psd.power[k] > best_power) {
        best_power = psd.power[k];
        best_freq = psd.freqs[k];
      }
    }
  }
  if (p_total <= 0.0) return f;  // all-zero PSD: everything absent

  f.band_power = std::clamp(p_band / p_total, 0.0, 1.0);
  if (p_band > 0.0) f.dom_freq = best_freq;

  double entropy = 0.0;
  for (double p : psd.power) {
    const double pi = p / p_total;
    if (pi > 0.0) entropy -= pi * std::log(pi);
  }
  const double n_bins = static_cast<double>(psd.power.size());
  f.spec_entropy = n_bins > 1.0 ? std::clamp(entropy / std::log(n_bins), 0.0, 1.0) : 0.0;
  return f;
}

// ---------------------------------------------------------------------------
// Cross-wavelength ratios
// ---------------------------------------------------------------------------

// Ordered pairs nm_i < nm_j, lexicographic.
inline std::vector<std::pair<Wavelength, Wavelength>> wavelength_pairs() {
  std::vector<std::pair<Wavelength, Wavelength>> pairs;
  for (std::size_t i = 0; i < all_wavelengths.size(); ++i)
    for (std::size_t j = i + 1; j < all_wavelengths.size(); ++j)
      pairs.emplace_back(all_wavelengths[i], all_wavelengths[j]);
  return pairs;
}

struct CrossWavelengthInput {
  double mean = missing_value;
  double ac_dc = missing_value;
  double dc = missing_value;
};

struct CrossWavelengthFeatures {
  // Keyed by canonical column name, e.g. "mean_ratio_660_730".
  std::map<std::string, double> values;
};

namespace detail {

inline std::string pair_suffix(Wavelength i, Wavelength j) {
  return std::to_string(to_nm(i)) + "_" + std::to_string(to_nm(j));
}

inline double safe_ratio(double num, double den) {
  if (is_missing(num) || is_missing(den) || std::abs(den) < 1e-12) return missing_value;
  return num / den;
}

inline double safe_log_ratio(double num, double den) {
  if (is_missing(num) || is_missing(den) || std::abs(den) < 1e-12) return missing_value;
  const double r = num / den;
  return r > 0.0 ? std::log(r) : missing_value;
}

}  // namespace detail

// mean_ratio = mean_i / mean_j, ac_dc_ratio = (ac/dc)_i / (ac/dc)_j,
// attenuation_ratio = ln(dc_i / dc_j). Absent inputs propagate absence.
inline CrossWavelengthFeatures cross_wavelength_features(
    const std::map<Wavelength, CrossWavelengthInput>& per_channel) {
  CrossWavelengthFeatures out;
  for (const auto& [wi, wj] : wavelength_pairs()) {
    const CrossWavelengthInput& a = per_channel.at(wi);
    const CrossWavelengthInput& b = per_channel.at(wj);
    const std::string suffix = detail::pair_suffix(wi, wj);
    out.values["mean_ratio_" + suffix] = detail::safe_ratio(a.mean, b.mean);
    out.values["ac_dc_ratio_" + suffix] = detail::safe_ratio(a.ac_dc, b.ac_dc);
    out.values["attenuation_ratio_" + suffix] = detail::safe_log_ratio(a.dc, b.dc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature table
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& per_wavelength_feature_names() {
  static const std::vector<std::string> names = {
      "mean",   "std",   "rms",    "ptp",             "variance",  "energy",    "ac",
      "dc",     "ac_dc", "log_attenuation", "dom_freq", "band_power", "spec_entropy"};
  return names;
}

// Canonical column order: per-wavelength blocks in ascending nm, then
// cross-wavelength pairs group-major in lexicographic pair order, then the
// quality columns.
inline std::vector<std::string> feature_columns() {
  std::vector<std::string> cols;
  for (Wavelength w : all_wavelengths)
    for (const std::string& f : per_wavelength_feature_names())
      cols.push_back(f + "_" + std::to_string(to_nm(w)));
  for (const std::string& group : {"mean_ratio", "ac_dc_ratio", "attenuation_ratio"})
    for (const auto& [wi, wj] : wavelength_pairs())
      cols.push_back(group + "_" + detail::pair_suffix(wi, wj));
  for (Wavelength w : all_wavelengths) cols.push_back("sqi_" + std::to_string(to_nm(w)));
  for (Wavelength w : all_wavelengths) cols.push_back("snr_db_" + std::to_string(to_nm(w)));
  return cols;
}

struct SegmentFeatureRow {
  std::string subject_id;
  std::size_t segment_index = 0;
  std::vector<double> values;  // aligned with feature_columns()
};

struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<SegmentFeatureRow> rows;

  std::size_t column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::invalid_argument("unknown feature column: " + name);
    return static_cast<std::size_t>(it - columns.begin());
  }

  double missing_fraction(std::size_t col) const {
    if (rows.empty()) return 0.0;
    std::size_t miss = 0;
    for (const SegmentFeatureRow& r : rows)
      if (is_missing(r.values[col])) ++miss;
    return static_cast<double>(miss) / static_cast<double>(rows.size());
  }
};

// The +-inf SNR sentinel becomes +-999 dB inside the table so downstream
// numerics stay finite; JSON outputs carry the saturation flag.
inline constexpr double snr_sentinel_db = 999.0;

inline double saturate_snr(double snr_db) {
  return std::clamp(snr_db, -snr_sentinel_db, snr_sentinel_db);
}

// One subject-record's segments -> one feature row per segment index.
inline std::vector<SegmentFeatureRow> extract_features(const PpgRecord& rec,
                                                       const FeatureParams& params = {}) {
  const auto segments = segment_record(rec, params.window_len);
  const SosFilter filt =
      design_bandpass(rec.fs, params.filter_low_hz, params.filter_high_hz, params.filter_order);
  const std::size_t n_segments = segments.begin()->second.size();

  std::vector<SegmentFeatureRow> rows;
  rows.reserve(n_segments);
  for (std::size_t k = 0; k < n_segments; ++k) {
    std::map<Wavelength, TimeDomainFeatures> td;
    std::map<Wavelength, OpticalFeatures> opt;
    std::map<Wavelength, SpectralFeatures> spec;
    std::map<Wavelength, QualityIndices> quality;
    std::map<Wavelength, CrossWavelengthInput> cross_in;

    for (Wavelength w : all_wavelengths) {
      const Segment& seg = segments.at(w)[k];
      const std::vector<double> filtered = filtfilt(filt, seg.raw);
      try {
        td[w] = time_domain_features(seg.raw);
      } catch (const format_error&) {
        throw format_error("corrupt segment: subject " + rec.subject_id + " segment " +
                           std::to_string(k) + " wavelength " + std::to_string(to_nm(w)));
      }
      opt[w] = optical_features(seg.raw, filtered, rec.fs, params.peak_f_max_hz,
                                params.peak_prominence_frac);
      spec[w] = spectral_features(filtered, rec.fs, params.welch, params.band_lo_hz,
                                  params.band_hi_hz);
      quality[w] =
          quality_indices(filtered, rec.fs, params.band_lo_hz, params.band_hi_hz, params.welch);
      cross_in[w] = CrossWavelengthInput{td[w].mean, opt[w].ac_dc, opt[w].dc};
    }
    const CrossWavelengthFeatures cross = cross_wavelength_features(cross_in);

    SegmentFeatureRow row;
    row.subject_id = rec.subject_id;
    row.segment_index = k;
    for (Wavelength w : all_wavelengths) {
      row.values.push_back(td[w].mean);
      row.values.push_back(td[w].std_dev);
      row.values.push_back(td[w].rms);
      row.values.push_back(td[w].ptp);
      row.values.push_back(td[w].variance);
      row.values.push_back(td[w].energy);
      row.values.push_back(opt[w].ac);
      row.values.push_back(opt[w].dc);
      row.values.push_back(opt[w].ac_dc);
      row.values.push_back(opt[w].log_attenuation);
      row.values.push_back(spec[w].dom_freq);
      row.values.push_back(spec[w].band_power);
      row.values.push_back(spec[w].spec_entropy);
    }
    for (const std::string& group : {"mean_ratio", "ac_dc_ratio", "attenuation_ratio"})
      for (const auto& [wi, wj] : wavelength_pairs())
        row.values.push_back(cross.values.at(group + "_" + detail::pair_suffix(wi, wj)));
    for (Wavelength w : all_wavelengths) row.values.push_back(quality[w].sqi);
    for (Wavelength w : all_wavelengths) row.values.push_back(saturate_snr(quality[w].snr_db));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Assemble rows into a rectangular table sorted by (subject_id, segment_index).
inline FeatureTable build_feature_table(std::vector<SegmentFeatureRow> rows) {
  FeatureTable table;
  table.columns = feature_columns();
  for (const SegmentFeatureRow& r : rows)
    if (r.values.size() != table.columns.size())
      throw std::invalid_argument("feature row width " + std::to_string(r.values.size()) +
                                  " does not match schema width " +
                                  std::to_string(table.columns.size()));
  std::sort(rows.begin(), rows.end(), [](const SegmentFeatureRow& a, const SegmentFeatureRow& b) {
    return a.subject_id != b.subject_id ? a.subject_id < b.subject_id
                                        : a.segment_index < b.segment_index;
  });
  table.rows = std::move(rows);
  return table;
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

struct DroppedColumn {
  std::string name;
  std::string reason;  // "nan-heavy" or "constant"
  double statistic = 0.0;
};

struct CleanResult {
  FeatureTable table;
  std::vector<DroppedColumn> dropped;
};

// Drops NaN-heavy and (near-)constant columns, imputes the rest with the
// column median. Idempotent on its own output.
inline CleanResult clean_feature_table(const FeatureTable& table, double nan_frac_max = 0.2,
                                       double var_min = 1e-12) {
  CleanResult result;
  std::vector<std::size_t> keep;
  std::vector<double> medians;

  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    const double miss = table.missing_fraction(c);
    if (miss > nan_frac_max) {
      result.dropped.push_back({table.columns[c], "nan-heavy", miss});
      continue;
    }
    std::vector<double> present;
    present.reserve(table.rows.size());
    for (const SegmentFeatureRow& r : table.rows)
      if (!is_missing(r.values[c])) present.push_back(r.values[c]);
    const double var = present.empty() ? 0.0 : population_variance(present);
    if (present.empty() || var < var_min) {
      result.dropped.push_back({table.columns[c], "constant", var});
      continue;
    }
    keep.push_back(c);
    medians.push_back(median_of(present));
  }

  if (keep.empty() && !table.columns.empty())
    throw std::runtime_error("degenerate feature table: every column was dropped");

  result.table.columns.reserve(keep.size());
  for (std::size_t c : keep) result.table.columns.push_back(table.columns[c]);
  result.table.rows.reserve(table.rows.size());
  for (const SegmentFeatureRow& r : table.rows) {
    SegmentFeatureRow out;
    out.subject_id = r.subject_id;
    out.segment_index = r.segment_index;
    out.values.reserve(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const double v = r.values[keep[i]];
      out.values.push_back(is_missing(v) ? medians[i] : v);
    }
    result.table.rows.push_back(std::move(out));
  }
  return result;
}

}  // namespace ppghb
