#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ppghb/common.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Units
// ---------------------------------------------------------------------------

inline double g_dl_to_g_l(double g_dl) { return 10.0 * g_dl; }
inline double g_l_to_g_dl(double g_l) { return g_l / 10.0; }

// ---------------------------------------------------------------------------
// Populations and statuses
// ---------------------------------------------------------------------------

enum class Population {
  child_6_59m,
  child_5_11y,
  child_12_14y,
  nonpregnant_woman_15plus,
  pregnant_woman,
  adult_male,
  adult_female,
};

inline std::string to_string(Population p) {
  switch (p) {
    case Population::child_6_59m: return "child_6_59m";
    case Population::child_5_11y: return "child_5_11y";
    case Population::child_12_14y: return "child_12_14y";
    case Population::nonpregnant_woman_15plus: return "nonpregnant_woman_15plus";
    case Population::pregnant_woman: return "pregnant_woman";
    case Population::adult_male: return "adult_male";
    case Population::adult_female: return "adult_female";
  }
  throw std::invalid_argument("unreachable population value");
}

inline Population parse_population(const std::string& s) {
  for (Population p : {Population::child_6_59m, Population::child_5_11y, Population::child_12_14y,
                       Population::nonpregnant_woman_15plus, Population::pregnant_woman,
                       Population::adult_male, Population::adult_female})
    if (to_string(p) == s) return p;
  throw format_error("unknown population '" + s + "'");
}

enum class AnemiaStatus { non_anemic, anemic, mild, moderate, severe };

inline std::string to_string(AnemiaStatus s) {
  switch (s) {
    case AnemiaStatus::non_anemic: return "non_anemic";
    case AnemiaStatus::anemic: return "anemic";
    case AnemiaStatus::mild: return "mild";
    case AnemiaStatus::moderate: return "moderate";
    case AnemiaStatus::severe: return "severe";
  }
  throw std::invalid_argument("unreachable status value");
}

inline AnemiaStatus parse_status(const std::string& s) {
  for (AnemiaStatus st : {AnemiaStatus::non_anemic, AnemiaStatus::anemic, AnemiaStatus::mild,
                          AnemiaStatus::moderate, AnemiaStatus::severe})
    if (to_string(st) == s) return st;
  throw format_error("unknown anemia status '" + s + "'");
}

// ---------------------------------------------------------------------------
// Severity thresholds (stored in g/dL exactly as printed)
// ---------------------------------------------------------------------------

// Printed bands have gaps like 9.9 -> 10.0; they are resolved as half-open
// intervals on the lower bounds: severe [0, moderate_lower), moderate
// [moderate_lower, mild_lower), mild [mild_lower, non_anemic_lower),
// non-anemic [non_anemic_lower, inf). Edges such as 10.9 thus stay inside the
// band whose printed range contains them.
struct SeverityRow {
  Population population;
  double moderate_lower_g_dl;
  double mild_lower_g_dl;
  double non_anemic_lower_g_dl;
};

inline const std::array<SeverityRow, 5>& severity_rows() {
  static const std::array<SeverityRow, 5> rows = {{
      {Population::child_6_59m, 7.0, 10.0, 11.0},
      {Population::child_5_11y, 8.0, 11.0, 11.5},
      {Population::child_12_14y, 8.0, 11.0, 12.0},
      {Population::nonpregnant_woman_15plus, 8.0, 11.0, 12.0},
      {Population::pregnant_woman, 7.0, 10.0, 11.0},
  }};
  return rows;
}

inline AnemiaStatus grade_severity(double hb_g_l, Population population) {
  if (!std::isfinite(hb_g_l)) throw std::invalid_argument("grade_severity: non-finite hb");
  for (const SeverityRow& row : severity_rows()) {
    if (row.population != population) continue;
    const double hb = g_l_to_g_dl(hb_g_l);
    if (hb < row.moderate_lower_g_dl) return AnemiaStatus::severe;
    if (hb < row.mild_lower_g_dl) return AnemiaStatus::moderate;
    if (hb < row.non_anemic_lower_g_dl) return AnemiaStatus::mild;
    return AnemiaStatus::non_anemic;
  }
  throw std::invalid_argument("no severity bands defined for population " +
                              to_string(population));
}

// ---------------------------------------------------------------------------
// Adult binary screening
// ---------------------------------------------------------------------------

inline constexpr double adult_male_threshold_g_l = 130.0;
inline constexpr double adult_female_threshold_g_l = 120.0;

inline double adult_threshold_g_l(Sex sex) {
  return sex == Sex::male ? adult_male_threshold_g_l : adult_female_threshold_g_l;
}

// Strict inequality: exactly 130 (male) / 120 (female) g/L is non-anemic.
inline AnemiaStatus screen_adult(double hb_pred_g_l, Sex sex) {
  if (!std::isfinite(hb_pred_g_l)) throw std::invalid_argument("screen_adult: non-finite hb");
  return hb_pred_g_l < adult_threshold_g_l(sex) ? AnemiaStatus::anemic
                                                : AnemiaStatus::non_anemic;
}

struct ScreeningResult {
  std::string subject_id;
  double predicted_hb_g_l = 0.0;
  Sex sex = Sex::female;
  AnemiaStatus status = AnemiaStatus::non_anemic;
};

struct SubjectPrediction {
  std::string subject_id;
  double hb_pred_g_l = 0.0;
  Sex sex = Sex::female;
};

inline std::vector<ScreeningResult> screen_adults(const std::vector<SubjectPrediction>& preds) {
  std::vector<ScreeningResult> out;
  out.reserve(preds.size());
  for (const SubjectPrediction& p : preds)
    out.push_back({p.subject_id, p.hb_pred_g_l, p.sex, screen_adult(p.hb_pred_g_l, p.sex)});
  return out;
}

// ---------------------------------------------------------------------------
// Threshold sensitivity
// ---------------------------------------------------------------------------

struct SensitivityPoint {
  double offset_g_l = 0.0;
  std::size_t anemic_count = 0;
};

inline std::vector<double> default_offset_grid() {
  std::vector<double> grid;
  for (int i = -4; i <= 4; ++i) grid.push_back(2.5 * i);  // -10 .. +10 g/L
  return grid;
}

// Anemic count when each subject's sex-specific threshold is shifted by the
// offset; counts are monotone non-decreasing in the offset.
inline std::vector<SensitivityPoint> threshold_sensitivity(
    const std::vector<SubjectPrediction>& preds, std::vector<double> offsets) {
  for (double d : offsets)
    if (!std::isfinite(d)) throw std::invalid_argument("threshold_sensitivity: non-finite offset");
  std::sort(offsets.begin(), offsets.end());
  std::vector<SensitivityPoint> out;
  out.reserve(offsets.size());
  for (double d : offsets) {
    std::size_t count = 0;
    for (const SubjectPrediction& p : preds)
      if (p.hb_pred_g_l < adult_threshold_g_l(p.sex) + d) ++count;
    out.push_back({d, count});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bland-Altman agreement
// ---------------------------------------------------------------------------

struct BlandAltman {
  double bias = 0.0;      // mean(pred - ref), g/L
  double sd = 0.0;        // sample standard deviation of the differences
  double loa_low = 0.0;   // bias - 1.96 sd
  double loa_high = 0.0;  // bias + 1.96 sd
  std::vector<std::pair<double, double>> pairs;  // (mean of pair, difference)
};

inline BlandAltman bland_altman(const std::vector<double>& y_pred,
                                const std::vector<double>& y_ref) {
  if (y_pred.size() != y_ref.size())
    throw std::invalid_argument("bland_altman: length mismatch");
  if (y_ref.size() < 2) throw std::invalid_argument("bland_altman: need at least 2 pairs");

  BlandAltman ba;
  std::vector<double> diffs(y_ref.size());
  for (std::size_t i = 0; i < y_ref.size(); ++i) {
    diffs[i] = y_pred[i] - y_ref[i];
    ba.pairs.emplace_back(0.5 * (y_pred[i] + y_ref[i]), diffs[i]);
  }
  ba.bias = mean_of(diffs);
  const double var = sample_variance(diffs);
  ba.sd = std::sqrt(var);
  ba.loa_low = ba.bias - 1.96 * ba.sd;
  ba.loa_high = ba.bias + 1.96 * ba.sd;
  return ba;
}

}  // namespace ppghb
