#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "ppghb/screening.hpp"

using namespace ppghb;

TEST_CASE("unit conversions are exact tens") {
  CHECK(g_dl_to_g_l(12.0) == 120.0);
  CHECK(g_dl_to_g_l(0.0) == 0.0);
  CHECK(g_l_to_g_dl(120.0) == 12.0);

  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double v = rng.uniform(4.0, 25.0);
    CHECK_THAT(g_l_to_g_dl(g_dl_to_g_l(v)), Catch::Matchers::WithinAbs(v, 1e-12));
  }
}

TEST_CASE("adult screening thresholds are sex-specific and strict") {
  CHECK(screen_adult(125.0, Sex::male) == AnemiaStatus::anemic);
  CHECK(screen_adult(125.0, Sex::female) == AnemiaStatus::non_anemic);
  CHECK(screen_adult(130.0, Sex::male) == AnemiaStatus::non_anemic);
  CHECK(screen_adult(120.0, Sex::female) == AnemiaStatus::non_anemic);
  CHECK(screen_adult(129.999, Sex::male) == AnemiaStatus::anemic);
  CHECK(screen_adult(119.999, Sex::female) == AnemiaStatus::anemic);
  CHECK_THROWS_AS(screen_adult(missing_value, Sex::male), std::invalid_argument);
}

TEST_CASE("severity grading matches the printed table") {
  CHECK(grade_severity(95.0, Population::child_6_59m) == AnemiaStatus::moderate);
  CHECK(grade_severity(105.0, Population::pregnant_woman) == AnemiaStatus::mild);
  CHECK(grade_severity(125.0, Population::nonpregnant_woman_15plus) == AnemiaStatus::non_anemic);

  // Printed edges stay in their printed band.
  CHECK(grade_severity(109.0, Population::child_6_59m) == AnemiaStatus::mild);   // 10.9
  CHECK(grade_severity(110.0, Population::child_6_59m) == AnemiaStatus::non_anemic);
  CHECK(grade_severity(70.0, Population::child_6_59m) == AnemiaStatus::moderate);  // 7.0
  CHECK(grade_severity(69.9, Population::child_6_59m) == AnemiaStatus::severe);
  CHECK(grade_severity(114.0, Population::child_5_11y) == AnemiaStatus::mild);  // 11.4
  CHECK(grade_severity(115.0, Population::child_5_11y) == AnemiaStatus::non_anemic);
  CHECK(grade_severity(119.0, Population::child_12_14y) == AnemiaStatus::mild);  // 11.9

  // Values inside printed gaps (e.g. 10.9 .. 11.0 g/dL) fall in the lower band.
  CHECK(grade_severity(109.5, Population::child_6_59m) == AnemiaStatus::mild);
  CHECK(grade_severity(99.5, Population::pregnant_woman) == AnemiaStatus::moderate);
}

TEST_CASE("adult populations have no severity bands") {
  CHECK_THROWS_WITH(grade_severity(100.0, Population::adult_male),
                    Catch::Matchers::ContainsSubstring("no severity bands defined"));
  CHECK_THROWS_WITH(grade_severity(100.0, Population::adult_female),
                    Catch::Matchers::ContainsSubstring("no severity bands defined"));
}

TEST_CASE("severity bands partition the axis in order") {
  for (const SeverityRow& row : severity_rows()) {
    REQUIRE(0.0 < row.moderate_lower_g_dl);
    REQUIRE(row.moderate_lower_g_dl < row.mild_lower_g_dl);
    REQUIRE(row.mild_lower_g_dl < row.non_anemic_lower_g_dl);

    // Sweeping Hb upward must pass through severe, moderate, mild, non-anemic
    // exactly once each, never moving backwards.
    int last_rank = -1;
    std::vector<bool> seen(4, false);
    for (double hb_g_l = 1.0; hb_g_l <= 200.0; hb_g_l += 0.1) {
      const AnemiaStatus s = grade_severity(hb_g_l, row.population);
      int rank = -1;
      switch (s) {
        case AnemiaStatus::severe: rank = 0; break;
        case AnemiaStatus::moderate: rank = 1; break;
        case AnemiaStatus::mild: rank = 2; break;
        case AnemiaStatus::non_anemic: rank = 3; break;
        default: FAIL("unexpected status from severity grading");
      }
      REQUIRE(rank >= last_rank);
      last_rank = rank;
      seen[static_cast<std::size_t>(rank)] = true;
    }
    for (bool b : seen) CHECK(b);
  }
}

TEST_CASE("screen_adults maps predictions in order") {
  const std::vector<SubjectPrediction> preds = {
      {"a", 125.0, Sex::male}, {"b", 125.0, Sex::female}, {"c", 110.0, Sex::female}};
  const std::vector<ScreeningResult> res = screen_adults(preds);
  REQUIRE(res.size() == 3);
  CHECK(res[0].subject_id == "a");
  CHECK(res[0].status == AnemiaStatus::anemic);
  CHECK(res[1].status == AnemiaStatus::non_anemic);
  CHECK(res[2].status == AnemiaStatus::anemic);
  CHECK(res[2].predicted_hb_g_l == 110.0);
}

TEST_CASE("threshold sensitivity counts against a brute-force recount") {
  Rng rng(19);
  std::vector<SubjectPrediction> preds;
  for (int i = 0; i < 60; ++i) {
    SubjectPrediction p;
    p.subject_id = "s" + std::to_string(i);
    p.hb_pred_g_l = rng.uniform(90.0, 170.0);
    p.sex = rng.uniform() < 0.5 ? Sex::male : Sex::female;
    preds.push_back(p);
  }

  const std::vector<SensitivityPoint> curve = threshold_sensitivity(preds, default_offset_grid());
  REQUIRE(curve.size() == 9);
  CHECK(curve.front().offset_g_l == -10.0);
  CHECK(curve.back().offset_g_l == 10.0);

  for (const SensitivityPoint& pt : curve) {
    std::size_t expected = 0;
    for (const SubjectPrediction& p : preds) {
      const double thr = (p.sex == Sex::male ? 130.0 : 120.0) + pt.offset_g_l;
      if (p.hb_pred_g_l < thr) ++expected;
    }
    CHECK(pt.anemic_count == expected);
  }
  for (std::size_t i = 1; i < curve.size(); ++i)
    CHECK(curve[i].anemic_count >= curve[i - 1].anemic_count);
}

TEST_CASE("extreme threshold offsets saturate the count") {
  const std::vector<SubjectPrediction> preds = {
      {"a", 100.0, Sex::male}, {"b", 140.0, Sex::female}, {"c", 160.0, Sex::male}};
  const std::vector<SensitivityPoint> curve = threshold_sensitivity(preds, {-200.0, 200.0});
  CHECK(curve[0].anemic_count == 0);
  CHECK(curve[1].anemic_count == 3);
}

TEST_CASE("bland-altman closed forms") {
  const std::vector<double> y = {100.0, 110.0, 120.0, 130.0};

  std::vector<double> shifted = y;
  for (double& v : shifted) v += 2.0;
  const BlandAltman two = bland_altman(shifted, y);
  CHECK_THAT(two.bias, Catch::Matchers::WithinAbs(2.0, 1e-12));
  CHECK_THAT(two.sd, Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(two.loa_low, Catch::Matchers::WithinAbs(2.0, 1e-9));
  CHECK_THAT(two.loa_high, Catch::Matchers::WithinAbs(2.0, 1e-9));

  const BlandAltman same = bland_altman(y, y);
  CHECK(same.bias == 0.0);
  for (const auto& [mean, diff] : same.pairs) CHECK(diff == 0.0);

  const BlandAltman pm = bland_altman({9.0, 11.0}, {10.0, 10.0});
  CHECK_THAT(pm.bias, Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(pm.sd, Catch::Matchers::WithinRel(std::sqrt(2.0), 1e-12));
  CHECK_THAT(pm.loa_high, Catch::Matchers::WithinAbs(1.96 * std::sqrt(2.0), 1e-9));
  CHECK_THAT(pm.loa_high, Catch::Matchers::WithinAbs(2.772, 5e-4));
  CHECK_THAT(pm.loa_low, Catch::Matchers::WithinAbs(-pm.loa_high, 1e-12));

  REQUIRE(pm.pairs.size() == 2);
  CHECK(pm.pairs[0].first == 9.5);
  CHECK(pm.pairs[0].second == -1.0);
  CHECK(pm.pairs[1].first == 10.5);
  CHECK(pm.pairs[1].second == 1.0);

  CHECK_THROWS_AS(bland_altman({1.0}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(bland_altman({1.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("population and status names round-trip") {
  for (Population p : {Population::child_6_59m, Population::child_5_11y, Population::child_12_14y,
                       Population::nonpregnant_woman_15plus, Population::pregnant_woman,
                       Population::adult_male, Population::adult_female})
    CHECK(parse_population(to_string(p)) == p);
  for (AnemiaStatus s : {AnemiaStatus::non_anemic, AnemiaStatus::anemic, AnemiaStatus::mild,
                         AnemiaStatus::moderate, AnemiaStatus::severe})
    CHECK(parse_status(to_string(s)) == s);
  CHECK_THROWS_AS(parse_population("martian"), format_error);
  CHECK_THROWS_AS(parse_status("perfect"), format_error);
}
