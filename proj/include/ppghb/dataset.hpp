#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppghb/common.hpp"
#include "ppghb/features.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Subject metadata
// ---------------------------------------------------------------------------

inline constexpr double hb_sane_min_g_l = 40.0;
inline constexpr double hb_sane_max_g_l = 250.0;

struct SubjectMeta {
  std::string subject_id;
  double age = 0.0;  // years
  Sex sex = Sex::female;
  std::optional<double> hb_ref;  // g/L reference label, absent for unlabeled subjects
};

inline void validate(const SubjectMeta& m) {
  if (m.subject_id.empty()) throw format_error("subject metadata: empty subject_id");
  if (!(m.age > 0.0))
    throw format_error("subject metadata: age must be positive for " + m.subject_id);
  if (m.hb_ref && !(*m.hb_ref >= hb_sane_min_g_l && *m.hb_ref <= hb_sane_max_g_l))
    throw format_error("subject metadata: hb_ref " + std::to_string(*m.hb_ref) +
                       " g/L outside sanity bounds [40, 250] for " + m.subject_id);
}

// ---------------------------------------------------------------------------
// Subject-level aggregation
// ---------------------------------------------------------------------------

// One row per subject: per segment feature F both F_mean and F_median, then
// age, sex_encoded (0 = female, 1 = male) and n_segments as ordinary columns.
// hb_ref rides along separately as the (optional) label.
struct SubjectRow {
  std::string subject_id;
  std::vector<double> values;  // aligned with SubjectTable::columns
  std::size_t n_segments = 0;
  std::optional<double> hb_ref;
};

struct SubjectTable {
  std::vector<std::string> columns;
  std::vector<SubjectRow> rows;

  std::size_t column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::invalid_argument("unknown subject column: " + name);
    return static_cast<std::size_t>(it - columns.begin());
  }
};

inline std::vector<std::string> subject_columns(const std::vector<std::string>& feature_columns) {
  std::vector<std::string> cols;
  cols.reserve(2 * feature_columns.size() + 3);
  for (const std::string& f : feature_columns) {
    cols.push_back(f + "_mean");
    cols.push_back(f + "_median");
  }
  cols.push_back("age");
  cols.push_back("sex_encoded");
  cols.push_back("n_segments");
  return cols;
}

struct AggregateResult {
  SubjectTable table;
  std::vector<std::string> warnings;  // metadata subjects that contributed no segments
};

// Collapses segment rows to one representative vector per subject using mean
// and median, skipping missing entries. Subjects present in the table must
// have metadata; metadata subjects without segments are skipped with a warning.
inline AggregateResult aggregate_subjects(const FeatureTable& table,
                                          const std::vector<SubjectMeta>& meta) {
  std::map<std::string, const SubjectMeta*> by_id;
  for (const SubjectMeta& m : meta) {
    validate(m);
    if (!by_id.emplace(m.subject_id, &m).second)
      throw format_error("subject metadata: duplicate subject_id " + m.subject_id);
  }

  // Group segment rows per subject in canonical segment order, so summation
  // order (and hence the mean, bit for bit) is independent of row order.
  std::map<std::string, std::vector<const SegmentFeatureRow*>> groups;
  for (const SegmentFeatureRow& r : table.rows) {
    if (!by_id.count(r.subject_id))
      throw std::runtime_error("no metadata for subject " + r.subject_id);
    groups[r.subject_id].push_back(&r);
  }
  for (auto& [id, segs] : groups)
    std::sort(segs.begin(), segs.end(), [](const SegmentFeatureRow* a, const SegmentFeatureRow* b) {
      return a->segment_index < b->segment_index;
    });

  AggregateResult result;
  result.table.columns = subject_columns(table.columns);
  for (const SubjectMeta& m : meta) {
    const auto git = groups.find(m.subject_id);
    if (git == groups.end()) {
      result.warnings.push_back("subject " + m.subject_id + " has no segments; excluded");
      continue;
    }
    const std::vector<const SegmentFeatureRow*>& segs = git->second;

    SubjectRow row;
    row.subject_id = m.subject_id;
    row.n_segments = segs.size();
    row.hb_ref = m.hb_ref;
    row.values.reserve(result.table.columns.size());
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      std::vector<double> present;
      present.reserve(segs.size());
      for (const SegmentFeatureRow* s : segs)
        if (!is_missing(s->values[c])) present.push_back(s->values[c]);
      if (present.empty()) {
        row.values.push_back(missing_value);
        row.values.push_back(missing_value);
      } else {
        row.values.push_back(mean_of(present));
        row.values.push_back(median_of(present));
      }
    }
    row.values.push_back(m.age);
    row.values.push_back(sex_encoded(m.sex));
    row.values.push_back(static_cast<double>(segs.size()));
    result.table.rows.push_back(std::move(row));
  }
  std::sort(result.table.rows.begin(), result.table.rows.end(),
            [](const SubjectRow& a, const SubjectRow& b) { return a.subject_id < b.subject_id; });
  return result;
}

// ---------------------------------------------------------------------------
// Subject-wise split
// ---------------------------------------------------------------------------

struct SplitAssignment {
  std::vector<std::string> train;  // sorted subject ids
  std::vector<std::string> test;   // sorted subject ids
  std::uint64_t seed = 0;
};

// 80:20 subject-level split over the labeled subjects, stratified by hb_ref
// quartile (rank-based buckets) with largest-remainder apportionment of the
// test quota across quartiles. Deterministic in (labels, seed); the input row
// order does not matter.
inline SplitAssignment split_subjects(const SubjectTable& table, double test_fraction = 0.2,
                                      std::uint64_t seed = 0) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw config_error("test_fraction must lie in (0, 1)");

  struct Labeled {
    std::string id;
    double hb;
  };
  std::vector<Labeled> labeled;
  for (const SubjectRow& r : table.rows)
    if (r.hb_ref) labeled.push_back({r.subject_id, *r.hb_ref});
  if (labeled.size() < 5)
    throw std::runtime_error("too few subjects: " + std::to_string(labeled.size()) +
                             " labeled, need at least 5");

  std::sort(labeled.begin(), labeled.end(), [](const Labeled& a, const Labeled& b) {
    return a.hb != b.hb ? a.hb < b.hb : a.id < b.id;
  });
  const std::size_t n = labeled.size();
  std::array<std::vector<std::string>, 4> quartiles;
  for (std::size_t i = 0; i < n; ++i) quartiles[4 * i / n].push_back(labeled[i].id);

  const std::size_t n_test =
      static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(n)));

  // Largest-remainder apportionment of n_test across the four quartiles.
  std::array<std::size_t, 4> quota{};
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (int q = 0; q < 4; ++q) {
    const double exact =
        static_cast<double>(n_test) * static_cast<double>(quartiles[q].size()) / static_cast<double>(n);
    quota[q] = static_cast<std::size_t>(std::floor(exact));
    quota[q] = std::min(quota[q], quartiles[q].size());
    remainder[q] = exact - std::floor(exact);
    assigned += quota[q];
  }
  std::array<int, 4> order = {0, 1, 2, 3};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return remainder[a] != remainder[b] ? remainder[a] > remainder[b] : a < b;
  });
  for (int idx = 0; assigned < n_test; idx = (idx + 1) % 4) {
    const int q = order[static_cast<std::size_t>(idx)];
    if (quota[q] < quartiles[q].size()) {
      ++quota[q];
      ++assigned;
    }
  }

  SplitAssignment split;
  split.seed = seed;
  Rng rng(seed);
  for (int q = 0; q < 4; ++q) {
    rng.shuffle(quartiles[q]);
    for (std::size_t i = 0; i < quartiles[q].size(); ++i)
      (i < quota[q] ? split.test : split.train).push_back(quartiles[q][i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// Model-facing matrix view
// ---------------------------------------------------------------------------

struct SubjectMatrix {
  std::vector<std::string> feature_names;
  std::vector<std::string> subject_ids;
  std::vector<std::vector<double>> X;  // one row per subject
  std::vector<double> y;               // empty when built without labels
};

// Rows restricted to `ids` in the given order; with_labels requires hb_ref on
// every selected row.
inline SubjectMatrix to_matrix(const SubjectTable& table, const std::vector<std::string>& ids,
                               bool with_labels) {
  std::map<std::string, const SubjectRow*> by_id;
  for (const SubjectRow& r : table.rows) by_id[r.subject_id] = &r;

  SubjectMatrix m;
  m.feature_names = table.columns;
  for (const std::string& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("subject " + id + " not in table");
    m.subject_ids.push_back(id);
    m.X.push_back(it->second->values);
    if (with_labels) {
      if (!it->second->hb_ref) throw std::runtime_error("subject " + id + " has no hb_ref label");
      m.y.push_back(*it->second->hb_ref);
    }
  }
  return m;
}

inline std::vector<std::string> all_subject_ids(const SubjectTable& table) {
  std::vector<std::string> ids;
  ids.reserve(table.rows.size());
  for (const SubjectRow& r : table.rows) ids.push_back(r.subject_id);
  return ids;
}

}  // namespace ppghb
