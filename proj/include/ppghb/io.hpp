#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppghb/common.hpp"
#include "ppghb/dataset.hpp"
#include "ppghb/explain.hpp"
#include "ppghb/features.hpp"
#include "ppghb/gbm.hpp"
#include "ppghb/screening.hpp"
#include "ppghb/signal.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("missing input: " + path);
  return in;
}

// Shortest round-trip decimal representation; identical bytes for identical
// doubles on every run.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& cell, const std::string& context) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw format_error("not a number: '" + cell + "' in " + context);
  return v;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Csv read_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw format_error("empty file: " + path);
  csv.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != csv.header.size())
      throw format_error(path + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(csv.header.size()) + " columns, got " +
                         std::to_string(cells.size()));
    csv.rows.push_back(std::move(cells));
  }
  return csv;
}

inline void require_header(const Csv& csv, const std::vector<std::string>& expected,
                           const std::string& path) {
  if (csv.header != expected) {
    std::ostringstream msg;
    msg << path << ": malformed header, expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) msg << (i ? "," : "") << expected[i];
    throw format_error(msg.str());
  }
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Signal CSV (one file per subject)
// ---------------------------------------------------------------------------

// Header `t,ppg_660,ppg_730,ppg_850,ppg_940`; the leading `t` column is
// optional and ignored on read (fs comes from configuration).
inline PpgRecord read_signal_csv(const std::string& path, const std::string& subject_id,
                                 double fs) {
  const detail::Csv csv = detail::read_csv(path);
  const std::vector<std::string> channels = {"ppg_660", "ppg_730", "ppg_850", "ppg_940"};
  std::vector<std::string> with_t = {"t"};
  with_t.insert(with_t.end(), channels.begin(), channels.end());

  std::size_t offset = 0;
  if (csv.header == with_t) {
    offset = 1;
  } else if (csv.header != channels) {
    throw format_error(path + ": malformed header, expected t,ppg_660,ppg_730,ppg_850,ppg_940 "
                              "(t optional)");
  }

  PpgRecord rec;
  rec.subject_id = subject_id;
  rec.fs = fs;
  for (Wavelength w : all_wavelengths) rec.channels[w] = {};
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const std::string context = path + ":" + std::to_string(r + 2);
      rec.channels[all_wavelengths[c]].push_back(
          detail::parse_double(csv.rows[r][offset + c], context));
    }
  }
  return rec;
}

inline void write_signal_csv(const std::string& path, const PpgRecord& rec) {
  std::ofstream out = detail::open_out(path);
  out << "t,ppg_660,ppg_730,ppg_850,ppg_940\n";
  const std::size_t n = rec.channels.begin()->second.size();
  for (std::size_t i = 0; i < n; ++i) {
    out << detail::format_double(static_cast<double>(i) / rec.fs);
    for (Wavelength w : all_wavelengths)
      out << ',' << detail::format_double(rec.channels.at(w)[i]);
    out << '\n';
  }
  if (!out) throw io_error("failed writing: " + path);
}

// ---------------------------------------------------------------------------
// Metadata CSV
// ---------------------------------------------------------------------------

inline std::vector<SubjectMeta> read_metadata_csv(const std::string& path) {
  const detail::Csv csv = detail::read_csv(path);
  detail::require_header(csv, {"subject_id", "age", "sex", "hb_g_per_l"}, path);
  std::vector<SubjectMeta> meta;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const std::string context = path + ":" + std::to_string(r + 2);
    SubjectMeta m;
    m.subject_id = csv.rows[r][0];
    m.age = detail::parse_double(csv.rows[r][1], context);
    m.sex = parse_sex(csv.rows[r][2]);
    if (!csv.rows[r][3].empty()) m.hb_ref = detail::parse_double(csv.rows[r][3], context);
    validate(m);
    meta.push_back(std::move(m));
  }
  return meta;
}

inline void write_metadata_csv(const std::string& path, const std::vector<SubjectMeta>& meta) {
  std::ofstream out = detail::open_out(path);
  out << "subject_id,age,sex,hb_g_per_l\n";
  for (const SubjectMeta& m : meta) {
    out << m.subject_id << ',' << detail::format_double(m.age) << ',' << sex_code(m.sex) << ',';
    if (m.hb_ref) out << detail::format_double(*m.hb_ref);
    out << '\n';
  }
  if (!out) throw io_error("failed writing: " + path);
}

// ---------------------------------------------------------------------------
// Feature table CSV (missing values as empty cells)
// ---------------------------------------------------------------------------

inline void write_feature_table_csv(const std::string& path, const FeatureTable& table) {
  std::ofstream out = detail::open_out(path);
  out << "subject_id,segment_index";
  for (const std::string& c : table.columns) out << ',' << c;
  out << '\n';
  for (const SegmentFeatureRow& r : table.rows) {
    out << r.subject_id << ',' << r.segment_index;
    for (double v : r.values) {
      out << ',';
      if (!is_missing(v)) out << detail::format_double(v);
    }
    out << '\n';
  }
  if (!out) throw io_error("failed writing: " + path);
}

inline FeatureTable read_feature_table_csv(const std::string& path) {
  const detail::Csv csv = detail::read_csv(path);
  if (csv.header.size() < 3 || csv.header[0] != "subject_id" || csv.header[1] != "segment_index")
    throw format_error(path + ": malformed header, expected subject_id,segment_index,<features>");

  FeatureTable table;
  table.columns.assign(csv.header.begin() + 2, csv.header.end());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const std::string context = path + ":" + std::to_string(r + 2);
    SegmentFeatureRow row;
    row.subject_id = csv.rows[r][0];
    row.segment_index =
        static_cast<std::size_t>(detail::parse_double(csv.rows[r][1], context));
    for (std::size_t c = 2; c < csv.header.size(); ++c)
      row.values.push_back(csv.rows[r][c].empty()
                               ? missing_value
                               : detail::parse_double(csv.rows[r][c], context));
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Subject table CSV
// ---------------------------------------------------------------------------

inline void write_subject_table_csv(const std::string& path, const SubjectTable& table) {
  std::ofstream out = detail::open_out(path);
  out << "subject_id";
  for (const std::string& c : table.columns) out << ',' << c;
  out << ",hb_g_per_l\n";
  for (const SubjectRow& r : table.rows) {
    out << r.subject_id;
    for (double v : r.values) {
      out << ',';
      if (!is_missing(v)) out << detail::format_double(v);
    }
    out << ',';
    if (r.hb_ref) out << detail::format_double(*r.hb_ref);
    out << '\n';
  }
  if (!out) throw io_error("failed writing: " + path);
}

inline SubjectTable read_subject_table_csv(const std::string& path) {
  const detail::Csv csv = detail::read_csv(path);
  if (csv.header.size() < 3 || csv.header.front() != "subject_id" ||
      csv.header.back() != "hb_g_per_l")
    throw format_error(path + ": malformed header, expected subject_id,<features>,hb_g_per_l");

  SubjectTable table;
  table.columns.assign(csv.header.begin() + 1, csv.header.end() - 1);
  const std::size_t n_cols = table.columns.size();
  std::size_t n_segments_col = n_cols;
  for (std::size_t c = 0; c < n_cols; ++c)
    if (table.columns[c] == "n_segments") n_segments_col = c;

  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const std::string context = path + ":" + std::to_string(r + 2);
    SubjectRow row;
    row.subject_id = csv.rows[r][0];
    for (std::size_t c = 0; c < n_cols; ++c)
      row.values.push_back(csv.rows[r][c + 1].empty()
                               ? missing_value
                               : detail::parse_double(csv.rows[r][c + 1], context));
    if (n_segments_col < n_cols)
      row.n_segments = static_cast<std::size_t>(row.values[n_segments_col]);
    const std::string& hb = csv.rows[r].back();
    if (!hb.empty()) row.hb_ref = detail::parse_double(hb, context);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Split JSON
// ---------------------------------------------------------------------------

inline void write_split_json(const std::string& path, const SplitAssignment& split) {
  nlohmann::json j;
  j["seed"] = split.seed;
  j["train"] = split.train;
  j["test"] = split.test;
  detail::write_json(path, j);
}

inline SplitAssignment read_split_json(const std::string& path) {
  const nlohmann::json j = detail::read_json(path);
  try {
    SplitAssignment split;
    split.seed = j.at("seed").get<std::uint64_t>();
    split.train = j.at("train").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
    return split;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Quality JSON (the +-inf SNR sentinel carries an explicit flag)
// ---------------------------------------------------------------------------

struct QualityReading {
  double sqi = 0.0;
  double snr_db = 0.0;  // saturated values already clamped to +-999
  bool snr_saturated = false;
};

inline QualityReading to_reading(const QualityIndices& q) {
  QualityReading r;
  r.sqi = q.sqi;
  r.snr_saturated = !(q.snr_db < snr_sentinel_db);
  r.snr_db = saturate_snr(q.snr_db);
  return r;
}

struct QualityRow {
  std::string subject_id;
  std::size_t segment_index = 0;
  int wavelength_nm = 0;
  QualityReading raw;
  QualityReading filtered;
};

inline void write_quality_json(const std::string& path, const std::vector<QualityRow>& rows) {
  const auto reading_json = [](const QualityReading& r) {
    return nlohmann::json{
        {"sqi", r.sqi}, {"snr_db", r.snr_db}, {"snr_saturated", r.snr_saturated}};
  };
  nlohmann::json j = nlohmann::json::array();
  for (const QualityRow& r : rows) {
    j.push_back({{"subject_id", r.subject_id},
                 {"segment_index", r.segment_index},
                 {"wavelength_nm", r.wavelength_nm},
                 {"raw", reading_json(r.raw)},
                 {"filtered", reading_json(r.filtered)}});
  }
  detail::write_json(path, j);
}

// ---------------------------------------------------------------------------
// Predictions, screening, sensitivity CSVs
// ---------------------------------------------------------------------------

struct PredictionRow {
  std::string subject_id;
  double hb_pred_g_l = 0.0;
};

inline void write_predictions_csv(const std::string& path,
                                  const std::vector<PredictionRow>& rows) {
  std::ofstream out = detail::open_out(path);
  out << "subject_id,predicted_hb_g_l\n";
  for (const PredictionRow& r : rows)
    out << r.subject_id << ',' << detail::format_double(r.hb_pred_g_l) << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

inline std::vector<PredictionRow> read_predictions_csv(const std::string& path) {
  const detail::Csv csv = detail::read_csv(path);
  detail::require_header(csv, {"subject_id", "predicted_hb_g_l"}, path);
  std::vector<PredictionRow> rows;
  for (std::size_t r = 0; r < csv.rows.size(); ++r)
    rows.push_back({csv.rows[r][0], detail::parse_double(csv.rows[r][1],
                                                         path + ":" + std::to_string(r + 2))});
  return rows;
}

inline void write_screening_csv(const std::string& path,
                                const std::vector<ScreeningResult>& rows) {
  std::ofstream out = detail::open_out(path);
  out << "subject_id,predicted_hb_g_l,sex,status\n";
  for (const ScreeningResult& r : rows)
    out << r.subject_id << ',' << detail::format_double(r.predicted_hb_g_l) << ','
        << sex_code(r.sex) << ',' << to_string(r.status) << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

inline void write_sensitivity_csv(const std::string& path,
                                  const std::vector<SensitivityPoint>& points) {
  std::ofstream out = detail::open_out(path);
  out << "offset_g_l,anemic_count\n";
  for (const SensitivityPoint& p : points)
    out << detail::format_double(p.offset_g_l) << ',' << p.anemic_count << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

// ---------------------------------------------------------------------------
// Evaluation outputs
// ---------------------------------------------------------------------------

inline nlohmann::json metrics_to_json(const RegressionMetrics& m) {
  nlohmann::json j;
  j["mae_g_l"] = m.mae;
  j["rmse_g_l"] = m.rmse;
  j["r2"] = m.r2 ? nlohmann::json(*m.r2) : nlohmann::json(nullptr);
  j["n"] = m.n;
  return j;
}

inline void write_metrics_json(const std::string& path, const RegressionMetrics& train,
                               const RegressionMetrics& test, const BlandAltman& test_ba) {
  nlohmann::json j;
  j["train"] = metrics_to_json(train);
  j["test"] = metrics_to_json(test);
  j["test_bland_altman"] = {{"bias_g_l", test_ba.bias},
                            {"sd_g_l", test_ba.sd},
                            {"loa_low_g_l", test_ba.loa_low},
                            {"loa_high_g_l", test_ba.loa_high}};
  detail::write_json(path, j);
}

struct ScatterRow {
  double hb_ref = 0.0;
  double hb_pred = 0.0;
  std::string split;  // "train" or "test"
};

inline void write_scatter_csv(const std::string& path, const std::vector<ScatterRow>& rows) {
  std::ofstream out = detail::open_out(path);
  out << "hb_ref,hb_pred,split\n";
  for (const ScatterRow& r : rows)
    out << detail::format_double(r.hb_ref) << ',' << detail::format_double(r.hb_pred) << ','
        << r.split << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

inline void write_bland_altman_csv(const std::string& path, const BlandAltman& ba) {
  std::ofstream out = detail::open_out(path);
  out << "mean_g_l,diff_g_l\n";
  for (const auto& [mean, diff] : ba.pairs)
    out << detail::format_double(mean) << ',' << detail::format_double(diff) << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

// ---------------------------------------------------------------------------
// Explanation outputs
// ---------------------------------------------------------------------------

inline void write_importance_csv(const std::string& path,
                                 const std::vector<ImportanceEntry>& entries) {
  std::ofstream out = detail::open_out(path);
  out << "feature,mean_abs_phi_g_l\n";
  for (const ImportanceEntry& e : entries)
    out << e.feature << ',' << detail::format_double(e.mean_abs_phi) << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

inline void write_gain_importance_csv(const std::string& path,
                                      const std::map<std::string, double>& gains) {
  std::ofstream out = detail::open_out(path);
  out << "feature,total_gain\n";
  for (const auto& [feature, gain] : gains)
    out << feature << ',' << detail::format_double(gain) << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

inline void write_dependence_csv(const std::string& path,
                                 const std::vector<DependencePoint>& points) {
  std::ofstream out = detail::open_out(path);
  out << "feature_value,phi_g_l\n";
  for (const DependencePoint& p : points)
    out << detail::format_double(p.value) << ',' << detail::format_double(p.phi) << '\n';
  if (!out) throw io_error("failed writing: " + path);
}

struct SubjectExplanation {
  std::string subject_id;
  ShapExplanation explanation;
  std::vector<WaterfallStep> waterfall;
};

inline void write_explanations_json(const std::string& path,
                                    const std::vector<SubjectExplanation>& subjects,
                                    const std::vector<std::string>& feature_names) {
  nlohmann::json j = nlohmann::json::array();
  for (const SubjectExplanation& s : subjects) {
    nlohmann::json phi = nlohmann::json::object();
    for (std::size_t i = 0; i < feature_names.size(); ++i)
      phi[feature_names[i]] = s.explanation.phi[i];
    nlohmann::json steps = nlohmann::json::array();
    for (const WaterfallStep& step : s.waterfall)
      steps.push_back(
          {{"name", step.name}, {"phi", step.phi}, {"cumulative", step.cumulative}});
    j.push_back({{"subject_id", s.subject_id},
                 {"base_value_g_l", s.explanation.base_value},
                 {"prediction_g_l", s.explanation.prediction},
                 {"phi", phi},
                 {"waterfall", steps}});
  }
  detail::write_json(path, j);
}

// ---------------------------------------------------------------------------
// Cleaning report and audit log
// ---------------------------------------------------------------------------

inline void write_dropped_columns_json(const std::string& path,
                                       const std::vector<DroppedColumn>& dropped) {
  nlohmann::json j = nlohmann::json::array();
  for (const DroppedColumn& d : dropped)
    j.push_back({{"name", d.name}, {"reason", d.reason}, {"statistic", d.statistic}});
  detail::write_json(path, j);
}

// Stage name -> subject ids consumed; the train entry is the leakage audit.
inline void write_audit_json(const std::string& path,
                             const std::map<std::string, std::vector<std::string>>& consumed) {
  nlohmann::json j;
  for (const auto& [stage, ids] : consumed) j[stage] = ids;
  detail::write_json(path, j);
}

inline std::map<std::string, std::vector<std::string>> read_audit_json(const std::string& path) {
  const nlohmann::json j = detail::read_json(path);
  std::map<std::string, std::vector<std::string>> consumed;
  for (const auto& [stage, ids] : j.items())
    consumed[stage] = ids.get<std::vector<std::string>>();
  return consumed;
}

}  // namespace ppghb
