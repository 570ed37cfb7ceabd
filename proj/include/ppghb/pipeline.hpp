#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppghb/common.hpp"
#include "ppghb/dataset.hpp"
#include "ppghb/explain.hpp"
#include "ppghb/features.hpp"
#include "ppghb/gbm.hpp"
#include "ppghb/io.hpp"
#include "ppghb/screening.hpp"
#include "ppghb/signal.hpp"
#include "ppghb/synth.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline constexpr const char* pipeline_config_version = "ppghb-config-1";

struct PipelineConfig {
  // data paths
  std::string signals_dir;   // one <subject_id>.csv per subject
  std::string metadata_csv;  // subject_id,age,sex,hb_g_per_l
  std::string out_dir = "out";

  // signal
  double fs = 100.0;
  std::size_t window_len = default_window_len;

  // filter
  double filter_low_hz = ppg_band_low_hz;
  double filter_high_hz = ppg_band_high_hz;
  int filter_order = 3;

  // welch
  WelchParams welch;

  // cleaning
  double max_nan_fraction = 0.2;
  double min_variance = 1e-12;

  // split
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  // model
  GbmHyperparams gbm;

  // screening
  std::vector<double> offset_grid_g_l = default_offset_grid();

  // synthetic data (the synth stage uses the top-level fs, not synth.fs)
  SynthConfig synth;
};

inline void validate_config(const PipelineConfig& cfg) {
  std::vector<std::string> paths;
  for (const std::string* p : {&cfg.signals_dir, &cfg.metadata_csv, &cfg.out_dir})
    if (!p->empty()) paths.push_back(*p);
  std::sort(paths.begin(), paths.end());
  if (std::adjacent_find(paths.begin(), paths.end()) != paths.end())
    throw config_error("config: signals_dir, metadata_csv, and out_dir must be distinct paths");
  if (cfg.out_dir.empty()) throw config_error("config: out_dir must not be empty");

  if (!(cfg.fs > 10.0)) throw config_error("config: fs must exceed 10 Hz");
  if (cfg.window_len < 2) throw config_error("config: window_len must be >= 2");
  if (!(cfg.filter_low_hz > 0.0 && cfg.filter_low_hz < cfg.filter_high_hz &&
        cfg.filter_high_hz < cfg.fs / 2.0))
    throw config_error("config: need 0 < filter_low_hz < filter_high_hz < fs/2");
  if (cfg.filter_order < 1 || cfg.filter_order > 12)
    throw config_error("config: filter_order out of range [1, 12]");
  if (cfg.welch.nperseg < 2) throw config_error("config: welch nperseg must be >= 2");
  if (!(cfg.welch.overlap_fraction >= 0.0 && cfg.welch.overlap_fraction < 1.0))
    throw config_error("config: welch overlap_fraction must lie in [0, 1)");
  if (!(cfg.max_nan_fraction >= 0.0 && cfg.max_nan_fraction <= 1.0))
    throw config_error("config: max_nan_fraction must lie in [0, 1]");
  if (!(cfg.min_variance >= 0.0)) throw config_error("config: min_variance must be >= 0");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw config_error("config: test_fraction must lie in (0, 1)");
  if (!(cfg.gbm.learning_rate > 0.0 && cfg.gbm.learning_rate <= 1.0))
    throw config_error("config: gbm learning_rate must lie in (0, 1]");
  if (cfg.gbm.max_depth < 1) throw config_error("config: gbm max_depth must be >= 1");
  if (cfg.gbm.min_samples_leaf < 1)
    throw config_error("config: gbm min_samples_leaf must be >= 1");
  if (cfg.offset_grid_g_l.empty())
    throw config_error("config: screening offset grid must not be empty");
  for (double d : cfg.offset_grid_g_l)
    if (!std::isfinite(d)) throw config_error("config: screening offsets must be finite");
  {
    SynthConfig s = cfg.synth;
    s.fs = cfg.fs;  // generated data must match what the pipeline will assume
    validate(s);
  }
}

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                       const std::string& context) {
  if (!obj.is_object()) throw config_error("config: " + context + " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw config_error("config: unknown key " + context + "." + key);
}

template <typename T>
void maybe_get(const nlohmann::json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error(std::string("config: wrong type for key ") + key);
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"version", "data", "signal", "filter", "welch", "cleaning", "split", "gbm",
                      "screening", "synth"},
                     "<root>");
  if (!j.contains("version")) throw config_error("config: missing version");
  if (!j.at("version").is_string() ||
      j.at("version").get<std::string>() != pipeline_config_version)
    throw config_error(std::string("config: unsupported version, expected ") +
                       pipeline_config_version);

  PipelineConfig cfg;
  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::check_keys(d, {"signals_dir", "metadata_csv", "out_dir"}, "data");
    detail::maybe_get(d, "signals_dir", cfg.signals_dir);
    detail::maybe_get(d, "metadata_csv", cfg.metadata_csv);
    detail::maybe_get(d, "out_dir", cfg.out_dir);
  }
  if (j.contains("signal")) {
    const auto& s = j.at("signal");
    detail::check_keys(s, {"fs", "window_len"}, "signal");
    detail::maybe_get(s, "fs", cfg.fs);
    detail::maybe_get(s, "window_len", cfg.window_len);
  }
  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    detail::check_keys(f, {"low_hz", "high_hz", "order"}, "filter");
    detail::maybe_get(f, "low_hz", cfg.filter_low_hz);
    detail::maybe_get(f, "high_hz", cfg.filter_high_hz);
    detail::maybe_get(f, "order", cfg.filter_order);
  }
  if (j.contains("welch")) {
    const auto& w = j.at("welch");
    detail::check_keys(w, {"nperseg", "overlap_fraction"}, "welch");
    detail::maybe_get(w, "nperseg", cfg.welch.nperseg);
    detail::maybe_get(w, "overlap_fraction", cfg.welch.overlap_fraction);
  }
  if (j.contains("cleaning")) {
    const auto& c = j.at("cleaning");
    detail::check_keys(c, {"max_nan_fraction", "min_variance"}, "cleaning");
    detail::maybe_get(c, "max_nan_fraction", cfg.max_nan_fraction);
    detail::maybe_get(c, "min_variance", cfg.min_variance);
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::check_keys(s, {"test_fraction", "seed"}, "split");
    detail::maybe_get(s, "test_fraction", cfg.test_fraction);
    detail::maybe_get(s, "seed", cfg.seed);
  }
  if (j.contains("gbm")) {
    const auto& g = j.at("gbm");
    detail::check_keys(g, {"n_trees", "learning_rate", "max_depth", "min_samples_leaf"}, "gbm");
    detail::maybe_get(g, "n_trees", cfg.gbm.n_trees);
    detail::maybe_get(g, "learning_rate", cfg.gbm.learning_rate);
    detail::maybe_get(g, "max_depth", cfg.gbm.max_depth);
    detail::maybe_get(g, "min_samples_leaf", cfg.gbm.min_samples_leaf);
  }
  if (j.contains("screening")) {
    const auto& s = j.at("screening");
    detail::check_keys(s, {"offset_grid_g_l"}, "screening");
    detail::maybe_get(s, "offset_grid_g_l", cfg.offset_grid_g_l);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    detail::check_keys(s,
                       {"n_subjects", "duration_s", "hb_min_g_l", "hb_max_g_l",
                        "heart_rate_min_hz", "heart_rate_max_hz", "noise_sd", "drift_amplitude",
                        "seed"},
                       "synth");
    detail::maybe_get(s, "n_subjects", cfg.synth.n_subjects);
    detail::maybe_get(s, "duration_s", cfg.synth.duration_s);
    detail::maybe_get(s, "hb_min_g_l", cfg.synth.hb_min_g_l);
    detail::maybe_get(s, "hb_max_g_l", cfg.synth.hb_max_g_l);
    detail::maybe_get(s, "heart_rate_min_hz", cfg.synth.heart_rate_min_hz);
    detail::maybe_get(s, "heart_rate_max_hz", cfg.synth.heart_rate_max_hz);
    detail::maybe_get(s, "noise_sd", cfg.synth.noise_sd);
    detail::maybe_get(s, "drift_amplitude", cfg.synth.drift_amplitude);
    detail::maybe_get(s, "seed", cfg.synth.seed);
  }
  validate_config(cfg);
  return cfg;
}

inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["version"] = pipeline_config_version;
  j["data"] = {{"signals_dir", cfg.signals_dir},
               {"metadata_csv", cfg.metadata_csv},
               {"out_dir", cfg.out_dir}};
  j["signal"] = {{"fs", cfg.fs}, {"window_len", cfg.window_len}};
  j["filter"] = {{"low_hz", cfg.filter_low_hz},
                 {"high_hz", cfg.filter_high_hz},
                 {"order", cfg.filter_order}};
  j["welch"] = {{"nperseg", cfg.welch.nperseg}, {"overlap_fraction", cfg.welch.overlap_fraction}};
  j["cleaning"] = {{"max_nan_fraction", cfg.max_nan_fraction}, {"min_variance", cfg.min_variance}};
  j["split"] = {{"test_fraction", cfg.test_fraction}, {"seed", cfg.seed}};
  j["gbm"] = {{"n_trees", cfg.gbm.n_trees},
              {"learning_rate", cfg.gbm.learning_rate},
              {"max_depth", cfg.gbm.max_depth},
              {"min_samples_leaf", cfg.gbm.min_samples_leaf}};
  j["screening"] = {{"offset_grid_g_l", cfg.offset_grid_g_l}};
  j["synth"] = {{"n_subjects", cfg.synth.n_subjects},
                {"duration_s", cfg.synth.duration_s},
                {"hb_min_g_l", cfg.synth.hb_min_g_l},
                {"hb_max_g_l", cfg.synth.hb_max_g_l},
                {"heart_rate_min_hz", cfg.synth.heart_rate_min_hz},
                {"heart_rate_max_hz", cfg.synth.heart_rate_max_hz},
                {"noise_sd", cfg.synth.noise_sd},
                {"drift_amplitude", cfg.synth.drift_amplitude},
                {"seed", cfg.synth.seed}};
  return j;
}

inline PipelineConfig load_config(const std::string& path) {
  return config_from_json(detail::read_json(path));
}

inline void save_config(const std::string& path, const PipelineConfig& cfg) {
  detail::write_json(path, config_to_json(cfg));
}

// ---------------------------------------------------------------------------
// Output locations (all relative to out_dir)
// ---------------------------------------------------------------------------

namespace stage_files {
inline constexpr const char* quality = "quality.json";
inline constexpr const char* features = "features.csv";
inline constexpr const char* dropped_columns = "dropped_columns.json";
inline constexpr const char* subjects = "subjects.csv";
inline constexpr const char* split = "split.json";
inline constexpr const char* model = "model.json";
inline constexpr const char* train_trace = "train_trace.csv";
inline constexpr const char* predictions = "predictions.csv";
inline constexpr const char* metrics = "metrics.json";
inline constexpr const char* scatter = "scatter.csv";
inline constexpr const char* bland_altman = "bland_altman.csv";
inline constexpr const char* screening = "screening.csv";
inline constexpr const char* sensitivity = "sensitivity.csv";
inline constexpr const char* shap_importance = "importance_shap.csv";
inline constexpr const char* gain_importance = "importance_gain.csv";
inline constexpr const char* explanations = "explanations.json";
inline constexpr const char* audit = "audit.json";
}  // namespace stage_files

inline std::string out_path(const PipelineConfig& cfg, const char* name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

// ---------------------------------------------------------------------------
// Audit log: subject ids consumed per stage. The train entry is what the
// leakage invariant is checked against.
// ---------------------------------------------------------------------------

class AuditLog {
 public:
  void record(const std::string& stage, std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    consumed_[stage] = std::move(ids);
  }

  const std::map<std::string, std::vector<std::string>>& entries() const { return consumed_; }

  void save(const std::string& path) const { write_audit_json(path, consumed_); }

  static AuditLog load_or_empty(const std::string& path) {
    AuditLog log;
    if (std::filesystem::exists(path)) log.consumed_ = read_audit_json(path);
    return log;
  }

 private:
  std::map<std::string, std::vector<std::string>> consumed_;
};

// ---------------------------------------------------------------------------
// Stage implementations
// ---------------------------------------------------------------------------

namespace detail {

inline FeatureParams feature_params(const PipelineConfig& cfg) {
  FeatureParams p;
  p.window_len = cfg.window_len;
  p.filter_low_hz = cfg.filter_low_hz;
  p.filter_high_hz = cfg.filter_high_hz;
  p.filter_order = cfg.filter_order;
  p.welch = cfg.welch;
  p.band_lo_hz = cfg.filter_low_hz;
  p.band_hi_hz = cfg.filter_high_hz;
  return p;
}

inline std::string signal_path(const PipelineConfig& cfg, const std::string& subject_id) {
  return (std::filesystem::path(cfg.signals_dir) / (subject_id + ".csv")).string();
}

}  // namespace detail

// Reads the metadata roster and one signal CSV per listed subject, sorted by
// subject id so downstream output order never depends on roster order.
inline std::vector<PpgRecord> load_records(const PipelineConfig& cfg) {
  if (cfg.metadata_csv.empty()) throw config_error("config: metadata_csv is required");
  if (cfg.signals_dir.empty()) throw config_error("config: signals_dir is required");
  std::vector<SubjectMeta> meta = read_metadata_csv(cfg.metadata_csv);
  std::sort(meta.begin(), meta.end(),
            [](const SubjectMeta& a, const SubjectMeta& b) { return a.subject_id < b.subject_id; });

  std::vector<PpgRecord> records;
  records.reserve(meta.size());
  for (const SubjectMeta& m : meta) {
    PpgRecord rec = read_signal_csv(detail::signal_path(cfg, m.subject_id), m.subject_id, cfg.fs);
    rec.age = m.age;
    rec.sex = m.sex;
    rec.hb_ref = m.hb_ref;
    records.push_back(std::move(rec));
  }
  return records;
}

// quality: per-segment, per-wavelength SQI/SNR before and after filtering.
inline std::vector<QualityRow> run_quality(const PipelineConfig& cfg, AuditLog& audit) {
  const std::vector<PpgRecord> records = load_records(cfg);
  std::vector<QualityRow> rows;
  std::vector<std::string> ids;
  for (const PpgRecord& rec : records) {
    ids.push_back(rec.subject_id);
    const SosFilter filt =
        design_bandpass(rec.fs, cfg.filter_low_hz, cfg.filter_high_hz, cfg.filter_order);
    const auto segments = segment_record(rec, cfg.window_len);
    for (Wavelength w : all_wavelengths) {
      for (const Segment& seg : segments.at(w)) {
        QualityRow row;
        row.subject_id = rec.subject_id;
        row.segment_index = seg.index;
        row.wavelength_nm = to_nm(w);
        row.raw = to_reading(quality_indices(seg.raw, rec.fs, cfg.filter_low_hz,
                                             cfg.filter_high_hz, cfg.welch));
        row.filtered = to_reading(quality_indices(filtfilt(filt, seg.raw), rec.fs,
                                                  cfg.filter_low_hz, cfg.filter_high_hz,
                                                  cfg.welch));
        rows.push_back(std::move(row));
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const QualityRow& a, const QualityRow& b) {
    return std::tie(a.subject_id, a.segment_index, a.wavelength_nm) <
           std::tie(b.subject_id, b.segment_index, b.wavelength_nm);
  });
  write_quality_json(out_path(cfg, stage_files::quality), rows);
  audit.record("quality", std::move(ids));
  return rows;
}

// features: extract, clean, and persist the segment-level feature table.
inline CleanResult run_features(const PipelineConfig& cfg, AuditLog& audit) {
  const std::vector<PpgRecord> records = load_records(cfg);
  const FeatureParams params = detail::feature_params(cfg);

  std::vector<SegmentFeatureRow> rows;
  std::vector<std::string> ids;
  for (const PpgRecord& rec : records) {
    ids.push_back(rec.subject_id);
    std::vector<SegmentFeatureRow> r = extract_features(rec, params);
    rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }

  CleanResult cleaned =
      clean_feature_table(build_feature_table(std::move(rows)), cfg.max_nan_fraction,
                          cfg.min_variance);
  write_feature_table_csv(out_path(cfg, stage_files::features), cleaned.table);
  write_dropped_columns_json(out_path(cfg, stage_files::dropped_columns), cleaned.dropped);
  audit.record("features", std::move(ids));
  return cleaned;
}

// aggregate: segment rows -> one row per subject, joined with metadata.
inline AggregateResult run_aggregate(const PipelineConfig& cfg, AuditLog& audit) {
  const FeatureTable table = read_feature_table_csv(out_path(cfg, stage_files::features));
  const std::vector<SubjectMeta> meta = read_metadata_csv(cfg.metadata_csv);
  AggregateResult result = aggregate_subjects(table, meta);
  write_subject_table_csv(out_path(cfg, stage_files::subjects), result.table);

  std::vector<std::string> ids;
  for (const SubjectRow& r : result.table.rows) ids.push_back(r.subject_id);
  audit.record("aggregate", std::move(ids));
  return result;
}

struct TrainStageResult {
  SplitAssignment split;
  TrainResult train;
};

// train: subject-level split, fit on the training subjects only, persist
// split + model + RMSE trace. Only training ids enter the audit entry.
inline TrainStageResult run_train(const PipelineConfig& cfg, AuditLog& audit) {
  const SubjectTable table = read_subject_table_csv(out_path(cfg, stage_files::subjects));

  TrainStageResult result;
  result.split = split_subjects(table, cfg.test_fraction, cfg.seed);
  write_split_json(out_path(cfg, stage_files::split), result.split);

  const SubjectMatrix m = to_matrix(table, result.split.train, /*with_labels=*/true);
  GbmHyperparams hp = cfg.gbm;
  hp.seed = cfg.seed;
  result.train = train_gbm(m.X, m.y, m.feature_names, hp);
  save_model(result.train.model, out_path(cfg, stage_files::model));

  {
    std::ofstream out = detail::open_out(out_path(cfg, stage_files::train_trace));
    out << "tree_count,train_rmse\n";
    for (std::size_t i = 0; i < result.train.train_rmse.size(); ++i)
      out << i << ',' << detail::format_double(result.train.train_rmse[i]) << '\n';
    if (!out) throw io_error("failed writing: " + out_path(cfg, stage_files::train_trace));
  }

  audit.record("train", result.split.train);
  return result;
}

// predict: apply the model to every subject row, labeled or not.
inline std::vector<PredictionRow> run_predict(const PipelineConfig& cfg, AuditLog& audit) {
  const SubjectTable table = read_subject_table_csv(out_path(cfg, stage_files::subjects));
  const GbmModel model = load_model(out_path(cfg, stage_files::model));
  validate_feature_names(model, table.columns);

  const std::vector<std::string> ids = all_subject_ids(table);
  const SubjectMatrix m = to_matrix(table, ids, /*with_labels=*/false);
  const std::vector<double> preds = predict(model, m.X);

  std::vector<PredictionRow> rows;
  rows.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) rows.push_back({ids[i], preds[i]});
  write_predictions_csv(out_path(cfg, stage_files::predictions), rows);
  audit.record("predict", ids);
  return rows;
}

struct ExplainStageResult {
  std::vector<SubjectExplanation> explanations;
  std::vector<ImportanceEntry> importance;
  std::string dependence_feature;  // empty when the model is trivial
};

// explain: exact per-subject attributions plus global summaries. The
// efficiency axiom is re-checked on every explanation produced. By default the
// dependence data covers the globally most important feature; pass
// dependence_override to pick another column.
inline ExplainStageResult run_explain(const PipelineConfig& cfg, AuditLog& audit,
                                      const std::string& dependence_override = "") {
  const SubjectTable table = read_subject_table_csv(out_path(cfg, stage_files::subjects));
  const GbmModel model = load_model(out_path(cfg, stage_files::model));
  validate_feature_names(model, table.columns);

  const std::vector<std::string> ids = all_subject_ids(table);
  const SubjectMatrix m = to_matrix(table, ids, /*with_labels=*/false);

  ExplainStageResult result;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    SubjectExplanation se;
    se.subject_id = ids[i];
    se.explanation = tree_shap(model, m.X[i]);
    double total = se.explanation.base_value;
    for (double p : se.explanation.phi) total += p;
    if (std::abs(total - se.explanation.prediction) > 1e-6)
      throw std::runtime_error("efficiency violated for subject " + ids[i]);
    se.waterfall = waterfall_data(se.explanation, model.feature_names);
    result.explanations.push_back(std::move(se));
  }

  result.importance = global_importance(model, m.X);
  write_explanations_json(out_path(cfg, stage_files::explanations), result.explanations,
                          model.feature_names);
  write_importance_csv(out_path(cfg, stage_files::shap_importance), result.importance);
  write_gain_importance_csv(out_path(cfg, stage_files::gain_importance), gain_importance(model));

  if (!dependence_override.empty()) {
    result.dependence_feature = dependence_override;
  } else if (!result.importance.empty() && result.importance.front().mean_abs_phi > 0.0) {
    result.dependence_feature = result.importance.front().feature;
  }
  if (!result.dependence_feature.empty()) {
    const std::string name = "dependence_" + result.dependence_feature + ".csv";
    write_dependence_csv((std::filesystem::path(cfg.out_dir) / name).string(),
                         dependence_data(model, m.X, result.dependence_feature));
  }

  audit.record("explain", ids);
  return result;
}

struct ScreenStageResult {
  std::vector<ScreeningResult> results;
  std::vector<SensitivityPoint> sensitivity;
};

// screen: WHO adult thresholds on predicted Hb, plus threshold sensitivity.
inline ScreenStageResult run_screen(const PipelineConfig& cfg, AuditLog& audit) {
  const std::vector<PredictionRow> preds =
      read_predictions_csv(out_path(cfg, stage_files::predictions));
  const std::vector<SubjectMeta> meta = read_metadata_csv(cfg.metadata_csv);
  std::map<std::string, Sex> sex_of;
  for (const SubjectMeta& m : meta) sex_of[m.subject_id] = m.sex;

  std::vector<SubjectPrediction> joined;
  std::vector<std::string> ids;
  joined.reserve(preds.size());
  for (const PredictionRow& p : preds) {
    const auto it = sex_of.find(p.subject_id);
    if (it == sex_of.end())
      throw std::runtime_error("no metadata for subject " + p.subject_id);
    joined.push_back({p.subject_id, p.hb_pred_g_l, it->second});
    ids.push_back(p.subject_id);
  }

  ScreenStageResult result;
  result.results = screen_adults(joined);
  result.sensitivity = threshold_sensitivity(joined, cfg.offset_grid_g_l);
  write_screening_csv(out_path(cfg, stage_files::screening), result.results);
  write_sensitivity_csv(out_path(cfg, stage_files::sensitivity), result.sensitivity);
  audit.record("screen", std::move(ids));
  return result;
}

struct EvaluateStageResult {
  RegressionMetrics train;
  RegressionMetrics test;
  BlandAltman test_ba;
};

// evaluate: per-split regression metrics, scatter data, and Bland-Altman
// agreement on the held-out subjects.
inline EvaluateStageResult run_evaluate(const PipelineConfig& cfg, AuditLog& audit) {
  const SubjectTable table = read_subject_table_csv(out_path(cfg, stage_files::subjects));
  const SplitAssignment split = read_split_json(out_path(cfg, stage_files::split));
  const std::vector<PredictionRow> preds =
      read_predictions_csv(out_path(cfg, stage_files::predictions));

  std::map<std::string, double> pred_of;
  for (const PredictionRow& p : preds) pred_of[p.subject_id] = p.hb_pred_g_l;
  std::map<std::string, double> ref_of;
  for (const SubjectRow& r : table.rows)
    if (r.hb_ref) ref_of[r.subject_id] = *r.hb_ref;

  const auto collect = [&](const std::vector<std::string>& ids, std::vector<double>& y_pred,
                           std::vector<double>& y_ref) {
    for (const std::string& id : ids) {
      const auto pit = pred_of.find(id);
      if (pit == pred_of.end()) throw std::runtime_error("no prediction for subject " + id);
      const auto rit = ref_of.find(id);
      if (rit == ref_of.end()) throw std::runtime_error("no reference hb for subject " + id);
      y_pred.push_back(pit->second);
      y_ref.push_back(rit->second);
    }
  };

  std::vector<double> train_pred, train_ref, test_pred, test_ref;
  collect(split.train, train_pred, train_ref);
  collect(split.test, test_pred, test_ref);

  EvaluateStageResult result;
  result.train = evaluate(train_pred, train_ref);
  result.test = evaluate(test_pred, test_ref);
  result.test_ba = bland_altman(test_pred, test_ref);

  write_metrics_json(out_path(cfg, stage_files::metrics), result.train, result.test,
                     result.test_ba);
  std::vector<ScatterRow> scatter;
  for (std::size_t i = 0; i < split.train.size(); ++i)
    scatter.push_back({train_ref[i], train_pred[i], "train"});
  for (std::size_t i = 0; i < split.test.size(); ++i)
    scatter.push_back({test_ref[i], test_pred[i], "test"});
  write_scatter_csv(out_path(cfg, stage_files::scatter), scatter);
  write_bland_altman_csv(out_path(cfg, stage_files::bland_altman), result.test_ba);

  std::vector<std::string> ids = split.train;
  ids.insert(ids.end(), split.test.begin(), split.test.end());
  audit.record("evaluate", std::move(ids));
  return result;
}

// synth: generate a corpus with known ground truth and write it to the
// configured input locations, ready for the other stages to consume.
inline std::vector<PpgRecord> run_synth(const PipelineConfig& cfg) {
  if (cfg.metadata_csv.empty()) throw config_error("config: metadata_csv is required");
  if (cfg.signals_dir.empty()) throw config_error("config: signals_dir is required");
  SynthConfig synth_cfg = cfg.synth;
  synth_cfg.fs = cfg.fs;
  const std::vector<PpgRecord> records = generate(synth_cfg);

  std::filesystem::create_directories(cfg.signals_dir);
  std::vector<SubjectMeta> meta;
  meta.reserve(records.size());
  for (const PpgRecord& rec : records) {
    write_signal_csv(detail::signal_path(cfg, rec.subject_id), rec);
    meta.push_back({rec.subject_id, rec.age, rec.sex, rec.hb_ref});
  }
  write_metadata_csv(cfg.metadata_csv, meta);
  return records;
}

// pipeline: every stage in dependency order, with a fresh audit log.
inline AuditLog run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  AuditLog audit;
  run_quality(cfg, audit);
  run_features(cfg, audit);
  run_aggregate(cfg, audit);
  run_train(cfg, audit);
  run_predict(cfg, audit);
  run_explain(cfg, audit);
  run_screen(cfg, audit);
  run_evaluate(cfg, audit);
  audit.save(out_path(cfg, stage_files::audit));
  return audit;
}

}  // namespace ppghb
