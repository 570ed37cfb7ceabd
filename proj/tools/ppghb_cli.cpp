// ppghb: batch CLI for hemoglobin estimation from four-wavelength PPG.
//
// Every subcommand reads one JSON config (see `ppghb config --print` for the
// schema with defaults) and writes its artifacts into the configured output
// directory. Exit codes: 0 success, 2 config violation, 3 missing input,
// 4 malformed file content, 1 anything else. Errors are single-line and
// prefixed with "ppghb:".

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ppghb/pipeline.hpp"

namespace {

constexpr int exit_other = 1;
constexpr int exit_config = 2;
constexpr int exit_io = 3;
constexpr int exit_format = 4;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config_path, "pipeline config JSON file");
  sub->add_option("--seed", flags.seed, "override the split/model/synth seed");
  sub->add_option("--out-dir", flags.out_dir, "override the output directory");
}

ppghb::PipelineConfig resolve_config(const CommonFlags& flags) {
  ppghb::PipelineConfig cfg;
  if (!flags.config_path.empty()) cfg = ppghb::load_config(flags.config_path);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.synth.seed = *flags.seed;
  }
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  ppghb::validate_config(cfg);
  return cfg;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hemoglobin estimation and anemia screening from four-wavelength PPG"};
  app.set_version_flag("--version", "ppghb 1.0.0");
  app.require_subcommand(1);

  CommonFlags flags;
  std::string explain_feature;
  bool print_config = false;

  CLI::App* quality =
      app.add_subcommand("quality", "Per-segment SQI/SNR before and after filtering");
  CLI::App* features =
      app.add_subcommand("features", "Extract and clean the segment feature table");
  CLI::App* aggregate =
      app.add_subcommand("aggregate", "Collapse segments to one row per subject");
  CLI::App* train = app.add_subcommand("train", "Split subjects and fit the boosted ensemble");
  CLI::App* predict = app.add_subcommand("predict", "Predict hemoglobin for every subject");
  CLI::App* explain =
      app.add_subcommand("explain", "Exact SHAP attributions and importance summaries");
  CLI::App* screen = app.add_subcommand("screen", "WHO anemia screening on predictions");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Metrics, scatter data, and Bland-Altman agreement");
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus with ground truth");
  CLI::App* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  CLI::App* config_cmd = app.add_subcommand("config", "Inspect the effective configuration");

  for (CLI::App* sub : {quality, features, aggregate, train, predict, explain, screen, evaluate,
                        synth, pipeline, config_cmd})
    add_common(sub, flags);
  explain->add_option("--feature", explain_feature,
                      "emit dependence data for this feature instead of the top one");
  config_cmd->add_flag("--print", print_config, "print the effective config JSON and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ppghb: usage error: " << one_line(e.what()) << '\n';
    return exit_config;
  }

  try {
    const ppghb::PipelineConfig cfg = resolve_config(flags);

    if (config_cmd->parsed()) {
      if (print_config) std::cout << ppghb::config_to_json(cfg).dump(2) << '\n';
      return 0;
    }
    if (synth->parsed()) {
      const auto records = ppghb::run_synth(cfg);
      std::cout << "synth: " << records.size() << " subjects -> " << cfg.signals_dir << '\n';
      return 0;
    }
    if (pipeline->parsed()) {
      ppghb::run_pipeline(cfg);
      std::cout << "pipeline: all stages complete -> " << cfg.out_dir << '\n';
      return 0;
    }

    const std::string audit_path = ppghb::out_path(cfg, ppghb::stage_files::audit);
    ppghb::AuditLog audit = ppghb::AuditLog::load_or_empty(audit_path);

    if (quality->parsed()) {
      const auto rows = ppghb::run_quality(cfg, audit);
      std::cout << "quality: " << rows.size() << " readings -> "
                << ppghb::out_path(cfg, ppghb::stage_files::quality) << '\n';
    } else if (features->parsed()) {
      const auto cleaned = ppghb::run_features(cfg, audit);
      std::cout << "features: " << cleaned.table.rows.size() << " segment rows, "
                << cleaned.dropped.size() << " dropped columns\n";
    } else if (aggregate->parsed()) {
      const auto result = ppghb::run_aggregate(cfg, audit);
      for (const std::string& w : result.warnings) std::cerr << "ppghb: warning: " << w << '\n';
      std::cout << "aggregate: " << result.table.rows.size() << " subjects\n";
    } else if (train->parsed()) {
      const auto result = ppghb::run_train(cfg, audit);
      std::cout << "train: " << result.split.train.size() << " train / "
                << result.split.test.size() << " test subjects, trees="
                << result.train.model.trees.size()
                << ", train_rmse=" << result.train.train_rmse.back() << " g/L\n";
    } else if (predict->parsed()) {
      const auto rows = ppghb::run_predict(cfg, audit);
      std::cout << "predict: " << rows.size() << " predictions\n";
    } else if (explain->parsed()) {
      const auto result = ppghb::run_explain(cfg, audit, explain_feature);
      std::cout << "explain: " << result.explanations.size() << " subjects";
      if (!result.dependence_feature.empty())
        std::cout << ", dependence on " << result.dependence_feature;
      std::cout << '\n';
    } else if (screen->parsed()) {
      const auto result = ppghb::run_screen(cfg, audit);
      std::size_t anemic = 0;
      for (const auto& r : result.results)
        if (r.status != ppghb::AnemiaStatus::non_anemic) ++anemic;
      std::cout << "screen: " << anemic << " of " << result.results.size()
                << " subjects flagged anemic\n";
    } else if (evaluate->parsed()) {
      const auto result = ppghb::run_evaluate(cfg, audit);
      std::cout << "evaluate: test rmse=" << result.test.rmse << " mae=" << result.test.mae;
      if (result.test.r2) std::cout << " r2=" << *result.test.r2;
      std::cout << " (n=" << result.test.n << ")\n";
    }

    audit.save(audit_path);
    return 0;
  } catch (const ppghb::config_error& e) {
    std::cerr << "ppghb: config error: " << one_line(e.what()) << '\n';
    return exit_config;
  } catch (const ppghb::io_error& e) {
    std::cerr << "ppghb: io error: " << one_line(e.what()) << '\n';
    return exit_io;
  } catch (const ppghb::format_error& e) {
    std::cerr << "ppghb: format error: " << one_line(e.what()) << '\n';
    return exit_format;
  } catch (const std::exception& e) {
    std::cerr << "ppghb: error: " << one_line(e.what()) << '\n';
    return exit_other;
  }
}
