// Integration tests that exercise the installed `ppghb` binary the way a
// user would: real process, real exit codes, real files.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ppghb/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ppghb;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ppghb_cli_" + std::to_string(
                               Catch::rngSeed() ^
                               static_cast<std::uint64_t>(
                                   std::chrono::steady_clock::now().time_since_epoch().count())));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const TempDir& tmp, const std::string& args) {
  const std::string cmd = "cd '" + tmp.path.string() + "' && '" + PPGHB_CLI_PATH + "' " + args +
                          " > cli_stdout.txt 2> cli_stderr.txt";
  const int rc = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  result.out = slurp(tmp.file("cli_stdout.txt"));
  result.err = slurp(tmp.file("cli_stderr.txt"));
  return result;
}

// Small corpus: 12 subjects, 2 segments each, noise free.
void write_smoke_config(const TempDir& tmp, std::uint64_t seed = 5) {
  PipelineConfig cfg;
  cfg.signals_dir = "signals";
  cfg.metadata_csv = "metadata.csv";
  cfg.out_dir = "out";
  cfg.seed = seed;
  cfg.synth.seed = seed;
  cfg.synth.n_subjects = 12;
  cfg.synth.duration_s = 12.5;
  cfg.synth.noise_sd = 0.0;
  cfg.synth.drift_amplitude = 0.0;
  cfg.gbm.n_trees = 25;
  save_config(tmp.file("cfg.json"), cfg);
}

bool single_line(const std::string& s) {
  return !s.empty() && s.back() == '\n' && std::count(s.begin(), s.end(), '\n') == 1;
}

}  // namespace

TEST_CASE("usage errors exit with the config-violation code") {
  TempDir tmp;

  SECTION("no subcommand") {
    const RunResult r = run_cli(tmp, "");
    REQUIRE(r.exit_code == 2);
    REQUIRE(single_line(r.err));
    REQUIRE(r.err.rfind("ppghb: usage error:", 0) == 0);
  }

  SECTION("unknown flag") {
    const RunResult r = run_cli(tmp, "train --bogus");
    REQUIRE(r.exit_code == 2);
    REQUIRE(single_line(r.err));
  }

  SECTION("--help succeeds") {
    const RunResult r = run_cli(tmp, "--help");
    REQUIRE(r.exit_code == 0);
    for (const char* sub : {"quality", "features", "aggregate", "train", "predict", "explain",
                            "screen", "evaluate", "synth", "pipeline"})
      REQUIRE(r.out.find(sub) != std::string::npos);
  }
}

TEST_CASE("stage-by-stage run produces every artifact and a clean audit") {
  TempDir tmp;
  write_smoke_config(tmp);

  REQUIRE(run_cli(tmp, "synth --config cfg.json").exit_code == 0);
  REQUIRE(fs::exists(tmp.file("metadata.csv")));

  for (const char* stage :
       {"quality", "features", "aggregate", "train", "predict", "explain", "screen", "evaluate"}) {
    const RunResult r = run_cli(tmp, std::string(stage) + " --config cfg.json");
    INFO(stage << " stderr: " << r.err);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.rfind(stage, 0) == 0);  // stdout begins with "<stage>:"
  }

  for (const char* name :
       {"quality.json", "features.csv", "dropped_columns.json", "subjects.csv", "split.json",
        "model.json", "train_trace.csv", "predictions.csv", "explanations.json",
        "importance_shap.csv", "importance_gain.csv", "screening.csv", "sensitivity.csv",
        "metrics.json", "scatter.csv", "bland_altman.csv", "audit.json"}) {
    INFO(name);
    REQUIRE(fs::exists(tmp.path / "out" / name));
  }

  SECTION("audit covers all stages and keeps training leakage-free") {
    const auto audit = read_audit_json(tmp.file("out/audit.json"));
    REQUIRE(audit.size() == 8);
    const SplitAssignment split = read_split_json(tmp.file("out/split.json"));
    const std::set<std::string> trained(audit.at("train").begin(), audit.at("train").end());
    REQUIRE(trained.size() == split.train.size());
    for (const std::string& id : split.test) REQUIRE_FALSE(trained.count(id));
  }

  SECTION("screening output has the documented header") {
    REQUIRE(slurp(tmp.file("out/screening.csv"))
                .rfind("subject_id,predicted_hb_g_l,sex,status\n", 0) == 0);
  }
}

TEST_CASE("pipeline twice with the same seed is byte-identical") {
  TempDir tmp;
  write_smoke_config(tmp);
  REQUIRE(run_cli(tmp, "synth --config cfg.json").exit_code == 0);
  REQUIRE(run_cli(tmp, "pipeline --config cfg.json").exit_code == 0);
  REQUIRE(run_cli(tmp, "pipeline --config cfg.json --out-dir out2").exit_code == 0);
  REQUIRE(slurp(tmp.file("out/metrics.json")) == slurp(tmp.file("out2/metrics.json")));
  REQUIRE(slurp(tmp.file("out/model.json")) == slurp(tmp.file("out2/model.json")));
}

TEST_CASE("--seed overrides the configured seed") {
  TempDir tmp;
  write_smoke_config(tmp, 5);
  REQUIRE(run_cli(tmp, "synth --config cfg.json").exit_code == 0);
  for (const char* stage : {"quality", "features", "aggregate"})
    REQUIRE(run_cli(tmp, std::string(stage) + " --config cfg.json").exit_code == 0);
  REQUIRE(run_cli(tmp, "train --config cfg.json --seed 123").exit_code == 0);
  REQUIRE(read_split_json(tmp.file("out/split.json")).seed == 123);
}

TEST_CASE("explain --feature selects the dependence column") {
  TempDir tmp;
  write_smoke_config(tmp);
  REQUIRE(run_cli(tmp, "synth --config cfg.json").exit_code == 0);
  for (const char* stage : {"features", "aggregate", "train"})
    REQUIRE(run_cli(tmp, std::string(stage) + " --config cfg.json").exit_code == 0);

  REQUIRE(run_cli(tmp, "explain --config cfg.json --feature age").exit_code == 0);
  REQUIRE(fs::exists(tmp.file("out/dependence_age.csv")));

  const RunResult bad = run_cli(tmp, "explain --config cfg.json --feature nonesuch");
  REQUIRE(bad.exit_code == 2);
  REQUIRE(single_line(bad.err));
  REQUIRE(bad.err.find("unknown feature") != std::string::npos);
}

TEST_CASE("error taxonomy maps to distinct exit codes") {
  TempDir tmp;
  write_smoke_config(tmp);

  SECTION("missing input file -> 3") {
    const RunResult r = run_cli(tmp, "train --config cfg.json");
    REQUIRE(r.exit_code == 3);
    REQUIRE(single_line(r.err));
    REQUIRE(r.err.find("ppghb: io error:") != std::string::npos);
    REQUIRE(r.err.find("missing input") != std::string::npos);
  }

  SECTION("malformed CSV header -> 4") {
    fs::create_directories(tmp.file("signals"));
    std::ofstream(tmp.file("metadata.csv")) << "id,years,gender,hb\nx,30,M,120\n";
    const RunResult r = run_cli(tmp, "features --config cfg.json");
    REQUIRE(r.exit_code == 4);
    REQUIRE(single_line(r.err));
    REQUIRE(r.err.find("malformed header") != std::string::npos);
  }

  SECTION("config violation -> 2") {
    std::ofstream(tmp.file("bad.json"))
        << "{\"version\": \"ppghb-config-1\", \"split\": {\"test_fraction\": 2.0}}";
    const RunResult r = run_cli(tmp, "train --config bad.json");
    REQUIRE(r.exit_code == 2);
    REQUIRE(single_line(r.err));
    REQUIRE(r.err.rfind("ppghb: config error:", 0) == 0);
  }

  SECTION("missing config file -> 3") {
    REQUIRE(run_cli(tmp, "train --config nonesuch.json").exit_code == 3);
  }

  SECTION("unparseable config -> 4") {
    std::ofstream(tmp.file("broken.json")) << "{";
    REQUIRE(run_cli(tmp, "train --config broken.json").exit_code == 4);
  }
}
