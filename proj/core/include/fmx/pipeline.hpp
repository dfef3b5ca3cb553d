#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>

#include "fmx/config.hpp"
#include "fmx/synth.hpp"

namespace fmx {

/// Every key a run configuration may set.
const std::set<std::string>& known_config_keys();

/// SynthConfig from synth.* keys (defaults for absent keys).
SynthConfig synth_config_from(const Config& config);

struct PipelineOptions {
  std::filesystem::path out_dir = "out";
  Config config;
  std::optional<std::uint64_t> seed;  // overrides novelty.seed and synth.seed
  unsigned threads = 1;
  bool force = false;                 // rerun stages even when up to date
  std::ostream* log = nullptr;
};

/// Stage runner over one output directory. Each stage records its parameter
/// hash, input digests and output digests in manifest.json and is skipped
/// when all of them still match. Missing upstream outputs raise
/// StageMissingError naming the stage that produces them.
class Pipeline {
 public:
  explicit Pipeline(PipelineOptions options);

  void synth();  // works.jsonl, facilities.csv, truth.csv, core_journals.txt
  void ingest(const std::filesystem::path& works, const std::filesystem::path& facilities);
  void metrics_novelty();  // novelty.csv, term_novelty.csv
  void metrics_rs();       // raostirling.csv
  void covariates();       // rows.csv, exclusions.csv, covariates_report.json
  void describe();         // describe.csv
  void fit_main();         // fit_main_*.json, margins_main_*.csv, table2.csv
  void fit_hetero();       // hetero_decade.csv, hetero_domain.csv
  void fit_robustness();   // fit_robust_*.json, table3.csv

  /// Every stage in dependency order.
  void all(const std::filesystem::path& works, const std::filesystem::path& facilities);

  const std::filesystem::path& out_dir() const noexcept { return options_.out_dir; }
  std::filesystem::path path(const std::string& name) const { return options_.out_dir / name; }

 private:
  struct StageDef;
  void run_stage(const StageDef& stage);
  void log(const std::string& line) const;
  std::string params_hash(std::initializer_list<const char*> prefixes) const;

  PipelineOptions options_;
};

}  // namespace fmx
