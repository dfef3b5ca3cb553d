// fmx: facility publication metrics pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "fmx/config.hpp"
#include "fmx/errors.hpp"
#include "fmx/pipeline.hpp"

namespace {

int fail(int code, const char* kind, const std::exception& e) {
  std::cerr << "fmx: " << kind << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Novelty, interdisciplinarity and fixed-effects models for facility-supported publications"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_dir = "out";
  bool force = false;
  bool quiet = false;
  app.add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "extra key=value setting (repeatable)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed for the null model and synthetic data");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
  app.add_option("--out-dir", out_dir, "directory for stage outputs and manifest.json");
  app.add_flag("--force", force, "rerun stages even when the manifest says they are up to date");
  app.add_flag("-q,--quiet", quiet, "suppress progress lines");

  std::string works, facilities;
  auto add_inputs = [&](CLI::App* cmd, bool required) {
    auto* w = cmd->add_option("--works", works, "works JSONL")->check(CLI::ExistingFile);
    auto* f = cmd->add_option("--facilities", facilities, "facility publication list CSV")->check(CLI::ExistingFile);
    if (required) {
      w->required();
      f->required();
    }
  };
  auto* ingest = app.add_subcommand("ingest", "parse works, match facilities, select the sample");
  add_inputs(ingest, true);
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with planted effects");
  auto* novelty = app.add_subcommand("metrics-novelty", "journal co-citation novelty and new-term flags");
  auto* rs = app.add_subcommand("metrics-rs", "Rao-Stirling interdisciplinarity");
  auto* cov = app.add_subcommand("covariates", "regression rows and exclusion report");
  auto* main_fit = app.add_subcommand("fit-main", "main logit and linear models with margins");
  auto* hetero = app.add_subcommand("fit-hetero", "separate fits per decade and per domain");
  auto* robust = app.add_subcommand("fit-robustness", "alternative specifications");
  auto* describe = app.add_subcommand("describe", "per-year descriptive counts");
  auto* all = app.add_subcommand("all", "every stage in order");
  add_inputs(all, false);
  bool all_synth = false;
  all->add_flag("--synth", all_synth, "generate a synthetic corpus first and use it as input");

  CLI11_PARSE(app, argc, argv);

  try {
    fmx::PipelineOptions opts;
    if (!config_path.empty()) opts.config = fmx::Config::load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw fmx::InputError("--set expects key=value, got '" + kv + "'");
      opts.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed_opt->count()) opts.seed = seed;
    opts.threads = threads;
    opts.out_dir = out_dir;
    opts.force = force;
    opts.log = quiet ? nullptr : &std::cerr;
    if (all->parsed() && all_synth && !opts.config.get("covariates.core_journals")) {
      opts.config.set("covariates.core_journals", (std::filesystem::path(out_dir) / "core_journals.txt").string());
    }
    fmx::Pipeline pipeline(opts);

    if (ingest->parsed()) pipeline.ingest(works, facilities);
    if (synth->parsed()) pipeline.synth();
    if (novelty->parsed()) pipeline.metrics_novelty();
    if (rs->parsed()) pipeline.metrics_rs();
    if (cov->parsed()) pipeline.covariates();
    if (main_fit->parsed()) pipeline.fit_main();
    if (hetero->parsed()) pipeline.fit_hetero();
    if (robust->parsed()) pipeline.fit_robustness();
    if (describe->parsed()) pipeline.describe();
    if (all->parsed()) {
      if (all_synth) {
        pipeline.synth();
        works = pipeline.path("works.jsonl").string();
        facilities = pipeline.path("facilities.csv").string();
      } else if (works.empty() || facilities.empty()) {
        throw fmx::InputError("all: pass --works and --facilities, or --synth");
      }
      pipeline.all(works, facilities);
    }
  } catch (const fmx::StageMissingError& e) {
    return fail(4, "missing stage", e);
  } catch (const fmx::InputError& e) {
    return fail(2, "input error", e);
  } catch (const fmx::NumericalError& e) {
    return fail(3, "numerical failure", e);
  } catch (const std::exception& e) {
    return fail(1, "error", e);
  }
  return 0;
}
