#include "fmx/pipeline.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "fmx/columnar_cache.hpp"
#include "fmx/corpus_store.hpp"
#include "fmx/covariates.hpp"
#include "fmx/csv.hpp"
#include "fmx/digest.hpp"
#include "fmx/diversity.hpp"
#include "fmx/errors.hpp"
#include "fmx/hdfe.hpp"
#include "fmx/margins.hpp"
#include "fmx/novelty.hpp"
#include "fmx/report.hpp"
#include "json.hpp"

#ifndef FMX_VERSION
#define FMX_VERSION "dev"
#endif

namespace fmx {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "ingest.max_error_rate",        "ingest.require_article",      "ingest.require_english",
      "novelty.runs",                 "novelty.seed",                "novelty.percentile_rule",
      "novelty.pair_multiplicity",    "diversity.min_links",         "diversity.summation",
      "diversity.attribution",        "diversity.basis",             "covariates.north_south",
      "covariates.core_journals",     "covariates.field_domains",    "covariates.journal_h",
      "covariates.institution_h",     "covariates.outcomes_file",    "hdfe.se_type",
      "hdfe.tol",                     "hdfe.max_iter",               "synth.seed",
      "synth.n_authors",              "synth.n_years",               "synth.start_year",
      "synth.n_journals",             "synth.n_subfields",           "synth.n_papers",
      "synth.bsf_share",              "synth.planted_logit_effect",  "synth.planted_rs_effect",
      "synth.author_effect_sd",       "synth.year_effect_sd",        "synth.field_effect_sd",
      "synth.n_facilities",           "synth.co_utilization",        "synth.min_refs",
      "synth.max_refs",               "synth.max_coauthors"};
  return keys;
}

SynthConfig synth_config_from(const Config& c) {
  SynthConfig s;
  s.seed = static_cast<std::uint64_t>(c.get_int("synth.seed", static_cast<long long>(s.seed)));
  s.n_authors = static_cast<int>(c.get_int("synth.n_authors", s.n_authors));
  s.n_years = static_cast<int>(c.get_int("synth.n_years", s.n_years));
  s.start_year = static_cast<int>(c.get_int("synth.start_year", s.start_year));
  s.n_journals = static_cast<int>(c.get_int("synth.n_journals", s.n_journals));
  s.n_subfields = static_cast<int>(c.get_int("synth.n_subfields", s.n_subfields));
  s.n_papers = static_cast<int>(c.get_int("synth.n_papers", s.n_papers));
  s.bsf_share = c.get_double("synth.bsf_share", s.bsf_share);
  s.planted_logit_effect = c.get_double("synth.planted_logit_effect", s.planted_logit_effect);
  s.planted_rs_effect = c.get_double("synth.planted_rs_effect", s.planted_rs_effect);
  s.author_effect_sd = c.get_double("synth.author_effect_sd", s.author_effect_sd);
  s.year_effect_sd = c.get_double("synth.year_effect_sd", s.year_effect_sd);
  s.field_effect_sd = c.get_double("synth.field_effect_sd", s.field_effect_sd);
  s.n_facilities = static_cast<int>(c.get_int("synth.n_facilities", s.n_facilities));
  s.co_utilization = c.get_double("synth.co_utilization", s.co_utilization);
  s.min_refs = static_cast<int>(c.get_int("synth.min_refs", s.min_refs));
  s.max_refs = static_cast<int>(c.get_int("synth.max_refs", s.max_refs));
  s.max_coauthors = static_cast<int>(c.get_int("synth.max_coauthors", s.max_coauthors));
  return s;
}

// ---------------------------------------------------------------------------

struct Pipeline::StageDef {
  std::string name;
  std::vector<std::pair<fs::path, std::string>> inputs;  // (file, producing stage)
  std::string params;
  std::function<std::vector<std::string>()> body;       // returns output file names
};

namespace {

const char* const kManifest = "manifest.json";

ordered_json load_manifest(const fs::path& path) {
  if (!fs::exists(path)) return ordered_json::object();
  std::ifstream in(path);
  try {
    return ordered_json::parse(in);
  } catch (const std::exception&) {
    return ordered_json::object();
  }
}

void write_text(const fs::path& path, const std::function<void(std::ostream&)>& fill) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write " + tmp.string());
    fill(out);
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

PercentileRule parse_rule(const std::string& s) {
  if (s == "nearest_rank") return PercentileRule::nearest_rank;
  if (s == "linear") return PercentileRule::linear;
  throw InputError(fmt::format("novelty.percentile_rule must be nearest_rank or linear, got '{}'", s));
}

}  // namespace

Pipeline::Pipeline(PipelineOptions options) : options_(std::move(options)) {
  for (const auto& [key, value] : options_.config.entries()) {
    if (!known_config_keys().contains(key)) throw InputError(fmt::format("unknown config key '{}'", key));
  }
  if (options_.seed) {
    options_.config.set("novelty.seed", std::to_string(*options_.seed));
    options_.config.set("synth.seed", std::to_string(*options_.seed));
  }
  if (options_.threads == 0) options_.threads = 1;
  fs::create_directories(options_.out_dir);
}

void Pipeline::log(const std::string& line) const {
  if (options_.log) *options_.log << line << '\n';
}

std::string Pipeline::params_hash(std::initializer_list<const char*> prefixes) const {
  std::string text = std::string("version=") + FMX_VERSION + "\n";
  for (const auto& [key, value] : options_.config.entries()) {
    for (const char* p : prefixes) {
      if (key.starts_with(p)) {
        text += key + "=" + value + "\n";
        break;
      }
    }
  }
  return sha256_hex(text);
}

void Pipeline::run_stage(const StageDef& stage) {
  std::map<std::string, std::string> input_digests;
  for (const auto& [file, producer] : stage.inputs) {
    if (!fs::exists(file)) {
      throw StageMissingError(producer, fmt::format("{}: missing {} (run the '{}' stage first)", stage.name,
                                                    file.filename().string(), producer));
    }
    input_digests[file.filename().string()] = sha256_file(file);
  }

  const fs::path manifest_path = path(kManifest);
  ordered_json manifest = load_manifest(manifest_path);
  if (!options_.force && manifest.contains("stages") && manifest["stages"].contains(stage.name)) {
    const auto& prev = manifest["stages"][stage.name];
    bool fresh = prev.value("params", "") == stage.params &&
                 prev.value("inputs", ordered_json::object()) == ordered_json(input_digests);
    if (fresh) {
      const ordered_json outputs = prev.value("outputs", ordered_json::object());
      for (const auto& [file, digest] : outputs.items()) {
        if (!fs::exists(path(file)) || sha256_file(path(file)) != digest.get<std::string>()) {
          fresh = false;
          break;
        }
      }
    }
    if (fresh) {
      log(fmt::format("{}: up to date", stage.name));
      return;
    }
  }

  const auto start = std::chrono::steady_clock::now();
  const auto outputs = stage.body();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  ordered_json entry;
  entry["params"] = stage.params;
  entry["inputs"] = input_digests;
  std::map<std::string, std::string> output_digests;
  for (const auto& file : outputs) output_digests[file] = sha256_file(path(file));
  entry["outputs"] = output_digests;
  entry["seconds"] = seconds;

  manifest = load_manifest(manifest_path);
  manifest["software_version"] = FMX_VERSION;
  manifest["config_hash"] = sha256_hex(options_.config.canonical());
  manifest["seed"] = options_.config.get_string("novelty.seed", "20250101");
  if (!manifest.contains("stages")) manifest["stages"] = ordered_json::object();
  manifest["stages"][stage.name] = std::move(entry);
  // Keep stage entries in a stable order regardless of execution history.
  ordered_json sorted = ordered_json::object();
  std::map<std::string, ordered_json> by_name;
  for (const auto& [name, value] : manifest["stages"].items()) by_name[name] = value;
  for (auto& [name, value] : by_name) sorted[name] = value;
  manifest["stages"] = std::move(sorted);
  write_text(manifest_path, [&](std::ostream& out) { out << manifest.dump(2) << '\n'; });
  log(fmt::format("{}: done in {:.2f}s", stage.name, seconds));
}

// ---------------------------------------------------------------------------
// Stages

void Pipeline::synth() {
  run_stage({"synth", {}, params_hash({"synth."}), [this] {
               const SynthCorpus s = gen_corpus(synth_config_from(options_.config));
               write_text(path("works.jsonl"), [&](std::ostream& o) { write_works_jsonl(o, s.works); });
               write_text(path("facilities.csv"), [&](std::ostream& o) { write_facility_csv(o, s.facilities); });
               write_text(path("truth.csv"), [&](std::ostream& o) { write_truth_csv(o, s); });
               write_text(path("core_journals.txt"), [&](std::ostream& o) { write_core_journals(o, s); });
               log(fmt::format("synth: {} works, {} facility entries", s.works.size(), s.facilities.size()));
               return std::vector<std::string>{"works.jsonl", "facilities.csv", "truth.csv", "core_journals.txt"};
             }});
}

void Pipeline::ingest(const fs::path& works, const fs::path& facilities) {
  run_stage({"ingest", {{works, "input"}, {facilities, "input"}}, params_hash({"ingest."}), [=, this] {
               IngestOptions opts;
               opts.max_error_rate = options_.config.get_double("ingest.max_error_rate", opts.max_error_rate);
               opts.require_article = options_.config.get_bool("ingest.require_article", true);
               opts.require_english = options_.config.get_bool("ingest.require_english", true);
               opts.threads = options_.threads;
               IngestResult result = ingest_file(works, opts);
               const MatchReport match = match_facilities(result.corpus, read_facility_csv(facilities));
               SampleSelection sample = expand_by_last_author(result.corpus);
               CorpusManifest manifest = make_manifest(result.corpus, sample, result.manifest.source_digest);
               save_corpus(path("corpus.fmx"), {std::move(result.corpus), std::move(sample), manifest});

               const auto& r = result.report;
               ordered_json j;
               j["source_digest"] = manifest.source_digest;
               j["n_lines"] = r.n_lines;
               j["n_parse_errors"] = r.n_parse_errors;
               j["n_excluded_doc_type"] = r.n_excluded_doc_type;
               j["n_excluded_language"] = r.n_excluded_language;
               j["n_duplicates"] = r.n_duplicates;
               j["n_bad_doi"] = r.n_bad_doi;
               j["n_dropped_refs"] = r.n_dropped_refs;
               j["error_samples"] = r.error_samples;
               j["n_works"] = manifest.n_works;
               j["n_sample_works"] = manifest.n_sample_works;
               j["n_bsf_works"] = manifest.n_bsf_works;
               j["n_last_authors"] = manifest.n_last_authors;
               j["year_min"] = manifest.year_min;
               j["year_max"] = manifest.year_max;
               j["facility_entries"] = match.n_entries;
               j["facility_entries_matched"] = match.n_matched_entries;
               j["facility_entries_unmatched"] = match.unmatched.size();
               write_text(path("ingest_report.json"), [&](std::ostream& o) { o << j.dump(2) << '\n'; });
               log(fmt::format("ingest: {} works, {} in sample, {} BSF; {} facility entries unmatched",
                               manifest.n_works, manifest.n_sample_works, manifest.n_bsf_works,
                               match.unmatched.size()));
               return std::vector<std::string>{"corpus.fmx", "ingest_report.json"};
             }});
}

void Pipeline::metrics_novelty() {
  run_stage({"metrics-novelty", {{path("corpus.fmx"), "ingest"}}, params_hash({"novelty."}), [this] {
               const StoredCorpus stored = load_corpus(path("corpus.fmx"));
               NoveltyOptions opts;
               opts.runs = static_cast<int>(options_.config.get_int("novelty.runs", opts.runs));
               opts.seed = static_cast<std::uint64_t>(
                   options_.config.get_int("novelty.seed", static_cast<long long>(opts.seed)));
               opts.percentile_rule = parse_rule(options_.config.get_string("novelty.percentile_rule", "nearest_rank"));
               opts.pair_multiplicity = options_.config.get_bool("novelty.pair_multiplicity", false);
               opts.threads = options_.threads;
               const NoveltyRun run = compute_novelty(stored.corpus, opts);
               write_text(path("novelty.csv"), [&](std::ostream& o) {
                 CsvWriter w(o);
                 w.row({"work_id", "year", "n_pairs", "ns", "is_novel"});
                 for (const auto& r : run.results) {
                   w.row({r.work_id, std::to_string(r.year), std::to_string(r.n_pairs), format_double(r.ns),
                          r.is_novel ? "1" : "0"});
                 }
               });
               const auto terms = detect_new_terms(stored.corpus);
               write_text(path("term_novelty.csv"), [&](std::ostream& o) {
                 CsvWriter w(o);
                 w.row({"work_id", "new_word", "new_phrase"});
                 for (const auto& t : terms) w.row({t.work_id, t.new_word ? "1" : "0", t.new_phrase ? "1" : "0"});
               });
               log(fmt::format("metrics-novelty: {} scored, {} without pairs, {} with only undefined pairs",
                               run.results.size(), run.n_without_pairs, run.n_all_undefined));
               return std::vector<std::string>{"novelty.csv", "term_novelty.csv"};
             }});
}

void Pipeline::metrics_rs() {
  run_stage({"metrics-rs", {{path("corpus.fmx"), "ingest"}}, params_hash({"diversity."}), [this] {
               const StoredCorpus stored = load_corpus(path("corpus.fmx"));
               const auto& c = options_.config;
               DiversityOptions opts;
               opts.min_links = c.get_int("diversity.min_links", opts.min_links);
               const auto summation = c.get_string("diversity.summation", "ordered");
               if (summation != "ordered" && summation != "unordered") {
                 throw InputError("diversity.summation must be ordered or unordered");
               }
               opts.summation = summation == "ordered" ? PairSummation::ordered : PairSummation::unordered;
               const auto attribution = c.get_string("diversity.attribution", "primary");
               if (attribution != "primary" && attribution != "fractional") {
                 throw InputError("diversity.attribution must be primary or fractional");
               }
               opts.attribution = attribution == "primary" ? Attribution::primary : Attribution::fractional;
               const auto basis = c.get_string("diversity.basis", "citing");
               if (basis != "citing" && basis != "cocitation") {
                 throw InputError("diversity.basis must be citing or cocitation");
               }
               opts.basis = basis == "citing" ? DistanceBasis::citing : DistanceBasis::cocitation;
               opts.threads = options_.threads;
               const DiversityRun run = compute_rao_stirling(stored.corpus, opts);
               write_text(path("raostirling.csv"), [&](std::ostream& o) {
                 CsvWriter w(o);
                 w.row({"work_id", "year", "n_fields", "score", "pooled_window"});
                 for (const auto& r : run.results) {
                   w.row({r.work_id, std::to_string(r.year), std::to_string(r.n_fields), format_double(r.score),
                          r.pooled_window ? "1" : "0"});
                 }
               });
               log(fmt::format("metrics-rs: {} scored, {} unresolvable, {} subfields", run.results.size(),
                               run.n_unresolvable, run.n_subfields));
               return std::vector<std::string>{"raostirling.csv"};
             }});
}

namespace {

CovariateMaps maps_from(const Config& c) {
  CovariateMaps maps;
  if (auto p = c.get("covariates.north_south")) maps.north_south = load_north_south(*p);
  if (auto p = c.get("covariates.core_journals")) maps.core_journals = load_core_journals(*p);
  if (auto p = c.get("covariates.field_domains")) maps.field_domains = load_field_domains(*p);
  if (auto p = c.get("covariates.journal_h")) maps.journal_h = load_h_index_table(*p);
  if (auto p = c.get("covariates.institution_h")) maps.institution_h = load_h_index_table(*p);
  return maps;
}

}  // namespace

void Pipeline::covariates() {
  std::vector<std::pair<fs::path, std::string>> inputs = {{path("corpus.fmx"), "ingest"},
                                                          {path("novelty.csv"), "metrics-novelty"},
                                                          {path("term_novelty.csv"), "metrics-novelty"},
                                                          {path("raostirling.csv"), "metrics-rs"}};
  for (const char* key : {"covariates.north_south", "covariates.core_journals", "covariates.field_domains",
                          "covariates.journal_h", "covariates.institution_h", "covariates.outcomes_file"}) {
    if (auto p = options_.config.get(key)) inputs.emplace_back(*p, "input");
  }
  run_stage({"covariates", inputs, params_hash({"covariates."}), [this] {
               const StoredCorpus stored = load_corpus(path("corpus.fmx"));
               MetricTables metrics;
               {
                 const auto t = read_csv(path("novelty.csv"));
                 const auto id = t.column("work_id"), nov = t.column("is_novel");
                 for (const auto& r : t.rows) metrics.novelty[r[id]] = parse_bool(r[nov]);
               }
               {
                 const auto t = read_csv(path("raostirling.csv"));
                 const auto id = t.column("work_id"), score = t.column("score");
                 for (const auto& r : t.rows) metrics.rao_stirling[r[id]] = parse_double(r[score]);
               }
               {
                 const auto t = read_csv(path("term_novelty.csv"));
                 const auto id = t.column("work_id"), word = t.column("new_word"), phrase = t.column("new_phrase");
                 for (const auto& r : t.rows) {
                   metrics.terms[r[id]] = {r[id], parse_bool(r[word]), parse_bool(r[phrase])};
                 }
               }
               if (auto p = options_.config.get("covariates.outcomes_file")) metrics.overrides = read_outcome_overrides(*p);
               const CovariateMaps maps = maps_from(options_.config);
               const CovariateBuild build = build_rows(stored.corpus, stored.sample.indices, metrics, maps);
               write_text(path("rows.csv"), [&](std::ostream& o) { write_rows_csv(o, build.rows); });
               write_text(path("exclusions.csv"), [&](std::ostream& o) {
                 CsvWriter w(o);
                 w.row({"work_id", "cause"});
                 for (const auto& [id, cause] : build.exclusions.rows) w.row({id, cause});
               });
               ordered_json j;
               j["n_sample"] = stored.sample.indices.size();
               j["n_rows"] = build.rows.size();
               j["n_excluded"] = build.exclusions.rows.size();
               j["excluded_by_cause"] = build.exclusions.by_cause;
               j["n_authorships_without_first_year"] = build.exclusions.n_authors_without_first_year;
               j["n_outcome_overrides"] = metrics.overrides.size();
               write_text(path("covariates_report.json"), [&](std::ostream& o) { o << j.dump(2) << '\n'; });
               log(fmt::format("covariates: {} rows, {} excluded", build.rows.size(), build.exclusions.rows.size()));
               return std::vector<std::string>{"rows.csv", "exclusions.csv", "covariates_report.json"};
             }});
}

void Pipeline::describe() {
  std::vector<std::pair<fs::path, std::string>> inputs = {{path("corpus.fmx"), "ingest"}};
  if (auto p = options_.config.get("covariates.field_domains")) inputs.emplace_back(*p, "input");
  run_stage({"describe", inputs, params_hash({"covariates.field_domains"}), [this] {
               const StoredCorpus stored = load_corpus(path("corpus.fmx"));
               const FieldDomainMap domains = maps_from(options_.config).field_domains;
               struct Year {
                 std::size_t works = 0, bsf = 0;
                 std::set<std::string> authors, institutions, countries, facilities;
                 std::map<Domain, std::set<SubfieldId>> subfields;
               };
               std::map<int, Year> years;
               for (const auto& w : stored.corpus.works()) {
                 auto& y = years[w.year];
                 ++y.works;
                 if (!w.is_bsf()) continue;
                 ++y.bsf;
                 for (const auto& a : w.authorships) {
                   y.authors.insert(a.author_id);
                   y.institutions.insert(a.institution_ids.begin(), a.institution_ids.end());
                   if (!a.country_code.empty()) y.countries.insert(a.country_code);
                 }
                 y.facilities.insert(w.facility_ids.begin(), w.facility_ids.end());
                 for (const auto& s : w.subfield_shares) {
                   if (auto d = domains.find(field_of(s.subfield)); d != domains.end()) {
                     y.subfields[d->second].insert(s.subfield);
                   }
                 }
               }
               write_text(path("describe.csv"), [&](std::ostream& o) {
                 CsvWriter w(o);
                 w.row({"year", "n_works", "n_bsf", "bsf_share", "n_authors", "n_institutions", "n_countries",
                        "n_facilities_active", "subfields_physical", "subfields_life", "subfields_health",
                        "subfields_social"});
                 for (auto& [year, y] : years) {
                   std::vector<std::string> row = {
                       std::to_string(year),
                       std::to_string(y.works),
                       std::to_string(y.bsf),
                       format_double(static_cast<double>(y.bsf) / static_cast<double>(y.works)),
                       std::to_string(y.authors.size()),
                       std::to_string(y.institutions.size()),
                       std::to_string(y.countries.size()),
                       std::to_string(y.facilities.size())};
                   for (auto d : kAllDomains) row.push_back(std::to_string(y.subfields[d].size()));
                   w.row(row);
                 }
               });
               return std::vector<std::string>{"describe.csv"};
             }});
}

namespace {

FitOptions fit_options(const Config& c, unsigned threads) {
  FitOptions o;
  o.absorb.tol = c.get_double("hdfe.tol", o.absorb.tol);
  o.absorb.max_iter = static_cast<int>(c.get_int("hdfe.max_iter", o.absorb.max_iter));
  o.absorb.threads = threads;
  return o;
}

ModelSpec model(std::string name, std::string outcome, Family family, SeType se) {
  ModelSpec s;
  s.name = std::move(name);
  s.outcome = std::move(outcome);
  s.family = family;
  s.se_type = se;
  return s;
}

const double kBsfLevels[] = {0.0, 1.0};

}  // namespace

void Pipeline::fit_main() {
  run_stage({"fit-main", {{path("rows.csv"), "covariates"}}, params_hash({"hdfe."}), [this] {
               const auto rows = read_rows_csv(path("rows.csv"));
               const SeType se = parse_se_type(options_.config.get_string("hdfe.se_type", "classical"));
               const FitOptions opts = fit_options(options_.config, options_.threads);
               std::vector<std::string> outputs;
               std::vector<FitResult> fits;
               for (auto spec : {model("main_novelty", "novelty_dv", Family::logit, se),
                                 model("main_rs", "rs_dv", Family::linear, se)}) {
                 fits.push_back(fit_model(spec, rows, opts));
                 const FitResult& fit = fits.back();
                 write_text(path("fit_" + spec.name + ".json"), [&](std::ostream& o) { write_fit_json(o, fit); });
                 const auto margins = predict_margins(fit, spec.regressor, kBsfLevels);
                 write_text(path("margins_" + spec.name + ".csv"), [&](std::ostream& o) { write_margins_csv(o, margins); });
                 outputs.push_back("fit_" + spec.name + ".json");
                 outputs.push_back("margins_" + spec.name + ".csv");
                 log(fmt::format("fit-main: {} beta_bsf={:.4g} (se {:.3g}), n={}", spec.name, fit.beta[0],
                                 fit.coefficients[0].std_error, fit.n_obs_used));
               }
               const std::vector<std::pair<std::string, const FitResult*>> table = {
                   {"(1) novelty", &fits[0]}, {"(2) rao_stirling", &fits[1]}};
               write_text(path("table2.csv"), [&](std::ostream& o) { write_regression_table(o, table); });
               outputs.push_back("table2.csv");
               return outputs;
             }});
}

void Pipeline::fit_hetero() {
  run_stage({"fit-hetero", {{path("rows.csv"), "covariates"}}, params_hash({"hdfe."}), [this] {
               const auto rows = read_rows_csv(path("rows.csv"));
               const SeType se = parse_se_type(options_.config.get_string("hdfe.se_type", "classical"));
               const FitOptions opts = fit_options(options_.config, options_.threads);

               auto run_groups = [&](const std::string& file, const std::string& group_type,
                                     const std::vector<std::string>& groups,
                                     const std::function<std::string(const CovariateRow&)>& group_of) {
                 write_text(path(file), [&](std::ostream& o) {
                   CsvWriter w(o);
                   w.comment(kStarsLegend);
                   w.row({"outcome", group_type, "n_rows", "n_obs_used", "level", "avg_prediction", "ci_low",
                          "ci_high", "beta_bsf", "se_bsf", "p_bsf", "status"});
                   for (auto base : {model("novelty", "novelty_dv", Family::logit, se),
                                     model("rao_stirling", "rs_dv", Family::linear, se)}) {
                     for (const auto& g : groups) {
                       std::vector<CovariateRow> subset;
                       for (const auto& r : rows) {
                         const bool has_outcome = base.outcome == "novelty_dv" ? r.novelty_dv.has_value()
                                                                                : r.rs_dv.has_value();
                         if (has_outcome && group_of(r) == g) subset.push_back(r);
                       }
                       const std::string n_rows = std::to_string(subset.size());
                       auto failed = [&](const std::string& status) {
                         w.row({base.name, g, n_rows, "0", "", "", "", "", "", "", "", status});
                       };
                       if (subset.empty()) {
                         failed("empty");
                         continue;
                       }
                       ModelSpec spec = base;
                       spec.name = base.name + "_" + g;
                       try {
                         const FitResult fit = fit_model(spec, subset, opts);
                         const auto margins = predict_margins(fit, spec.regressor, kBsfLevels);
                         const auto& c = fit.coefficients[0];
                         for (const auto& m : margins) {
                           w.row({base.name, g, n_rows, std::to_string(fit.n_obs_used), format_double(m.level),
                                  format_double(m.avg_prediction), format_double(m.ci_low), format_double(m.ci_high),
                                  format_double(c.estimate), format_double(c.std_error), format_double(c.p_value),
                                  "ok"});
                         }
                       } catch (const NumericalError& e) {
                         failed(std::string("failed: ") + e.what());
                       } catch (const InputError& e) {
                         failed(std::string("failed: ") + e.what());
                       }
                     }
                   }
                 });
               };

               std::set<int> decades;
               for (const auto& r : rows) decades.insert(r.fe_year / 10 * 10);
               std::vector<std::string> decade_labels;
               for (int d : decades) decade_labels.push_back(std::to_string(d));
               run_groups("hetero_decade.csv", "decade", decade_labels,
                          [](const CovariateRow& r) { return std::to_string(r.fe_year / 10 * 10); });
               std::vector<std::string> domain_labels;
               for (auto d : kAllDomains) domain_labels.emplace_back(to_string(d));
               run_groups("hetero_domain.csv", "domain", domain_labels,
                          [](const CovariateRow& r) { return std::string(to_string(r.domain)); });
               return std::vector<std::string>{"hetero_decade.csv", "hetero_domain.csv"};
             }});
}

void Pipeline::fit_robustness() {
  run_stage({"fit-robustness", {{path("rows.csv"), "covariates"}}, params_hash({"hdfe."}), [this] {
               const auto rows = read_rows_csv(path("rows.csv"));
               const SeType se = parse_se_type(options_.config.get_string("hdfe.se_type", "classical"));
               const FitOptions opts = fit_options(options_.config, options_.threads);
               const std::vector<FeDim> no_author = {FeDim::year, FeDim::discipline};

               std::vector<ModelSpec> specs = {
                   model("robust_1_novelty_no_author_fe", "novelty_dv", Family::logit, se),
                   model("robust_2_rs_no_author_fe", "rs_dv", Family::linear, se),
                   model("robust_3_novelty_n_facilities", "novelty_dv", Family::logit, se),
                   model("robust_4_rs_n_facilities", "rs_dv", Family::linear, se),
                   model("robust_5_new_word", "new_word_dv", Family::logit, se),
                   model("robust_6_new_phrase", "new_phrase_dv", Family::logit, se)};
               specs[0].fe = no_author;
               specs[1].fe = no_author;
               specs[2].regressor = "n_facilities";
               specs[3].regressor = "n_facilities";

               std::vector<std::string> outputs;
               std::vector<std::optional<FitResult>> fits;
               for (const auto& spec : specs) {
                 const std::string file = "fit_" + spec.name + ".json";
                 try {
                   fits.push_back(fit_model(spec, rows, opts));
                   write_text(path(file), [&](std::ostream& o) { write_fit_json(o, *fits.back()); });
                 } catch (const NumericalError& e) {
                   fits.emplace_back();
                   ordered_json j;
                   j["spec"] = {{"name", spec.name}, {"outcome", spec.outcome}};
                   j["status"] = "failed";
                   j["error"] = e.what();
                   write_text(path(file), [&](std::ostream& o) { o << j.dump(2) << '\n'; });
                   log(fmt::format("fit-robustness: {} failed: {}", spec.name, e.what()));
                 }
                 outputs.push_back(file);
               }
               std::vector<std::pair<std::string, const FitResult*>> table;
               for (std::size_t i = 0; i < specs.size(); ++i) {
                 if (fits[i]) table.emplace_back(fmt::format("({}) {}", i + 1, specs[i].outcome), &*fits[i]);
               }
               write_text(path("table3.csv"), [&](std::ostream& o) { write_regression_table(o, table); });
               outputs.push_back("table3.csv");
               return outputs;
             }});
}

void Pipeline::all(const fs::path& works, const fs::path& facilities) {
  ingest(works, facilities);
  metrics_novelty();
  metrics_rs();
  covariates();
  describe();
  fit_main();
  fit_hetero();
  fit_robustness();
}

}  // namespace fmx
