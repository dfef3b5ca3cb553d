#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fmx/corpus_store.hpp"
#include "fmx/covariates.hpp"
#include "fmx/work_record.hpp"

namespace fmx {

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_authors = 500;
  int n_years = 10;
  int start_year = 2010;
  int n_journals = 600;
  int n_subfields = 78;
  int n_papers = 5000;
  double bsf_share = 0.3;
  double planted_logit_effect = 0.084;
  double planted_rs_effect = 0.003;
  double author_effect_sd = 0.5;
  double year_effect_sd = 0.2;
  double field_effect_sd = 0.3;

  int n_facilities = 8;
  double co_utilization = 0.15;  // chance a BSF work uses a second facility
  int min_refs = 5;
  int max_refs = 25;
  int max_coauthors = 4;

  void validate() const;  // throws InputError
};

/// Structural coefficients of the planted outcome equations. RS fixed effects
/// are the novelty draws scaled by rs_fe_scale.
struct SynthParams {
  double novelty_intercept = -0.5;
  double beta_novelty = 0.0;
  double gamma_authors_novelty = 0.1;
  double gamma_refs_novelty = 0.15;
  double rs_intercept = 0.12;
  double beta_rs = 0.0;
  double gamma_authors_rs = 0.004;
  double gamma_refs_rs = 0.008;
  double rs_fe_scale = 0.05;
  double rs_noise_sd = 0.03;
};

struct SynthTruthRow {
  std::string work_id;
  bool bsf = false;
  int n_facilities = 0;
  double log_authors = 0.0;
  double log_references = 0.0;
  double author_fe = 0.0;
  double year_fe = 0.0;
  double field_fe = 0.0;
  double eta_novelty = 0.0;
  double p_novelty = 0.0;
  bool novelty_dv = false;
  double mu_rs = 0.0;
  double rs_dv = 0.0;
};

struct SynthCorpus {
  std::vector<WorkRecord> works;  // facility_ids left empty; see facilities
  std::vector<FacilityEntry> facilities;
  std::vector<SynthTruthRow> truth;
  std::vector<std::string> core_journals;  // every tenth journal
  SynthParams params;
};

/// Deterministic for a given config (generation is sequential).
SynthCorpus gen_corpus(const SynthConfig& config);

double novelty_eta(const SynthParams& p, const SynthTruthRow& t) noexcept;
double rs_mean(const SynthParams& p, const SynthTruthRow& t) noexcept;

/// One JSON object per line in the format ingest() reads.
void write_works_jsonl(std::ostream& out, std::span<const WorkRecord> works);
void write_facility_csv(std::ostream& out, std::span<const FacilityEntry> entries);
void write_truth_csv(std::ostream& out, const SynthCorpus& synth);
void write_core_journals(std::ostream& out, const SynthCorpus& synth);  // one id per line

/// work_id -> planted outcomes, from a truth.csv (or any CSV with work_id and
/// at least one of novelty_dv, rs_dv).
std::unordered_map<std::string, OutcomeOverride> read_outcome_overrides(const std::filesystem::path& csv);

}  // namespace fmx
