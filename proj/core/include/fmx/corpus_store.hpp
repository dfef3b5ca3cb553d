#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fmx/work_record.hpp"

namespace fmx {

enum class MatchKey : std::uint8_t { doi, work_id };

struct FacilityEntry {
  std::string facility_id;
  MatchKey match_key = MatchKey::doi;
  std::string key_value;  // canonical DOI when match_key == doi

  friend bool operator==(const FacilityEntry&, const FacilityEntry&) = default;
};

struct CorpusManifest {
  std::size_t n_works = 0;  // all ingested works (reference universe)
  std::size_t n_sample_works = 0;  // works retained by last-author expansion
  std::size_t n_bsf_works = 0;
  std::size_t n_last_authors = 0;
  int year_min = 0;
  int year_max = 0;
  std::string source_digest;

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

/// Strips doi.org / dx.doi.org / "doi:" prefixes, trims and lowercases.
/// Throws InputError when the result is not a "10."-prefixed DOI without
/// embedded whitespace.
std::string normalize_doi(std::string_view raw);

struct IngestOptions {
  bool require_article = true;
  bool require_english = true;
  double max_error_rate = 0.01;
  unsigned threads = 1;
  std::size_t batch_lines = 1 << 16;
};

struct IngestReport {
  std::size_t n_lines = 0;  // non-blank lines seen
  std::size_t n_parse_errors = 0;
  std::size_t n_excluded_doc_type = 0;
  std::size_t n_excluded_language = 0;
  std::size_t n_duplicates = 0;
  std::size_t n_bad_doi = 0;
  std::size_t n_dropped_refs = 0;  // duplicate or self references removed
  std::vector<std::string> error_samples;  // first few diagnostics

  std::size_t n_excluded() const noexcept { return n_excluded_doc_type + n_excluded_language; }
};

struct IngestResult {
  Corpus corpus;
  IngestReport report;
  CorpusManifest manifest;
};

/// Splits a title into lowercase tokens with punctuation removed.
std::vector<std::string> tokenize_title(std::string_view title);

/// Parses one JSONL object into a record. Throws InputError on malformed
/// content; filtering is the caller's business.
WorkRecord parse_work_line(std::string_view line, IngestReport* counters = nullptr);

/// Reads a JSONL stream. Parse failures are skipped and counted; the run
/// aborts with InputError once the failure rate exceeds max_error_rate.
/// Duplicate work ids resolve to the last occurrence.
IngestResult ingest(std::istream& in, const IngestOptions& options = {});
IngestResult ingest_file(const std::filesystem::path& path, const IngestOptions& options = {});

std::vector<FacilityEntry> parse_facility_csv(std::istream& in);
std::vector<FacilityEntry> read_facility_csv(const std::filesystem::path& path);

struct MatchReport {
  std::size_t n_entries = 0;
  std::size_t n_matched_entries = 0;
  std::vector<FacilityEntry> unmatched;
};

/// Annotates works with the facilities that list them. A work listed by
/// several facilities carries all of them (co-utilization).
MatchReport match_facilities(Corpus& corpus, const std::vector<FacilityEntry>& entries);

struct SampleSelection {
  std::vector<std::uint32_t> indices;  // ascending corpus indices
  std::size_t n_last_authors = 0;      // distinct last authors on BSF works
};

/// Keeps every work whose last author is last author on at least one BSF
/// work. Throws InputError("empty treatment set") when no work is BSF.
SampleSelection expand_by_last_author(const Corpus& corpus);

CorpusManifest make_manifest(const Corpus& corpus, const SampleSelection& sample,
                             std::string source_digest);

}  // namespace fmx
