#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fmx/diversity.hpp"
#include "fmx/novelty.hpp"
#include "fmx/work_record.hpp"

namespace fmx {

enum class Leadership : std::uint8_t { mixed, all_north, all_south };
enum class Hemisphere : std::uint8_t { north, south };
enum class Domain : std::uint8_t { physical, life, health, social };

const char* to_string(Leadership l) noexcept;
const char* to_string(Domain d) noexcept;
Leadership parse_leadership(std::string_view text);
Domain parse_domain(std::string_view text);
inline constexpr Domain kAllDomains[] = {Domain::physical, Domain::life, Domain::health, Domain::social};

/// One regression observation.
struct CovariateRow {
  std::string work_id;
  std::optional<bool> novelty_dv;
  std::optional<double> rs_dv;
  std::optional<bool> new_word_dv;
  std::optional<bool> new_phrase_dv;
  bool bsf = false;
  int n_facilities = 0;
  double log_authors = 0.0;
  double log_institutions = 0.0;
  double log_countries = 0.0;
  double log_references = 0.0;
  Leadership leadership = Leadership::mixed;
  double log_avg_career_age = 0.0;
  double log_avg_inst_h = 0.0;
  double log_journal_h = 0.0;
  bool core_journal = false;
  std::string fe_author;
  int fe_year = 0;
  FieldId fe_discipline = 0;
  Domain domain = Domain::physical;

  friend bool operator==(const CovariateRow&, const CovariateRow&) = default;
};

using NorthSouthMap = std::unordered_map<std::string, Hemisphere>;
using FieldDomainMap = std::map<FieldId, Domain>;

NorthSouthMap default_north_south();
FieldDomainMap default_field_domains();  // 26 OpenAlex fields -> 4 domains

NorthSouthMap load_north_south(const std::filesystem::path& csv);       // country_code,group
std::set<std::string> load_core_journals(const std::filesystem::path& txt);  // one id per line
FieldDomainMap load_field_domains(const std::filesystem::path& csv);    // field_id,domain[,name]
std::unordered_map<std::string, std::int64_t> load_h_index_table(const std::filesystem::path& csv);  // id,h_index

/// nullopt when either country is missing from the map.
std::optional<Leadership> classify_leadership(std::string_view first_country, std::string_view last_country,
                                              const NorthSouthMap& map);

using FirstYearIndex = std::unordered_map<std::string, int>;
FirstYearIndex build_first_year_index(const Corpus& corpus);

/// year - first_year + 1; nullopt when the author is not indexed.
std::optional<int> career_age(const std::string& author_id, int year, const FirstYearIndex& index);

std::int64_t h_index(std::span<const std::int64_t> citation_counts);

struct OutcomeOverride {
  std::optional<bool> novelty_dv;
  std::optional<double> rs_dv;
};

struct CovariateMaps {
  NorthSouthMap north_south = default_north_south();
  std::set<std::string> core_journals;
  FieldDomainMap field_domains = default_field_domains();
  std::unordered_map<std::string, std::int64_t> journal_h;      // overrides the corpus fallback
  std::unordered_map<std::string, std::int64_t> institution_h;  // overrides the corpus fallback
};

struct MetricTables {
  std::unordered_map<std::string, bool> novelty;  // work_id -> is_novel
  std::unordered_map<std::string, double> rao_stirling;
  std::unordered_map<std::string, TermNoveltyResult> terms;
  std::unordered_map<std::string, OutcomeOverride> overrides;
};

struct ExclusionReport {
  std::map<std::string, std::size_t> by_cause;
  std::vector<std::pair<std::string, std::string>> rows;  // (work_id, cause)
  std::size_t n_authors_without_first_year = 0;
};

struct CovariateBuild {
  std::vector<CovariateRow> rows;
  ExclusionReport exclusions;
};

/// Builds one row per sample work (corpus indices), or an itemized exclusion.
CovariateBuild build_rows(const Corpus& corpus, std::span<const std::uint32_t> sample, const MetricTables& metrics,
                          const CovariateMaps& maps);

/// Throws std::logic_error when a row breaks an invariant.
void check_row(const CovariateRow& row, const FieldDomainMap& fields);

void write_rows_csv(std::ostream& out, std::span<const CovariateRow> rows);
std::vector<CovariateRow> read_rows_csv(std::istream& in);
std::vector<CovariateRow> read_rows_csv(const std::filesystem::path& path);

}  // namespace fmx
