#include "fmx/covariates.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "fmx/csv.hpp"
#include "fmx/errors.hpp"

namespace fmx {

namespace defaults {
extern const char* const kNorthCountries;
extern const char* const kSouthCountries;
}  // namespace defaults

const char* to_string(Leadership l) noexcept {
  switch (l) {
    case Leadership::all_north:
      return "all_north";
    case Leadership::all_south:
      return "all_south";
    case Leadership::mixed:
      break;
  }
  return "mixed";
}

const char* to_string(Domain d) noexcept {
  switch (d) {
    case Domain::life:
      return "life";
    case Domain::health:
      return "health";
    case Domain::social:
      return "social";
    case Domain::physical:
      break;
  }
  return "physical";
}

Leadership parse_leadership(std::string_view text) {
  if (text == "mixed") return Leadership::mixed;
  if (text == "all_north") return Leadership::all_north;
  if (text == "all_south") return Leadership::all_south;
  throw InputError(fmt::format("unknown leadership '{}'", text));
}

Domain parse_domain(std::string_view text) {
  for (auto d : kAllDomains) {
    if (text == to_string(d)) return d;
  }
  throw InputError(fmt::format("unknown domain '{}'", text));
}

// ---------------------------------------------------------------------------
// Maps

NorthSouthMap default_north_south() {
  NorthSouthMap map;
  auto add = [&](std::string_view codes, Hemisphere h) {
    std::istringstream in{std::string(codes)};
    std::string code;
    while (in >> code) map.emplace(code, h);
  };
  add(defaults::kNorthCountries, Hemisphere::north);
  add(defaults::kSouthCountries, Hemisphere::south);
  return map;
}

FieldDomainMap default_field_domains() {
  using D = Domain;
  return {{11, D::life},     {12, D::social},   {13, D::life},     {14, D::social},   {15, D::physical},
          {16, D::physical}, {17, D::physical}, {18, D::social},   {19, D::physical}, {20, D::social},
          {21, D::physical}, {22, D::physical}, {23, D::physical}, {24, D::life},     {25, D::physical},
          {26, D::physical}, {27, D::health},   {28, D::life},     {29, D::health},   {30, D::life},
          {31, D::physical}, {32, D::social},   {33, D::social},   {34, D::health},   {35, D::health},
          {36, D::health}};
}

NorthSouthMap load_north_south(const std::filesystem::path& csv) {
  const auto t = read_csv(csv);
  const auto c_code = t.column("country_code");
  const auto c_group = t.column("group");
  NorthSouthMap map;
  for (const auto& row : t.rows) {
    if (row[c_group] == "north") {
      map[row[c_code]] = Hemisphere::north;
    } else if (row[c_group] == "south") {
      map[row[c_code]] = Hemisphere::south;
    } else {
      throw InputError(fmt::format("{}: unknown group '{}'", csv.string(), row[c_group]));
    }
  }
  return map;
}

std::set<std::string> load_core_journals(const std::filesystem::path& txt) {
  std::ifstream in(txt);
  if (!in) throw InputError("cannot open " + txt.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.insert(line);
  }
  return out;
}

FieldDomainMap load_field_domains(const std::filesystem::path& csv) {
  const auto t = read_csv(csv);
  const auto c_field = t.column("field_id");
  const auto c_domain = t.column("domain");
  FieldDomainMap map;
  for (const auto& row : t.rows) map[static_cast<FieldId>(parse_int(row[c_field]))] = parse_domain(row[c_domain]);
  return map;
}

std::unordered_map<std::string, std::int64_t> load_h_index_table(const std::filesystem::path& csv) {
  const auto t = read_csv(csv);
  const auto c_id = t.column("id");
  const auto c_h = t.column("h_index");
  std::unordered_map<std::string, std::int64_t> out;
  for (const auto& row : t.rows) {
    const auto h = parse_int(row[c_h]);
    if (h < 0) throw InputError(fmt::format("{}: negative h-index for {}", csv.string(), row[c_id]));
    out[row[c_id]] = h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks

std::optional<Leadership> classify_leadership(std::string_view first_country, std::string_view last_country,
                                              const NorthSouthMap& map) {
  auto a = map.find(std::string(first_country));
  auto b = map.find(std::string(last_country));
  if (a == map.end() || b == map.end()) return std::nullopt;
  if (a->second == Hemisphere::north && b->second == Hemisphere::north) return Leadership::all_north;
  if (a->second == Hemisphere::south && b->second == Hemisphere::south) return Leadership::all_south;
  return Leadership::mixed;
}

FirstYearIndex build_first_year_index(const Corpus& corpus) {
  FirstYearIndex index;
  for (const auto& w : corpus.works()) {
    for (const auto& a : w.authorships) {
      auto [it, inserted] = index.try_emplace(a.author_id, w.year);
      if (!inserted) it->second = std::min(it->second, w.year);
    }
  }
  return index;
}

std::optional<int> career_age(const std::string& author_id, int year, const FirstYearIndex& index) {
  auto it = index.find(author_id);
  if (it == index.end()) return std::nullopt;
  return year - it->second + 1;
}

std::int64_t h_index(std::span<const std::int64_t> citation_counts) {
  std::vector<std::int64_t> sorted(citation_counts.begin(), citation_counts.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::int64_t h = 0;
  while (h < static_cast<std::int64_t>(sorted.size()) && sorted[static_cast<std::size_t>(h)] >= h + 1) ++h;
  return h;
}

void check_row(const CovariateRow& row, const FieldDomainMap& fields) {
  auto fail = [&](const char* what) { throw std::logic_error(fmt::format("row {}: {}", row.work_id, what)); };
  if (row.bsf != (row.n_facilities >= 1)) fail("bsf flag disagrees with facility count");
  for (double v : {row.log_authors, row.log_institutions, row.log_countries, row.log_references,
                   row.log_avg_career_age, row.log_avg_inst_h, row.log_journal_h}) {
    if (!std::isfinite(v)) fail("non-finite log control");
  }
  if (row.rs_dv && !std::isfinite(*row.rs_dv)) fail("non-finite Rao-Stirling outcome");
  if (!fields.contains(row.fe_discipline)) fail("discipline outside the field universe");
  if (row.fe_author.empty()) fail("empty author fixed effect");
}

// ---------------------------------------------------------------------------
// Rows

namespace {

// Argmax of subfield shares aggregated to top-level fields; ties -> smaller id.
std::optional<FieldId> top_field(const WorkRecord& w) {
  std::map<FieldId, double> by_field;
  for (const auto& s : w.subfield_shares) by_field[field_of(s.subfield)] += s.weight;
  std::optional<FieldId> best;
  double best_w = -1.0;
  for (const auto& [f, wt] : by_field) {
    if (wt > best_w) {
      best = f;
      best_w = wt;
    }
  }
  return best;
}

}  // namespace

CovariateBuild build_rows(const Corpus& corpus, std::span<const std::uint32_t> sample, const MetricTables& metrics,
                          const CovariateMaps& maps) {
  CovariateBuild out;
  const FirstYearIndex first_year = build_first_year_index(corpus);

  // Snapshot h-indices from corpus citation counts unless supplied.
  std::unordered_map<std::string, std::vector<std::int64_t>> journal_cites;
  std::unordered_map<std::string, std::vector<std::int64_t>> inst_cites;
  for (const auto& w : corpus.works()) {
    if (!w.journal_id.empty()) journal_cites[w.journal_id].push_back(w.citation_count);
    std::unordered_set<std::string_view> insts;
    for (const auto& a : w.authorships) insts.insert(a.institution_ids.begin(), a.institution_ids.end());
    for (auto i : insts) inst_cites[std::string(i)].push_back(w.citation_count);
  }
  auto journal_h = [&](const std::string& j) -> std::int64_t {
    if (auto it = maps.journal_h.find(j); it != maps.journal_h.end()) return it->second;
    return h_index(journal_cites[j]);
  };
  std::unordered_map<std::string, std::int64_t> inst_h_cache;
  auto inst_h = [&](const std::string& i) -> std::int64_t {
    if (auto it = maps.institution_h.find(i); it != maps.institution_h.end()) return it->second;
    auto [it, inserted] = inst_h_cache.try_emplace(i, 0);
    if (inserted) it->second = h_index(inst_cites[i]);
    return it->second;
  };

  auto exclude = [&](const WorkRecord& w, const char* cause) {
    ++out.exclusions.by_cause[cause];
    out.exclusions.rows.emplace_back(w.work_id, cause);
  };

  for (const auto idx : sample) {
    const WorkRecord& w = corpus[idx];
    if (w.authorships.empty()) {
      exclude(w, "no_authors");
      continue;
    }
    if (w.referenced_work_ids.empty()) {
      exclude(w, "no_references");
      continue;
    }
    if (w.journal_id.empty()) {
      exclude(w, "no_journal");
      continue;
    }
    const auto field = top_field(w);
    if (!field) {
      exclude(w, "no_subfields");
      continue;
    }
    const auto domain = maps.field_domains.find(*field);
    if (domain == maps.field_domains.end()) {
      exclude(w, "unknown_field");
      continue;
    }

    std::set<std::string_view> authors, institutions, countries;
    double inst_h_sum = 0.0;
    std::size_t inst_h_n = 0;
    double age_sum = 0.0;
    std::size_t age_n = 0;
    for (const auto& a : w.authorships) {
      authors.insert(a.author_id);
      if (!a.country_code.empty()) countries.insert(a.country_code);
      if (!a.institution_ids.empty()) {
        double s = 0.0;
        for (const auto& i : a.institution_ids) {
          institutions.insert(i);
          s += static_cast<double>(inst_h(i));
        }
        inst_h_sum += s / static_cast<double>(a.institution_ids.size());
        ++inst_h_n;
      }
      if (auto age = career_age(a.author_id, w.year, first_year)) {
        age_sum += *age;
        ++age_n;
      } else {
        ++out.exclusions.n_authors_without_first_year;
      }
    }
    if (institutions.empty()) {
      exclude(w, "no_institutions");
      continue;
    }
    if (countries.empty()) {
      exclude(w, "no_countries");
      continue;
    }
    if (age_n == 0) {
      exclude(w, "no_career_age");
      continue;
    }
    const auto leadership =
        classify_leadership(w.authorships.front().country_code, w.authorships.back().country_code, maps.north_south);
    if (!leadership) {
      exclude(w, "unmapped_country");
      continue;
    }

    CovariateRow row;
    row.work_id = w.work_id;
    if (auto it = metrics.novelty.find(w.work_id); it != metrics.novelty.end()) row.novelty_dv = it->second;
    if (auto it = metrics.rao_stirling.find(w.work_id); it != metrics.rao_stirling.end()) row.rs_dv = it->second;
    if (auto it = metrics.terms.find(w.work_id); it != metrics.terms.end()) {
      row.new_word_dv = it->second.new_word;
      row.new_phrase_dv = it->second.new_phrase;
    }
    if (auto it = metrics.overrides.find(w.work_id); it != metrics.overrides.end()) {
      if (it->second.novelty_dv) row.novelty_dv = it->second.novelty_dv;
      if (it->second.rs_dv) row.rs_dv = it->second.rs_dv;
    }
    row.bsf = w.is_bsf();
    row.n_facilities = static_cast<int>(w.facility_count());
    row.log_authors = std::log(static_cast<double>(authors.size()));
    row.log_institutions = std::log(static_cast<double>(institutions.size()));
    row.log_countries = std::log(static_cast<double>(countries.size()));
    row.log_references = std::log(static_cast<double>(w.referenced_work_ids.size()));
    row.leadership = *leadership;
    row.log_avg_career_age = std::log(age_sum / static_cast<double>(age_n));
    row.log_avg_inst_h = std::log(inst_h_sum / static_cast<double>(inst_h_n) + 1.0);
    row.log_journal_h = std::log(static_cast<double>(journal_h(w.journal_id)) + 1.0);
    row.core_journal = maps.core_journals.contains(w.journal_id);
    row.fe_author = w.authorships.back().author_id;
    row.fe_year = w.year;
    row.fe_discipline = *field;
    row.domain = domain->second;
    check_row(row, maps.field_domains);
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// rows.csv

namespace {

const std::vector<std::string> kRowColumns = {
    "work_id",        "novelty_dv",       "rs_dv",         "new_word_dv",        "new_phrase_dv",
    "bsf",            "n_facilities",     "log_authors",   "log_institutions",   "log_countries",
    "log_references", "leadership",       "log_avg_career_age", "log_avg_inst_h", "log_journal_h",
    "core_journal",   "fe_author",        "fe_year",       "fe_discipline",      "domain"};

std::string opt_bool(const std::optional<bool>& b) { return b ? (*b ? "1" : "0") : ""; }

}  // namespace

void write_rows_csv(std::ostream& out, std::span<const CovariateRow> rows) {
  CsvWriter w(out);
  w.row(kRowColumns);
  for (const auto& r : rows) {
    w.row({r.work_id, opt_bool(r.novelty_dv), r.rs_dv ? format_double(*r.rs_dv) : "", opt_bool(r.new_word_dv),
           opt_bool(r.new_phrase_dv), r.bsf ? "1" : "0", std::to_string(r.n_facilities), format_double(r.log_authors),
           format_double(r.log_institutions), format_double(r.log_countries), format_double(r.log_references),
           to_string(r.leadership), format_double(r.log_avg_career_age), format_double(r.log_avg_inst_h),
           format_double(r.log_journal_h), r.core_journal ? "1" : "0", r.fe_author, std::to_string(r.fe_year),
           std::to_string(r.fe_discipline), to_string(r.domain)});
  }
}

std::vector<CovariateRow> read_rows_csv(std::istream& in) {
  const auto t = parse_csv(in);
  std::vector<std::size_t> col;
  for (const auto& name : kRowColumns) col.push_back(t.column(name));
  auto opt_b = [](const std::string& s) -> std::optional<bool> {
    if (s.empty()) return std::nullopt;
    return parse_bool(s);
  };
  std::vector<CovariateRow> rows;
  rows.reserve(t.rows.size());
  for (const auto& f : t.rows) {
    CovariateRow r;
    std::size_t c = 0;
    r.work_id = f[col[c++]];
    r.novelty_dv = opt_b(f[col[c++]]);
    if (const auto& s = f[col[c++]]; !s.empty()) r.rs_dv = parse_double(s);
    r.new_word_dv = opt_b(f[col[c++]]);
    r.new_phrase_dv = opt_b(f[col[c++]]);
    r.bsf = parse_bool(f[col[c++]]);
    r.n_facilities = static_cast<int>(parse_int(f[col[c++]]));
    r.log_authors = parse_double(f[col[c++]]);
    r.log_institutions = parse_double(f[col[c++]]);
    r.log_countries = parse_double(f[col[c++]]);
    r.log_references = parse_double(f[col[c++]]);
    r.leadership = parse_leadership(f[col[c++]]);
    r.log_avg_career_age = parse_double(f[col[c++]]);
    r.log_avg_inst_h = parse_double(f[col[c++]]);
    r.log_journal_h = parse_double(f[col[c++]]);
    r.core_journal = parse_bool(f[col[c++]]);
    r.fe_author = f[col[c++]];
    r.fe_year = static_cast<int>(parse_int(f[col[c++]]));
    r.fe_discipline = static_cast<FieldId>(parse_int(f[col[c++]]));
    r.domain = parse_domain(f[col[c++]]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CovariateRow> read_rows_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_rows_csv(in);
}

}  // namespace fmx
