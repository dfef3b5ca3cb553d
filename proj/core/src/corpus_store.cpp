#include "fmx/corpus_store.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "fmx/csv.hpp"
#include "fmx/digest.hpp"
#include "fmx/errors.hpp"
#include "fmx/parallel.hpp"

namespace fmx {

using nlohmann::json;

// ---------------------------------------------------------------------------
// WorkRecord / Corpus

SubfieldId WorkRecord::primary_subfield() const noexcept {
  SubfieldId best = -1;
  double best_w = -1.0;
  for (const auto& s : subfield_shares) {
    if (s.weight > best_w || (s.weight == best_w && s.subfield < best)) {
      best = s.subfield;
      best_w = s.weight;
    }
  }
  return best;
}

void validate_record(const WorkRecord& w) {
  if (w.work_id.empty()) throw InputError("record without id");
  if (w.year < kMinYear || w.year > kMaxYear) {
    throw InputError(fmt::format("{}: year {} outside [{}, {}]", w.work_id, w.year, kMinYear, kMaxYear));
  }
  if (!w.subfield_shares.empty()) {
    double total = 0.0;
    for (const auto& s : w.subfield_shares) {
      if (!(s.weight >= 0.0 && s.weight <= 1.0)) {
        throw InputError(fmt::format("{}: subfield weight {} outside [0,1]", w.work_id, s.weight));
      }
      total += s.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw InputError(fmt::format("{}: subfield weights sum to {}", w.work_id, total));
    }
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& r : w.referenced_work_ids) {
    if (r == w.work_id) throw InputError(fmt::format("{}: self reference", w.work_id));
    if (!seen.insert(r).second) throw InputError(fmt::format("{}: duplicate reference {}", w.work_id, r));
  }
  if (w.citation_count < 0) throw InputError(fmt::format("{}: negative citation count", w.work_id));
}

Corpus::Corpus(std::vector<WorkRecord> works) : works_(std::move(works)) {
  std::sort(works_.begin(), works_.end(),
            [](const WorkRecord& a, const WorkRecord& b) { return a.work_id < b.work_id; });
  for (std::size_t i = 0; i < works_.size(); ++i) {
    validate_record(works_[i]);
    if (i > 0 && works_[i].work_id == works_[i - 1].work_id) {
      throw InputError("duplicate work id " + works_[i].work_id);
    }
  }
}

std::size_t Corpus::find(std::string_view work_id) const noexcept {
  auto it = std::lower_bound(works_.begin(), works_.end(), work_id,
                             [](const WorkRecord& w, std::string_view id) { return w.work_id < id; });
  if (it == works_.end() || it->work_id != work_id) return npos;
  return static_cast<std::size_t>(it - works_.begin());
}

void Corpus::set_facilities(std::vector<std::vector<std::string>> facilities) {
  if (facilities.size() != works_.size()) throw std::logic_error("set_facilities: size mismatch");
  for (std::size_t i = 0; i < works_.size(); ++i) works_[i].facility_ids = std::move(facilities[i]);
}

WorkIndex::WorkIndex(const Corpus& corpus) {
  map_.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    map_.emplace(corpus[i].work_id, static_cast<std::uint32_t>(i));
  }
}

std::size_t WorkIndex::find(std::string_view work_id) const noexcept {
  auto it = map_.find(work_id);
  return it == map_.end() ? Corpus::npos : it->second;
}

// ---------------------------------------------------------------------------
// DOI

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string normalize_doi(std::string_view raw) {
  std::string doi = to_lower(trim(raw));
  if (doi.empty()) throw InputError("doi: empty value");
  static constexpr std::string_view kPrefixes[] = {
      "https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi:"};
  for (auto prefix : kPrefixes) {
    if (doi.starts_with(prefix)) {
      doi = std::string(trim(std::string_view(doi).substr(prefix.size())));
      break;
    }
  }
  if (!doi.starts_with("10.")) throw InputError(fmt::format("doi: '{}' lacks the 10. prefix", raw));
  if (std::any_of(doi.begin(), doi.end(), is_space)) {
    throw InputError(fmt::format("doi: '{}' contains whitespace", raw));
  }
  const auto slash = doi.find('/');
  if (slash == std::string::npos || slash + 1 == doi.size()) {
    throw InputError(fmt::format("doi: '{}' has no suffix", raw));
  }
  return doi;
}

// ---------------------------------------------------------------------------
// JSONL parsing

std::vector<std::string> tokenize_title(std::string_view title) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : title) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      flush();
    } else if (u >= 0x80 || std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  flush();
  return tokens;
}

namespace {

std::string optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw InputError(fmt::format("field '{}' must be a string", key));
  return it->get<std::string>();
}

SubfieldId parse_subfield_id(const json& v) {
  if (v.is_number_integer()) return static_cast<SubfieldId>(v.get<std::int64_t>());
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    std::size_t end = s.size();
    std::size_t begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(s[begin - 1]))) --begin;
    if (begin == end) throw InputError(fmt::format("subfield id '{}' has no numeric suffix", s));
    return static_cast<SubfieldId>(parse_int(std::string_view(s).substr(begin)));
  }
  throw InputError("subfield id must be an integer or string");
}

}  // namespace

WorkRecord parse_work_line(std::string_view line, IngestReport* counters) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InputError(fmt::format("json: {}", e.what()));
  }
  if (!obj.is_object()) throw InputError("line is not a JSON object");

  WorkRecord w;
  try {
    w.work_id = optional_string(obj, "id");
    if (w.work_id.empty()) throw InputError("missing id");

    auto year = obj.find("publication_year");
    if (year == obj.end() || !year->is_number_integer()) throw InputError("missing publication_year");
    w.year = static_cast<int>(year->get<std::int64_t>());

    if (auto raw = optional_string(obj, "doi"); !raw.empty()) {
      try {
        w.doi = normalize_doi(raw);
      } catch (const InputError&) {
        if (counters) ++counters->n_bad_doi;
      }
    }
    w.journal_id = optional_string(obj, "journal_id");
    w.doc_type = optional_string(obj, "type") == "article" ? DocType::article : DocType::other;
    w.language = optional_string(obj, "language");
    w.title_tokens = tokenize_title(optional_string(obj, "title"));

    if (auto refs = obj.find("referenced_works"); refs != obj.end() && !refs->is_null()) {
      if (!refs->is_array()) throw InputError("referenced_works must be an array");
      std::unordered_set<std::string> seen;
      for (const auto& r : *refs) {
        if (!r.is_string()) throw InputError("referenced_works entries must be strings");
        auto id = r.get<std::string>();
        if (id == w.work_id || !seen.insert(id).second) {
          if (counters) ++counters->n_dropped_refs;
          continue;
        }
        w.referenced_work_ids.push_back(std::move(id));
      }
    }

    if (auto subs = obj.find("subfields"); subs != obj.end() && !subs->is_null()) {
      if (!subs->is_array()) throw InputError("subfields must be an array");
      std::map<SubfieldId, double> shares;
      for (const auto& s : *subs) {
        if (!s.is_object() || !s.contains("id") || !s.contains("score")) {
          throw InputError("subfield entries need id and score");
        }
        const double score = s["score"].get<double>();
        if (!std::isfinite(score) || score < 0) throw InputError("subfield score must be finite and >= 0");
        if (score > 0) shares[parse_subfield_id(s["id"])] += score;
      }
      double total = 0.0;
      for (const auto& [id, v] : shares) total += v;
      for (const auto& [id, v] : shares) w.subfield_shares.push_back({id, v / total});
    }

    if (auto auths = obj.find("authorships"); auths != obj.end() && !auths->is_null()) {
      if (!auths->is_array()) throw InputError("authorships must be an array");
      for (const auto& a : *auths) {
        if (!a.is_object()) throw InputError("authorship must be an object");
        Authorship au;
        au.author_id = optional_string(a, "author_id");
        if (au.author_id.empty()) throw InputError("authorship without author_id");
        au.country_code = optional_string(a, "country_code");
        if (auto inst = a.find("institution_ids"); inst != a.end() && !inst->is_null()) {
          for (const auto& i : *inst) au.institution_ids.push_back(i.get<std::string>());
        }
        w.authorships.push_back(std::move(au));
      }
    }

    if (auto c = obj.find("cited_by_count"); c != obj.end() && !c->is_null()) {
      w.citation_count = c->get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("{}: {}", w.work_id.empty() ? "record" : w.work_id, e.what()));
  }
  validate_record(w);
  return w;
}

namespace {

struct ParsedLine {
  std::optional<WorkRecord> record;
  std::string error;
  IngestReport counters;
};

}  // namespace

IngestResult ingest(std::istream& in, const IngestOptions& options) {
  IngestResult result;
  auto& report = result.report;
  Sha256 digest;
  std::unordered_map<std::string, std::size_t> position;  // work_id -> slot in `kept`
  std::vector<WorkRecord> kept;

  std::vector<std::string> batch;
  std::vector<std::size_t> batch_line_no;
  batch.reserve(options.batch_lines);
  std::size_t line_no = 0;
  std::vector<ParsedLine> parsed;
  std::string line;

  auto drain = [&] {
    parsed.assign(batch.size(), ParsedLine{});
    parallel_for(batch.size(), options.threads, [&](std::size_t i) {
      try {
        parsed[i].record = parse_work_line(batch[i], &parsed[i].counters);
      } catch (const InputError& e) {
        parsed[i].error = e.what();
      }
    });
    // Sequential merge in input order keeps last-wins and counters exact.
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      auto& p = parsed[i];
      report.n_bad_doi += p.counters.n_bad_doi;
      report.n_dropped_refs += p.counters.n_dropped_refs;
      if (!p.record) {
        ++report.n_parse_errors;
        if (report.error_samples.size() < 10) {
          report.error_samples.push_back(fmt::format("line {}: {}", batch_line_no[i], p.error));
        }
        continue;
      }
      auto& w = *p.record;
      if (options.require_article && w.doc_type != DocType::article) {
        ++report.n_excluded_doc_type;
        continue;
      }
      if (options.require_english && w.language != "en") {
        ++report.n_excluded_language;
        continue;
      }
      auto [it, inserted] = position.try_emplace(w.work_id, kept.size());
      if (inserted) {
        kept.push_back(std::move(w));
      } else {
        ++report.n_duplicates;
        kept[it->second] = std::move(w);
      }
    }
    batch.clear();
    batch_line_no.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    digest.update(line);
    digest.update("\n");
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++report.n_lines;
    batch.push_back(std::move(line));
    batch_line_no.push_back(line_no);
    if (batch.size() >= options.batch_lines) drain();
  }
  drain();

  if (report.n_lines > 0) {
    const double rate = static_cast<double>(report.n_parse_errors) / static_cast<double>(report.n_lines);
    if (rate > options.max_error_rate) {
      throw InputError(fmt::format("ingest aborted: {} of {} lines unparseable ({:.3g}% > {:.3g}%){}",
                                   report.n_parse_errors, report.n_lines, 100 * rate,
                                   100 * options.max_error_rate,
                                   report.error_samples.empty() ? "" : "; first: " + report.error_samples.front()));
    }
  }

  result.corpus = Corpus(std::move(kept));
  result.manifest = make_manifest(result.corpus, SampleSelection{}, digest.hex());
  return result;
}

IngestResult ingest_file(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return ingest(in, options);
}

// ---------------------------------------------------------------------------
// Facilities

std::vector<FacilityEntry> parse_facility_csv(std::istream& in) {
  const CsvTable table = parse_csv(in);
  const auto c_fac = table.column("facility_id");
  const auto c_key = table.column("match_key");
  const auto c_val = table.column("key_value");
  std::vector<FacilityEntry> entries;
  entries.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    FacilityEntry e;
    e.facility_id = std::string(trim(row[c_fac]));
    const auto key = trim(row[c_key]);
    const auto value = trim(row[c_val]);
    if (e.facility_id.empty()) throw InputError(fmt::format("facility row {}: empty facility_id", r + 1));
    if (value.empty()) throw InputError(fmt::format("facility row {}: empty key_value", r + 1));
    if (key == "doi") {
      e.match_key = MatchKey::doi;
      try {
        e.key_value = normalize_doi(value);
      } catch (const InputError& err) {
        throw InputError(fmt::format("facility row {}: {}", r + 1, err.what()));
      }
    } else if (key == "work_id") {
      e.match_key = MatchKey::work_id;
      e.key_value = std::string(value);
    } else {
      throw InputError(fmt::format("facility row {}: unknown match_key '{}'", r + 1, key));
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<FacilityEntry> read_facility_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_facility_csv(in);
}

MatchReport match_facilities(Corpus& corpus, const std::vector<FacilityEntry>& entries) {
  MatchReport report;
  report.n_entries = entries.size();

  // DOI -> work; a DOI shared by several works resolves to the smallest work_id
  // (corpus order), so exact work_id entries are the only unambiguous key.
  std::unordered_map<std::string_view, std::uint32_t> by_doi;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].doi.empty()) by_doi.try_emplace(corpus[i].doi, static_cast<std::uint32_t>(i));
  }
  const WorkIndex by_id(corpus);

  std::vector<std::set<std::string>> facilities(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    facilities[i].insert(corpus[i].facility_ids.begin(), corpus[i].facility_ids.end());
  }
  for (const auto& e : entries) {
    std::size_t idx = Corpus::npos;
    if (e.match_key == MatchKey::work_id) {
      idx = by_id.find(e.key_value);
    } else if (auto it = by_doi.find(e.key_value); it != by_doi.end()) {
      idx = it->second;
    }
    if (idx == Corpus::npos) {
      report.unmatched.push_back(e);
      continue;
    }
    ++report.n_matched_entries;
    facilities[idx].insert(e.facility_id);
  }
  std::vector<std::vector<std::string>> flat(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) flat[i].assign(facilities[i].begin(), facilities[i].end());
  corpus.set_facilities(std::move(flat));
  return report;
}

SampleSelection expand_by_last_author(const Corpus& corpus) {
  std::unordered_set<std::string_view> leaders;
  std::size_t n_bsf = 0;
  for (const auto& w : corpus.works()) {
    if (!w.is_bsf()) continue;
    ++n_bsf;
    if (!w.authorships.empty()) leaders.insert(w.authorships.back().author_id);
  }
  if (n_bsf == 0) throw InputError("empty treatment set");
  SampleSelection sel;
  sel.n_last_authors = leaders.size();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& w = corpus[i];
    if (!w.authorships.empty() && leaders.contains(w.authorships.back().author_id)) {
      sel.indices.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return sel;
}

CorpusManifest make_manifest(const Corpus& corpus, const SampleSelection& sample,
                             std::string source_digest) {
  CorpusManifest m;
  m.n_works = corpus.size();
  m.n_sample_works = sample.indices.size();
  m.n_last_authors = sample.n_last_authors;
  m.source_digest = std::move(source_digest);
  bool first = true;
  for (const auto& w : corpus.works()) {
    if (w.is_bsf()) ++m.n_bsf_works;
    if (first || w.year < m.year_min) m.year_min = w.year;
    if (first || w.year > m.year_max) m.year_max = w.year;
    first = false;
  }
  return m;
}

}  // namespace fmx
