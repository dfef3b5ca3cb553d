#include "fmx/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "fmx/csv.hpp"
#include "fmx/errors.hpp"
#include "json.hpp"

namespace fmx {

void SynthConfig::validate() const {
  if (n_papers < 0) throw InputError("synth: n_papers must be >= 0");
  if (n_authors < 1 || n_years < 1 || n_journals < 1 || n_subfields < 1 || n_facilities < 1) {
    throw InputError("synth: authors, years, journals, subfields and facilities must be >= 1");
  }
  if (!(bsf_share > 0.0 && bsf_share < 1.0)) throw InputError("synth: bsf_share must lie in (0,1)");
  if (!(co_utilization >= 0.0 && co_utilization < 1.0)) throw InputError("synth: co_utilization must lie in [0,1)");
  if (author_effect_sd < 0 || year_effect_sd < 0 || field_effect_sd < 0) {
    throw InputError("synth: effect standard deviations must be >= 0");
  }
  if (min_refs < 0 || max_refs < min_refs) throw InputError("synth: need 0 <= min_refs <= max_refs");
  if (n_papers > 0 && min_refs > n_papers - 1) {
    throw InputError(fmt::format("synth: min_refs {} exceeds the {} works available to cite", min_refs, n_papers - 1));
  }
  if (max_coauthors < 0 || max_coauthors >= n_authors) throw InputError("synth: max_coauthors must be < n_authors");
  if (start_year < kMinYear || start_year + n_years - 1 > kMaxYear) throw InputError("synth: years out of range");
}

double novelty_eta(const SynthParams& p, const SynthTruthRow& t) noexcept {
  return p.novelty_intercept + p.beta_novelty * (t.bsf ? 1.0 : 0.0) + p.gamma_authors_novelty * t.log_authors +
         p.gamma_refs_novelty * t.log_references + t.author_fe + t.year_fe + t.field_fe;
}

double rs_mean(const SynthParams& p, const SynthTruthRow& t) noexcept {
  return p.rs_intercept + p.beta_rs * (t.bsf ? 1.0 : 0.0) + p.gamma_authors_rs * t.log_authors +
         p.gamma_refs_rs * t.log_references + p.rs_fe_scale * (t.author_fe + t.year_fe + t.field_fe);
}

namespace {

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::size_t below(std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = rng_();
    } while (r >= limit);
    return static_cast<std::size_t>(r % n);
  }

  double normal() {
    // Box-Muller; one draw per call keeps the stream easy to reason about.
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 rng_;
};

const char* const kNorthCodes[] = {"US", "DE", "GB", "FR", "JP", "IT", "CA", "AU", "NL", "SE"};
const char* const kSouthCodes[] = {"CN", "IN", "BR", "ZA", "MX", "TR", "EG", "AR", "TH", "ID"};

}  // namespace

SynthCorpus gen_corpus(const SynthConfig& config) {
  config.validate();
  SynthCorpus out;
  out.params.beta_novelty = config.planted_logit_effect;
  out.params.beta_rs = config.planted_rs_effect;
  if (config.n_papers == 0) return out;
  Draw draw(config.seed);

  // Taxonomy: subfield k lives in field 11 + k % 26.
  std::vector<SubfieldId> subfields;
  for (int k = 0; k < config.n_subfields; ++k) subfields.push_back((11 + k % 26) * 100 + 1 + k / 26);
  std::map<FieldId, std::vector<std::size_t>> journals_by_field;
  for (int j = 0; j < config.n_journals; ++j) {
    journals_by_field[field_of(subfields[static_cast<std::size_t>(j % config.n_subfields)])].push_back(static_cast<std::size_t>(j));
  }

  for (int j = 0; j < config.n_journals; j += 10) out.core_journals.push_back(fmt::format("S{:05d}", j + 1));

  const int n_inst = std::max(1, config.n_authors / 5);
  std::vector<std::string> inst_country;
  for (int i = 0; i < n_inst; ++i) {
    inst_country.emplace_back(draw.bernoulli(0.6) ? kNorthCodes[draw.below(std::size(kNorthCodes))]
                                                  : kSouthCodes[draw.below(std::size(kSouthCodes))]);
  }

  struct Author {
    std::size_t inst;
    SubfieldId home;
    double effect;
  };
  std::vector<Author> authors;
  for (int a = 0; a < config.n_authors; ++a) {
    authors.push_back({draw.below(static_cast<std::size_t>(n_inst)), subfields[draw.below(subfields.size())],
                       config.author_effect_sd * draw.normal()});
  }
  std::vector<double> year_effect;
  for (int y = 0; y < config.n_years; ++y) year_effect.push_back(config.year_effect_sd * draw.normal());
  std::map<FieldId, double> field_effect;
  for (FieldId f = 11; f <= 36; ++f) field_effect[f] = config.field_effect_sd * draw.normal();

  // Authors enter over the first half of the window, in index order, so
  // career ages differ between teams publishing in the same year.
  auto active_authors = [&](int year_offset) {
    const auto total = static_cast<std::size_t>(config.n_authors);
    const std::size_t floor_count = std::min(total, static_cast<std::size_t>(config.max_coauthors) + 1);
    const auto span = static_cast<std::size_t>(std::max(1, config.n_years / 2));
    const std::size_t count = total * (static_cast<std::size_t>(year_offset) + 1) / span;
    return std::clamp(count, floor_count, total);
  };

  auto author_id = [](std::size_t a) { return fmt::format("A{:06d}", a + 1); };
  auto inst_id = [](std::size_t i) { return fmt::format("I{:05d}", i + 1); };

  std::map<FieldId, std::vector<std::size_t>> works_by_field;
  const auto n = static_cast<std::size_t>(config.n_papers);
  out.works.reserve(n);
  out.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    WorkRecord w;
    w.work_id = fmt::format("W{:09d}", i + 1);
    w.doi = fmt::format("10.5555/fmx.{}", i + 1);
    const int year_offset = static_cast<int>(i * static_cast<std::size_t>(config.n_years) / n);
    w.year = config.start_year + year_offset;
    w.language = "en";

    // Team: coauthors first, last author (the FE unit) at the end.
    const std::size_t active = active_authors(year_offset);
    const std::size_t last = draw.below(active);
    std::vector<std::size_t> team;
    const std::size_t n_co = std::min(draw.below(static_cast<std::size_t>(config.max_coauthors) + 1), active - 1);
    while (team.size() < n_co) {
      const std::size_t a = draw.below(active);
      if (a != last && std::find(team.begin(), team.end(), a) == team.end()) team.push_back(a);
    }
    team.push_back(last);
    for (auto a : team) {
      Authorship au;
      au.author_id = author_id(a);
      au.institution_ids.push_back(inst_id(authors[a].inst));
      if (draw.bernoulli(0.1)) {
        const std::size_t extra = draw.below(static_cast<std::size_t>(n_inst));
        if (extra != authors[a].inst) au.institution_ids.push_back(inst_id(extra));
      }
      au.country_code = inst_country[authors[a].inst];
      w.authorships.push_back(std::move(au));
    }

    // Subfields: a dominant one holding a majority share.
    const SubfieldId dominant = draw.bernoulli(0.8) ? authors[last].home : subfields[draw.below(subfields.size())];
    std::map<SubfieldId, double> shares;
    const double top = 0.55 + 0.35 * draw.uniform();
    shares[dominant] = top;
    const std::size_t n_extra = draw.below(3);
    double rest = 1.0 - top;
    for (std::size_t e = 0; e < n_extra; ++e) {
      const double part = e + 1 == n_extra ? rest : rest * draw.uniform();
      shares[subfields[draw.below(subfields.size())]] += part;
      rest -= part;
    }
    if (n_extra == 0) shares[dominant] += rest;
    double total = 0.0;
    for (const auto& [s, v] : shares) total += v;
    for (const auto& [s, v] : shares) w.subfield_shares.push_back({s, v / total});
    const FieldId field = field_of(dominant);

    const auto& js = journals_by_field[field];
    const std::size_t journal =
        js.empty() ? draw.below(static_cast<std::size_t>(config.n_journals)) : js[draw.below(js.size())];
    w.journal_id = fmt::format("S{:05d}", journal + 1);

    // References to earlier works, biased towards the same field.
    std::size_t k = static_cast<std::size_t>(config.min_refs) +
                    draw.below(static_cast<std::size_t>(config.max_refs - config.min_refs) + 1);
    k = std::min(k, i);
    std::vector<std::size_t> refs;
    if (2 * k >= i) {
      std::vector<std::size_t> pool(i);
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t t = 0; t < k; ++t) std::swap(pool[t], pool[t + draw.below(i - t)]);
      refs.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
      // Most papers stay inside their field; exploratory ones reach out.
      std::set<std::size_t> chosen;
      const auto& same = works_by_field[field];
      const double p_same = draw.bernoulli(0.35) ? 0.6 : 1.0;
      std::size_t attempts = 0;
      while (chosen.size() < k) {
        const bool inside = same.size() >= k && attempts < 50 * k && draw.bernoulli(p_same);
        chosen.insert(inside ? same[draw.below(same.size())] : draw.below(i));
        ++attempts;
      }
      refs.assign(chosen.begin(), chosen.end());
    }
    for (auto r : refs) w.referenced_work_ids.push_back(fmt::format("W{:09d}", r + 1));
    works_by_field[field].push_back(i);

    w.citation_count = static_cast<std::int64_t>(std::floor(std::exp(1.5 + draw.normal())));
    const std::size_t vocab = 40 + 6 * static_cast<std::size_t>(year_offset);
    const std::size_t n_tokens = 2 + draw.below(2);
    for (std::size_t t = 0; t < n_tokens; ++t) w.title_tokens.push_back(fmt::format("term{}", draw.below(vocab)));

    // Treatment.
    SynthTruthRow t;
    t.work_id = w.work_id;
    t.bsf = draw.bernoulli(config.bsf_share);
    if (t.bsf) {
      const std::size_t f1 = draw.below(static_cast<std::size_t>(config.n_facilities));
      std::vector<std::size_t> fac = {f1};
      if (config.n_facilities > 1 && draw.bernoulli(config.co_utilization)) {
        std::size_t f2 = draw.below(static_cast<std::size_t>(config.n_facilities) - 1);
        if (f2 >= f1) ++f2;
        fac.push_back(f2);
      }
      for (auto f : fac) {
        const bool by_doi = draw.bernoulli(0.9);
        out.facilities.push_back({fmt::format("F{:03d}", f + 1), by_doi ? MatchKey::doi : MatchKey::work_id,
                                  by_doi ? w.doi : w.work_id});
      }
      t.n_facilities = static_cast<int>(fac.size());
    }

    // Planted outcomes.
    t.log_authors = std::log(static_cast<double>(team.size()));
    t.log_references = k ? std::log(static_cast<double>(k)) : 0.0;
    t.author_fe = authors[last].effect;
    t.year_fe = year_effect[static_cast<std::size_t>(year_offset)];
    t.field_fe = field_effect[field];
    t.eta_novelty = novelty_eta(out.params, t);
    t.p_novelty = 1.0 / (1.0 + std::exp(-t.eta_novelty));
    t.novelty_dv = draw.uniform() < t.p_novelty;
    t.mu_rs = rs_mean(out.params, t);
    t.rs_dv = t.mu_rs + out.params.rs_noise_sd * draw.normal();

    out.works.push_back(std::move(w));
    out.truth.push_back(std::move(t));
  }
  return out;
}

void write_works_jsonl(std::ostream& out, std::span<const WorkRecord> works) {
  using nlohmann::json;
  for (const auto& w : works) {
    json j;
    j["id"] = w.work_id;
    j["doi"] = w.doi.empty() ? json(nullptr) : json("https://doi.org/" + w.doi);
    j["publication_year"] = w.year;
    j["journal_id"] = w.journal_id.empty() ? json(nullptr) : json(w.journal_id);
    j["type"] = w.doc_type == DocType::article ? "article" : "other";
    j["language"] = w.language;
    std::string title;
    for (const auto& t : w.title_tokens) title += (title.empty() ? "" : " ") + t;
    j["title"] = title;
    j["referenced_works"] = w.referenced_work_ids;
    json subs = json::array();
    for (const auto& s : w.subfield_shares) subs.push_back({{"id", s.subfield}, {"score", s.weight}});
    j["subfields"] = std::move(subs);
    json auths = json::array();
    for (const auto& a : w.authorships) {
      auths.push_back({{"author_id", a.author_id}, {"institution_ids", a.institution_ids},
                       {"country_code", a.country_code.empty() ? json(nullptr) : json(a.country_code)}});
    }
    j["authorships"] = std::move(auths);
    j["cited_by_count"] = w.citation_count;
    out << j.dump() << '\n';
  }
}

void write_facility_csv(std::ostream& out, std::span<const FacilityEntry> entries) {
  CsvWriter w(out);
  w.row({"facility_id", "match_key", "key_value"});
  for (const auto& e : entries) w.row({e.facility_id, e.match_key == MatchKey::doi ? "doi" : "work_id", e.key_value});
}

void write_core_journals(std::ostream& out, const SynthCorpus& synth) {
  for (const auto& j : synth.core_journals) out << j << '\n';
}

void write_truth_csv(std::ostream& out, const SynthCorpus& synth) {
  CsvWriter w(out);
  const auto& p = synth.params;
  w.comment(fmt::format("novelty: intercept={} beta_bsf={} gamma_log_authors={} gamma_log_references={}",
                        format_double(p.novelty_intercept), format_double(p.beta_novelty),
                        format_double(p.gamma_authors_novelty), format_double(p.gamma_refs_novelty)));
  w.comment(fmt::format(
      "rs: intercept={} beta_bsf={} gamma_log_authors={} gamma_log_references={} fe_scale={} noise_sd={}",
      format_double(p.rs_intercept), format_double(p.beta_rs), format_double(p.gamma_authors_rs),
      format_double(p.gamma_refs_rs), format_double(p.rs_fe_scale), format_double(p.rs_noise_sd)));
  w.row({"work_id", "bsf", "n_facilities", "log_authors", "log_references", "author_fe", "year_fe", "field_fe",
         "eta_novelty", "p_novelty", "novelty_dv", "mu_rs", "rs_dv"});
  for (const auto& t : synth.truth) {
    w.row({t.work_id, t.bsf ? "1" : "0", std::to_string(t.n_facilities), format_double(t.log_authors),
           format_double(t.log_references), format_double(t.author_fe), format_double(t.year_fe),
           format_double(t.field_fe), format_double(t.eta_novelty), format_double(t.p_novelty),
           t.novelty_dv ? "1" : "0", format_double(t.mu_rs), format_double(t.rs_dv)});
  }
}

std::unordered_map<std::string, OutcomeOverride> read_outcome_overrides(const std::filesystem::path& csv) {
  const auto t = read_csv(csv);
  const auto c_id = t.column("work_id");
  const bool has_nov = t.has_column("novelty_dv");
  const bool has_rs = t.has_column("rs_dv");
  if (!has_nov && !has_rs) throw InputError(csv.string() + ": needs a novelty_dv or rs_dv column");
  std::unordered_map<std::string, OutcomeOverride> out;
  for (const auto& row : t.rows) {
    OutcomeOverride o;
    if (has_nov && !row[t.column("novelty_dv")].empty()) o.novelty_dv = parse_bool(row[t.column("novelty_dv")]);
    if (has_rs && !row[t.column("rs_dv")].empty()) o.rs_dv = parse_double(row[t.column("rs_dv")]);
    out[row[c_id]] = o;
  }
  return out;
}

}  // namespace fmx
