#include "fmx/columnar_cache.hpp"

#include <fmt/format.h>

#include <cstring>
#include <fstream>

#include "fmx/errors.hpp"

namespace fmx {

namespace {

enum class Tag : std::uint8_t { i64 = 1, f64 = 2, str = 3 };

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Cursor {
 public:
  explicit Cursor(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <class T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail();
    return v;
  }
  std::string get_str() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail();
    return s;
  }
  template <class T>
  void get_array(std::vector<T>& out, std::uint64_t n) {
    out.resize(n);
    in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) fail();
  }
  [[noreturn]] void fail() const { throw InputError("cache: truncated file " + source_); }

 private:
  std::istream& in_;
  std::string source_;
};

void read_header(Cursor& cur, const std::filesystem::path& path, std::string& digest) {
  char magic[4];
  for (auto& m : magic) m = cur.get<char>();
  if (std::memcmp(magic, kCacheMagic, 4) != 0) throw InputError("cache: bad magic in " + path.string());
  const auto version = cur.get<std::uint32_t>();
  if (version != kCacheVersion) {
    throw InputError(fmt::format("cache: {} has version {}, expected {}", path.string(), version, kCacheVersion));
  }
  digest = cur.get_str();
}

}  // namespace

void ColumnarTable::add(std::string name, Column column) { columns_[std::move(name)] = std::move(column); }

template <class T>
static const std::vector<T>& typed(const std::map<std::string, Column>& cols, const std::string& name) {
  auto it = cols.find(name);
  if (it == cols.end()) throw InputError("cache: missing column " + name);
  if (auto* v = std::get_if<std::vector<T>>(&it->second)) return *v;
  throw InputError("cache: column " + name + " has unexpected type");
}

const std::vector<std::int64_t>& ColumnarTable::i64(const std::string& name) const {
  return typed<std::int64_t>(columns_, name);
}
const std::vector<double>& ColumnarTable::f64(const std::string& name) const { return typed<double>(columns_, name); }
const std::vector<std::string>& ColumnarTable::str(const std::string& name) const {
  return typed<std::string>(columns_, name);
}

void ColumnarTable::write(const std::filesystem::path& path, const std::string& digest) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cache: cannot write " + tmp.string());
    out.write(kCacheMagic, 4);
    put<std::uint32_t>(out, kCacheVersion);
    put_str(out, digest);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(columns_.size()));
    for (const auto& [name, col] : columns_) {
      put_str(out, name);
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, std::vector<std::int64_t>>) {
              put(out, Tag::i64);
            } else if constexpr (std::is_same_v<V, std::vector<double>>) {
              put(out, Tag::f64);
            } else {
              put(out, Tag::str);
            }
            put<std::uint64_t>(out, v.size());
            if constexpr (std::is_same_v<V, std::vector<std::string>>) {
              for (const auto& s : v) put_str(out, s);
            } else {
              out.write(reinterpret_cast<const char*>(v.data()),
                        static_cast<std::streamsize>(v.size() * sizeof(typename V::value_type)));
            }
          },
          col);
    }
    if (!out) throw InputError("cache: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ColumnarTable ColumnarTable::read(const std::filesystem::path& path, std::string* digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cache: cannot open " + path.string());
  Cursor cur(in, path.string());
  std::string stored_digest;
  read_header(cur, path, stored_digest);
  if (digest) *digest = stored_digest;
  ColumnarTable table;
  const auto n_cols = cur.get<std::uint32_t>();
  for (std::uint32_t c = 0; c < n_cols; ++c) {
    auto name = cur.get_str();
    const auto tag = static_cast<Tag>(cur.get<std::uint8_t>());
    const auto n = cur.get<std::uint64_t>();
    switch (tag) {
      case Tag::i64: {
        std::vector<std::int64_t> v;
        cur.get_array(v, n);
        table.add(std::move(name), std::move(v));
        break;
      }
      case Tag::f64: {
        std::vector<double> v;
        cur.get_array(v, n);
        table.add(std::move(name), std::move(v));
        break;
      }
      case Tag::str: {
        std::vector<std::string> v;
        v.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) v.push_back(cur.get_str());
        table.add(std::move(name), std::move(v));
        break;
      }
      default:
        throw InputError("cache: unknown column type in " + path.string());
    }
  }
  return table;
}

std::optional<std::string> ColumnarTable::peek_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  Cursor cur(in, path.string());
  std::string digest;
  try {
    read_header(cur, path, digest);
  } catch (const InputError&) {
    return std::nullopt;
  }
  return digest;
}

// ---------------------------------------------------------------------------
// Corpus <-> columns

void save_corpus(const std::filesystem::path& path, const StoredCorpus& stored) {
  const auto& works = stored.corpus.works();
  const std::size_t n = works.size();
  std::vector<std::string> work_id, doi, journal, language;
  std::vector<std::int64_t> year, doc_type, citations;
  std::vector<std::int64_t> title_off{0}, ref_off{0}, sub_off{0}, auth_off{0}, inst_off{0}, fac_off{0};
  std::vector<std::string> title_tok, ref_id, auth_id, auth_country, inst_id, fac_id;
  std::vector<std::int64_t> sub_id;
  std::vector<double> sub_w;
  work_id.reserve(n);
  for (const auto& w : works) {
    work_id.push_back(w.work_id);
    doi.push_back(w.doi);
    journal.push_back(w.journal_id);
    language.push_back(w.language);
    year.push_back(w.year);
    doc_type.push_back(static_cast<std::int64_t>(w.doc_type));
    citations.push_back(w.citation_count);
    title_tok.insert(title_tok.end(), w.title_tokens.begin(), w.title_tokens.end());
    title_off.push_back(static_cast<std::int64_t>(title_tok.size()));
    ref_id.insert(ref_id.end(), w.referenced_work_ids.begin(), w.referenced_work_ids.end());
    ref_off.push_back(static_cast<std::int64_t>(ref_id.size()));
    for (const auto& s : w.subfield_shares) {
      sub_id.push_back(s.subfield);
      sub_w.push_back(s.weight);
    }
    sub_off.push_back(static_cast<std::int64_t>(sub_id.size()));
    for (const auto& a : w.authorships) {
      auth_id.push_back(a.author_id);
      auth_country.push_back(a.country_code);
      inst_id.insert(inst_id.end(), a.institution_ids.begin(), a.institution_ids.end());
      inst_off.push_back(static_cast<std::int64_t>(inst_id.size()));
    }
    auth_off.push_back(static_cast<std::int64_t>(auth_id.size()));
    fac_id.insert(fac_id.end(), w.facility_ids.begin(), w.facility_ids.end());
    fac_off.push_back(static_cast<std::int64_t>(fac_id.size()));
  }
  std::vector<std::int64_t> sample(stored.sample.indices.begin(), stored.sample.indices.end());
  const auto& m = stored.manifest;

  ColumnarTable t;
  t.add("work_id", std::move(work_id));
  t.add("doi", std::move(doi));
  t.add("journal_id", std::move(journal));
  t.add("language", std::move(language));
  t.add("year", std::move(year));
  t.add("doc_type", std::move(doc_type));
  t.add("citation_count", std::move(citations));
  t.add("title.off", std::move(title_off));
  t.add("title.token", std::move(title_tok));
  t.add("refs.off", std::move(ref_off));
  t.add("refs.id", std::move(ref_id));
  t.add("subfields.off", std::move(sub_off));
  t.add("subfields.id", std::move(sub_id));
  t.add("subfields.weight", std::move(sub_w));
  t.add("authors.off", std::move(auth_off));
  t.add("authors.id", std::move(auth_id));
  t.add("authors.country", std::move(auth_country));
  t.add("authors.inst_off", std::move(inst_off));
  t.add("authors.inst_id", std::move(inst_id));
  t.add("facilities.off", std::move(fac_off));
  t.add("facilities.id", std::move(fac_id));
  t.add("sample.index", std::move(sample));
  t.add("manifest.counts",
        std::vector<std::int64_t>{static_cast<std::int64_t>(m.n_works), static_cast<std::int64_t>(m.n_sample_works),
                                  static_cast<std::int64_t>(m.n_bsf_works),
                                  static_cast<std::int64_t>(m.n_last_authors), m.year_min, m.year_max});
  t.add("manifest.source_digest", std::vector<std::string>{m.source_digest});
  t.write(path, m.source_digest);
}

StoredCorpus load_corpus(const std::filesystem::path& path) {
  const ColumnarTable t = ColumnarTable::read(path);
  const auto& work_id = t.str("work_id");
  const auto& doi = t.str("doi");
  const auto& journal = t.str("journal_id");
  const auto& language = t.str("language");
  const auto& year = t.i64("year");
  const auto& doc_type = t.i64("doc_type");
  const auto& citations = t.i64("citation_count");
  const auto& title_off = t.i64("title.off");
  const auto& title_tok = t.str("title.token");
  const auto& ref_off = t.i64("refs.off");
  const auto& ref_id = t.str("refs.id");
  const auto& sub_off = t.i64("subfields.off");
  const auto& sub_id = t.i64("subfields.id");
  const auto& sub_w = t.f64("subfields.weight");
  const auto& auth_off = t.i64("authors.off");
  const auto& auth_id = t.str("authors.id");
  const auto& auth_country = t.str("authors.country");
  const auto& inst_off = t.i64("authors.inst_off");
  const auto& inst_id = t.str("authors.inst_id");
  const auto& fac_off = t.i64("facilities.off");
  const auto& fac_id = t.str("facilities.id");

  const std::size_t n = work_id.size();
  if (title_off.size() != n + 1 || ref_off.size() != n + 1 || sub_off.size() != n + 1 ||
      auth_off.size() != n + 1 || fac_off.size() != n + 1 || inst_off.size() != auth_id.size() + 1) {
    throw InputError("cache: inconsistent column lengths in " + path.string());
  }
  std::vector<WorkRecord> works(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& w = works[i];
    w.work_id = work_id[i];
    w.doi = doi[i];
    w.journal_id = journal[i];
    w.language = language[i];
    w.year = static_cast<int>(year[i]);
    w.doc_type = static_cast<DocType>(doc_type[i]);
    w.citation_count = citations[i];
    w.title_tokens.assign(title_tok.begin() + title_off[i], title_tok.begin() + title_off[i + 1]);
    w.referenced_work_ids.assign(ref_id.begin() + ref_off[i], ref_id.begin() + ref_off[i + 1]);
    for (auto k = sub_off[i]; k < sub_off[i + 1]; ++k) {
      w.subfield_shares.push_back({static_cast<SubfieldId>(sub_id[k]), sub_w[k]});
    }
    for (auto k = auth_off[i]; k < auth_off[i + 1]; ++k) {
      Authorship a;
      a.author_id = auth_id[k];
      a.country_code = auth_country[k];
      a.institution_ids.assign(inst_id.begin() + inst_off[k], inst_id.begin() + inst_off[k + 1]);
      w.authorships.push_back(std::move(a));
    }
    w.facility_ids.assign(fac_id.begin() + fac_off[i], fac_id.begin() + fac_off[i + 1]);
  }

  StoredCorpus stored;
  stored.corpus = Corpus(std::move(works));
  for (auto idx : t.i64("sample.index")) stored.sample.indices.push_back(static_cast<std::uint32_t>(idx));
  const auto& counts = t.i64("manifest.counts");
  if (counts.size() != 6) throw InputError("cache: bad manifest block in " + path.string());
  auto& m = stored.manifest;
  m.n_works = static_cast<std::size_t>(counts[0]);
  m.n_sample_works = static_cast<std::size_t>(counts[1]);
  m.n_bsf_works = static_cast<std::size_t>(counts[2]);
  m.n_last_authors = static_cast<std::size_t>(counts[3]);
  m.year_min = static_cast<int>(counts[4]);
  m.year_max = static_cast<int>(counts[5]);
  m.source_digest = t.str("manifest.source_digest").at(0);
  stored.sample.n_last_authors = m.n_last_authors;
  return stored;
}

std::optional<StoredCorpus> load_corpus_if_fresh(const std::filesystem::path& path, const std::string& digest) {
  auto stored = ColumnarTable::peek_digest(path);
  if (!stored || *stored != digest) return std::nullopt;
  return load_corpus(path);
}

}  // namespace fmx
