#include "fmx/novelty.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "fmx/errors.hpp"
#include "fmx/parallel.hpp"

namespace fmx {

JournalPair JournalPair::of(std::string a, std::string b) {
  if (a == b) throw std::invalid_argument("journal pair needs two distinct journals");
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

std::vector<JournalPair> paper_pairs(const WorkRecord& work, const JournalLookup& journal_of, bool multiplicity) {
  std::vector<std::string> journals;
  for (const auto& ref : work.referenced_work_ids) {
    if (const std::string* j = journal_of(ref); j != nullptr && !j->empty()) journals.push_back(*j);
  }
  std::vector<JournalPair> pairs;
  if (multiplicity) {
    for (std::size_t a = 0; a < journals.size(); ++a) {
      for (std::size_t b = a + 1; b < journals.size(); ++b) {
        if (journals[a] != journals[b]) pairs.push_back(JournalPair::of(journals[a], journals[b]));
      }
    }
  } else {
    std::sort(journals.begin(), journals.end());
    journals.erase(std::unique(journals.begin(), journals.end()), journals.end());
    for (std::size_t a = 0; a < journals.size(); ++a) {
      for (std::size_t b = a + 1; b < journals.size(); ++b) pairs.push_back({journals[a], journals[b]});
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

namespace {

constexpr std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) noexcept {
  if (b < a) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

// Appends the pair keys of one paper's slots to `keys`.
void emit_pairs(std::span<const std::uint32_t> slots, bool multiplicity, std::vector<std::uint32_t>& scratch,
                std::vector<std::uint64_t>& keys) {
  if (multiplicity) {
    for (std::size_t a = 0; a < slots.size(); ++a) {
      for (std::size_t b = a + 1; b < slots.size(); ++b) {
        if (slots[a] != slots[b]) keys.push_back(pair_key(slots[a], slots[b]));
      }
    }
    return;
  }
  scratch.assign(slots.begin(), slots.end());
  std::sort(scratch.begin(), scratch.end());
  scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
  for (std::size_t a = 0; a < scratch.size(); ++a) {
    for (std::size_t b = a + 1; b < scratch.size(); ++b) keys.push_back(pair_key(scratch[a], scratch[b]));
  }
}

// Sorted (key, count) tally of all papers' pairs under an assignment.
void tally(const CoCitationYear& y, std::span<const std::uint32_t> assignment, bool multiplicity,
           std::vector<std::uint64_t>& keys, std::vector<std::pair<std::uint64_t, std::int64_t>>& out) {
  keys.clear();
  out.clear();
  std::vector<std::uint32_t> scratch;
  const auto off = y.slot_offsets();
  for (std::size_t p = 0; p < y.n_papers(); ++p) {
    emit_pairs(assignment.subspan(off[p], off[p + 1] - off[p]), multiplicity, scratch, keys);
  }
  std::sort(keys.begin(), keys.end());
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    out.emplace_back(keys[i], static_cast<std::int64_t>(j - i));
    i = j;
  }
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t run_seed(std::uint64_t master, int year, std::uint64_t run) noexcept {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(year)));
  return splitmix64(h ^ run);
}

// ---------------------------------------------------------------------------

CoCitationContext::CoCitationContext(const Corpus& corpus) : corpus_(&corpus), index_(corpus) {
  std::vector<std::string_view> names;
  for (const auto& w : corpus.works()) {
    if (!w.journal_id.empty()) names.push_back(w.journal_id);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  journals_.assign(names.begin(), names.end());
  for (std::size_t i = 0; i < journals_.size(); ++i) journal_index_.emplace(journals_[i], static_cast<std::uint32_t>(i));
}

namespace {

std::vector<std::uint32_t> works_of_year(const Corpus& corpus, int year) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].year == year) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

}  // namespace

CoCitationYear::CoCitationYear(const Corpus& corpus, int year, bool multiplicity)
    : CoCitationYear(CoCitationContext(corpus), works_of_year(corpus, year), year, multiplicity) {}

CoCitationYear::CoCitationYear(const CoCitationContext& ctx, std::span<const std::uint32_t> works_in_year, int year,
                               bool multiplicity)
    : year_(year), multiplicity_(multiplicity), journals_(ctx.journals()) {
  const Corpus& corpus = ctx.corpus();
  slot_offsets_.push_back(0);
  std::map<int, std::vector<std::uint32_t>> strata;
  for (const auto i : works_in_year) {
    const auto& w = corpus[i];
    const auto first_slot = slot_journal_.size();
    for (const auto& ref : w.referenced_work_ids) {
      const auto r = ctx.index().find(ref);
      if (r == Corpus::npos || corpus[r].journal_id.empty()) continue;
      const int stratum = corpus[r].year;  // 0 would pool year-less works
      strata[stratum].push_back(static_cast<std::uint32_t>(slot_journal_.size()));
      slot_journal_.push_back(ctx.journal_index(corpus[r].journal_id));
      slot_stratum_.push_back(stratum);
    }
    if (slot_journal_.size() == first_slot) continue;
    papers_.push_back(i);
    slot_offsets_.push_back(static_cast<std::uint32_t>(slot_journal_.size()));
  }
  for (auto& [key, positions] : strata) strata_.push_back(std::move(positions));
}

std::map<std::uint64_t, std::int64_t> CoCitationYear::count_pairs(std::span<const std::uint32_t> assignment) const {
  std::vector<std::uint64_t> keys;
  std::vector<std::pair<std::uint64_t, std::int64_t>> counts;
  tally(*this, assignment, multiplicity_, keys, counts);
  return {counts.begin(), counts.end()};
}

JournalPair CoCitationYear::decode(std::uint64_t key) const {
  return {journals_[key >> 32], journals_[key & 0xffffffffULL]};
}

std::map<JournalPair, std::int64_t> observed_counts(const Corpus& corpus, int year, bool multiplicity) {
  const CoCitationYear y(corpus, year, multiplicity);
  std::map<JournalPair, std::int64_t> out;
  for (const auto& [key, count] : y.count_pairs(y.slot_journal())) out.emplace(y.decode(key), count);
  return out;
}

namespace {

__extension__ using Int128 = __int128;

struct Moments {
  std::int64_t sum = 0;
  std::int64_t sumsq = 0;
};

std::map<JournalPair, NullMoments> null_from_year(const CoCitationYear& y, int runs, std::uint64_t seed,
                                                  bool multiplicity, unsigned threads,
                                                  const RewireObserver& observer) {
  if (runs < 2) throw InputError("rewire_null: runs must be >= 2");
  // Fixed chunking: each chunk owns a contiguous run range and its own
  // integer accumulator, so the merged sums do not depend on scheduling.
  const std::size_t n_chunks = std::min<std::size_t>(static_cast<std::size_t>(runs), 64);
  std::vector<std::unordered_map<std::uint64_t, Moments>> partial(n_chunks);
  parallel_for(n_chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * static_cast<std::size_t>(runs) / n_chunks;
    const std::size_t end = (c + 1) * static_cast<std::size_t>(runs) / n_chunks;
    std::vector<std::uint32_t> assignment;
    std::vector<std::uint64_t> keys;
    std::vector<std::pair<std::uint64_t, std::int64_t>> counts;
    auto& acc = partial[c];
    for (std::size_t r = begin; r < end; ++r) {
      std::mt19937_64 rng(run_seed(seed, y.year(), r));
      assignment.assign(y.slot_journal().begin(), y.slot_journal().end());
      y.permute(assignment, rng);
      if (observer) observer(y, assignment);
      tally(y, assignment, multiplicity, keys, counts);
      for (const auto& [key, n] : counts) {
        auto& m = acc[key];
        m.sum += n;
        m.sumsq += n * n;
      }
    }
  });
  std::unordered_map<std::uint64_t, Moments> total;
  for (const auto& part : partial) {
    for (const auto& [key, m] : part) {
      auto& t = total[key];
      t.sum += m.sum;
      t.sumsq += m.sumsq;
    }
  }
  std::map<JournalPair, NullMoments> out;
  const auto R = static_cast<Int128>(runs);
  for (const auto& [key, m] : total) {
    // Sample variance from exact integer moments: (R*S2 - S1^2) / (R(R-1)).
    const Int128 num = R * m.sumsq - static_cast<Int128>(m.sum) * m.sum;
    const double var = static_cast<double>(num) / (static_cast<double>(runs) * static_cast<double>(runs - 1));
    out.emplace(y.decode(key),
                NullMoments{static_cast<double>(m.sum) / static_cast<double>(runs), std::sqrt(std::max(0.0, var))});
  }
  return out;
}

}  // namespace

std::map<JournalPair, NullMoments> rewire_null(const Corpus& corpus, int year, int runs, std::uint64_t seed,
                                               bool multiplicity, unsigned threads, const RewireObserver& observer) {
  const CoCitationYear y(corpus, year, multiplicity);
  return null_from_year(y, runs, seed, multiplicity, threads, observer);
}

std::vector<PairStat> pair_z(int year, const std::map<JournalPair, std::int64_t>& observed,
                             const std::map<JournalPair, NullMoments>& null) {
  std::vector<PairStat> out;
  out.reserve(observed.size());
  for (const auto& [pair, count] : observed) {
    PairStat s;
    s.year = year;
    s.pair = pair;
    s.observed = count;
    if (auto it = null.find(pair); it != null.end()) {
      s.null_mean = it->second.mean;
      s.null_std = it->second.std;
    }
    s.defined = s.null_std > 0.0;
    s.z = s.defined ? (static_cast<double>(count) - s.null_mean) / s.null_std : std::nan("");
    out.push_back(std::move(s));
  }
  return out;
}

double percentile(std::span<const double> sorted, double q, PercentileRule rule) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  const std::size_t k = sorted.size();
  if (rule == PercentileRule::nearest_rank) {
    // rank = ceil(q*k), computed in integers for q = p/100 to dodge 0.1*30 = 3.0000000000000004.
    const auto per_mille = static_cast<std::size_t>(std::llround(q * 1000.0));
    std::size_t rank = (per_mille * k + 999) / 1000;
    rank = std::clamp<std::size_t>(rank, 1, k);
    return sorted[rank - 1];
  }
  const double h = static_cast<double>(k - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= k) return sorted[k - 1];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::optional<NoveltyResult> novelty_score(const WorkRecord& work, const JournalLookup& journal_of,
                                           const std::map<JournalPair, PairStat>& stats,
                                           const NoveltyOptions& options) {
  NoveltyResult res;
  res.work_id = work.work_id;
  res.year = work.year;
  std::vector<double> z;
  for (const auto& pair : paper_pairs(work, journal_of, options.pair_multiplicity)) {
    auto it = stats.find(pair);
    if (it == stats.end() || !it->second.defined) {
      ++res.n_undefined;
      continue;
    }
    z.push_back(it->second.z);
  }
  if (z.empty()) return std::nullopt;
  std::sort(z.begin(), z.end());
  res.n_pairs = z.size();
  res.ns = percentile(z, 0.10, options.percentile_rule);
  res.is_novel = res.ns < 0.0;
  return res;
}

NoveltyRun compute_novelty(const Corpus& corpus, const NoveltyOptions& options) {
  const CoCitationContext ctx(corpus);
  const JournalLookup journal_of = [&](std::string_view id) -> const std::string* {
    const auto i = ctx.index().find(id);
    return i == Corpus::npos ? nullptr : &corpus[i].journal_id;
  };

  std::map<int, std::vector<std::uint32_t>> by_year;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_year[corpus[i].year].push_back(static_cast<std::uint32_t>(i));

  std::vector<std::optional<NoveltyResult>> per_work(corpus.size());
  NoveltyRun run;
  for (const auto& [year, members] : by_year) {
    const CoCitationYear y(ctx, members, year, options.pair_multiplicity);
    std::map<JournalPair, std::int64_t> observed;
    for (const auto& [key, count] : y.count_pairs(y.slot_journal())) observed.emplace(y.decode(key), count);
    std::map<JournalPair, PairStat> stats;
    if (!observed.empty()) {
      const auto null = null_from_year(y, options.runs, options.seed, options.pair_multiplicity, options.threads, {});
      for (auto& s : pair_z(year, observed, null)) {
        if (!s.defined) ++run.n_undefined_pairs;
        stats.emplace(s.pair, std::move(s));
      }
    }
    // Scoring is per-work independent; slots are indexed so order is fixed.
    std::vector<int> status(members.size(), 0);
    parallel_for(members.size(), options.threads, [&](std::size_t k) {
      const auto& w = corpus[members[k]];
      auto r = novelty_score(w, journal_of, stats, options);
      if (r) {
        per_work[members[k]] = std::move(r);
      } else {
        status[k] = paper_pairs(w, journal_of, options.pair_multiplicity).empty() ? 1 : 2;
      }
    });
    for (int s : status) {
      if (s == 1) ++run.n_without_pairs;
      if (s == 2) ++run.n_all_undefined;
    }
  }
  for (auto& r : per_work) {
    if (r) run.results.push_back(std::move(*r));
  }
  return run;
}

}  // namespace fmx
