#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fmx/work_record.hpp"

namespace fmx {

// Unordered journal pair stored canonically (lo < hi).
struct JournalPair {
  std::string lo;
  std::string hi;

  static JournalPair of(std::string a, std::string b);
  auto operator<=>(const JournalPair&) const = default;
  bool operator==(const JournalPair&) const = default;
};

struct NullMoments {
  double mean = 0.0;
  double std = 0.0;
};

struct PairStat {
  int year = 0;
  JournalPair pair;
  std::int64_t observed = 0;
  double null_mean = 0.0;
  double null_std = 0.0;
  double z = 0.0;
  bool defined = false;  // false when null_std == 0 or the pair never forms under the null
};

struct NoveltyResult {
  std::string work_id;
  int year = 0;
  double ns = 0.0;
  bool is_novel = false;
  std::size_t n_pairs = 0;      // pairs with a defined z
  std::size_t n_undefined = 0;  // pairs excluded because their z is undefined
};

struct TermNoveltyResult {
  std::string work_id;
  bool new_word = false;
  bool new_phrase = false;

  friend bool operator==(const TermNoveltyResult&, const TermNoveltyResult&) = default;
};

enum class PercentileRule { nearest_rank, linear };

struct NoveltyOptions {
  int runs = 10;
  std::uint64_t seed = 20250101;
  PercentileRule percentile_rule = PercentileRule::nearest_rank;
  bool pair_multiplicity = false;  // count every cross-journal reference pair
  unsigned threads = 1;
};

using JournalLookup = std::function<const std::string*(std::string_view work_id)>;

/// Journal pairs formed by one paper's references. References without a
/// known journal are dropped. Distinct-journal mode yields each pair once;
/// multiplicity mode yields one pair per pair of reference slots.
std::vector<JournalPair> paper_pairs(const WorkRecord& work, const JournalLookup& journal_of,
                                     bool multiplicity = false);

/// Corpus-wide lookups shared by every CoCitationYear of one corpus.
class CoCitationContext {
 public:
  explicit CoCitationContext(const Corpus& corpus);
  const Corpus& corpus() const noexcept { return *corpus_; }
  const WorkIndex& index() const noexcept { return index_; }
  const std::vector<std::string>& journals() const noexcept { return journals_; }
  std::uint32_t journal_index(std::string_view journal) const { return journal_index_.at(journal); }

 private:
  const Corpus* corpus_;
  WorkIndex index_;
  std::vector<std::string> journals_;  // sorted; index order == string order
  std::unordered_map<std::string_view, std::uint32_t> journal_index_;
};

/// Reference slots of all papers published in one year, with journals interned
/// and each slot tagged by its stratum (cited-work publication year; 0 pools
/// cited works without a year).
class CoCitationYear {
 public:
  CoCitationYear(const Corpus& corpus, int year, bool multiplicity = false);
  CoCitationYear(const CoCitationContext& ctx, std::span<const std::uint32_t> works_in_year, int year,
                 bool multiplicity = false);

  int year() const noexcept { return year_; }
  std::size_t n_papers() const noexcept { return papers_.size(); }
  std::size_t n_slots() const noexcept { return slot_journal_.size(); }
  std::span<const std::uint32_t> papers() const noexcept { return papers_; }
  std::span<const std::uint32_t> slot_offsets() const noexcept { return slot_offsets_; }
  std::span<const std::uint32_t> slot_journal() const noexcept { return slot_journal_; }
  std::span<const int> slot_stratum() const noexcept { return slot_stratum_; }
  const std::vector<std::string>& journals() const noexcept { return journals_; }

  // Pair tally (key = lo << 32 | hi over interned journal indices) for a
  // given assignment of journals to slots.
  std::map<std::uint64_t, std::int64_t> count_pairs(std::span<const std::uint32_t> assignment) const;

  // Permutes journal labels within each stratum in place.
  template <class Rng>
  void permute(std::vector<std::uint32_t>& assignment, Rng& rng) const;

  JournalPair decode(std::uint64_t key) const;

 private:
  int year_;
  bool multiplicity_;
  std::vector<std::uint32_t> papers_;        // corpus indices
  std::vector<std::uint32_t> slot_offsets_;  // size n_papers + 1
  std::vector<std::uint32_t> slot_journal_;
  std::vector<int> slot_stratum_;
  std::vector<std::vector<std::uint32_t>> strata_;  // slot positions per stratum, ascending stratum key
  std::vector<std::string> journals_;               // sorted; index order == string order
};

/// Per-run RNG seed derived from (master seed, year, run index).
std::uint64_t run_seed(std::uint64_t master, int year, std::uint64_t run) noexcept;

std::map<JournalPair, std::int64_t> observed_counts(const Corpus& corpus, int year, bool multiplicity = false);

using RewireObserver = std::function<void(const CoCitationYear&, std::span<const std::uint32_t> assignment)>;

/// Monte-Carlo null: pair-count mean and sample std (denominator runs-1)
/// over `runs` stratified permutations. Pairs that never form are absent.
/// The observer, when set, sees every permuted assignment (it may be
/// invoked concurrently when threads > 1).
std::map<JournalPair, NullMoments> rewire_null(const Corpus& corpus, int year, int runs, std::uint64_t seed,
                                               bool multiplicity = false, unsigned threads = 1,
                                               const RewireObserver& observer = {});

std::vector<PairStat> pair_z(int year, const std::map<JournalPair, std::int64_t>& observed,
                             const std::map<JournalPair, NullMoments>& null);

/// Percentile of an ascending-sorted sample at fraction q.
double percentile(std::span<const double> sorted, double q, PercentileRule rule);

/// NS for one paper; nullopt when it has no pair with a defined z.
std::optional<NoveltyResult> novelty_score(const WorkRecord& work, const JournalLookup& journal_of,
                                           const std::map<JournalPair, PairStat>& stats,
                                           const NoveltyOptions& options = {});

struct NoveltyRun {
  std::vector<NoveltyResult> results;  // ascending work_id
  std::size_t n_without_pairs = 0;     // fewer than two distinct known journals
  std::size_t n_all_undefined = 0;     // pairs exist but none has a defined z
  std::size_t n_undefined_pairs = 0;   // year-level pair stats with undefined z
};

/// Scores every work in the corpus (all years).
NoveltyRun compute_novelty(const Corpus& corpus, const NoveltyOptions& options);

/// First-use word/phrase flags. Words are title tokens of at least three
/// characters; phrases are adjacent word bigrams. A term is new for a work
/// when no work from a strictly earlier year used it.
std::vector<TermNoveltyResult> detect_new_terms(const Corpus& corpus);

// ---------------------------------------------------------------------------

template <class Rng>
void CoCitationYear::permute(std::vector<std::uint32_t>& assignment, Rng& rng) const {
  for (const auto& positions : strata_) {
    // Fisher-Yates over the stratum's slot positions; bounded draws by
    // rejection so the stream is identical across standard libraries.
    for (std::size_t i = positions.size(); i > 1; --i) {
      const std::uint64_t bound = i;
      const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
      std::uint64_t r;
      do {
        r = rng();
      } while (r >= limit);
      const std::size_t j = static_cast<std::size_t>(r % bound);
      std::swap(assignment[positions[i - 1]], assignment[positions[j]]);
    }
  }
}

}  // namespace fmx
