#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "fmx/corpus_store.hpp"
#include "fmx/errors.hpp"
#include "fmx/synth.hpp"
#include "support.hpp"

namespace fmx {
namespace {

SynthConfig small_config(std::uint64_t seed = 7) {
  SynthConfig c;
  c.seed = seed;
  c.n_papers = 800;
  c.n_authors = 60;
  c.n_journals = 60;
  return c;
}

std::string jsonl_of(const SynthCorpus& s) {
  std::ostringstream out;
  write_works_jsonl(out, s.works);
  return out.str();
}

TEST(Synth, DeterministicForSeed) {
  const auto a = gen_corpus(small_config());
  const auto b = gen_corpus(small_config());
  EXPECT_EQ(jsonl_of(a), jsonl_of(b));
  EXPECT_EQ(a.facilities, b.facilities);
  EXPECT_NE(jsonl_of(a), jsonl_of(gen_corpus(small_config(8))));
}

TEST(Synth, ValidatesConfig) {
  auto c = small_config();
  c.bsf_share = 1.0;
  EXPECT_THROW(gen_corpus(c), InputError);
  c = small_config();
  c.max_refs = c.min_refs - 1;
  EXPECT_THROW(gen_corpus(c), InputError);
  c = small_config();
  c.max_coauthors = c.n_authors;
  EXPECT_THROW(gen_corpus(c), InputError);
  c = small_config();
  c.n_papers = 3;
  EXPECT_THROW(gen_corpus(c), InputError);
  c.n_papers = 0;
  EXPECT_TRUE(gen_corpus(c).works.empty());
}

TEST(Synth, TruthFollowsPlantedEquations) {
  const auto s = gen_corpus(small_config());
  ASSERT_EQ(s.truth.size(), s.works.size());
  std::size_t n_bsf = 0;
  for (const auto& t : s.truth) {
    EXPECT_DOUBLE_EQ(t.eta_novelty, novelty_eta(s.params, t));
    EXPECT_DOUBLE_EQ(t.p_novelty, 1.0 / (1.0 + std::exp(-t.eta_novelty)));
    EXPECT_DOUBLE_EQ(t.mu_rs, rs_mean(s.params, t));
    EXPECT_EQ(t.bsf, t.n_facilities > 0);
    n_bsf += t.bsf;
  }
  EXPECT_NEAR(static_cast<double>(n_bsf) / static_cast<double>(s.truth.size()), 0.3, 0.05);
  EXPECT_EQ(s.params.beta_novelty, 0.084);
  EXPECT_EQ(s.params.beta_rs, 0.003);
}

TEST(Synth, WorksIngestAndFacilitiesMatch) {
  const auto s = gen_corpus(small_config());
  std::istringstream in(jsonl_of(s));
  auto r = ingest(in);
  EXPECT_EQ(r.corpus.size(), s.works.size());
  EXPECT_EQ(r.report.n_parse_errors, 0u);
  EXPECT_EQ(r.report.n_dropped_refs, 0u);
  std::ostringstream fac;
  write_facility_csv(fac, s.facilities);
  std::istringstream fac_in(fac.str());
  const auto entries = parse_facility_csv(fac_in);
  EXPECT_EQ(entries.size(), s.facilities.size());
  const auto m = match_facilities(r.corpus, entries);
  EXPECT_TRUE(m.unmatched.empty());
  std::size_t n_bsf = 0;
  for (const auto& t : s.truth) n_bsf += t.bsf;
  std::size_t n_annotated = 0;
  for (const auto& w : r.corpus.works()) n_annotated += !w.facility_ids.empty();
  EXPECT_EQ(n_annotated, n_bsf);
}

TEST(Synth, ReferencesPointBackwardInTime) {
  const auto s = gen_corpus(small_config());
  std::map<std::string, int> year;
  for (const auto& w : s.works) year[w.work_id] = w.year;
  for (const auto& w : s.works) {
    const std::set<std::string> unique(w.referenced_work_ids.begin(), w.referenced_work_ids.end());
    EXPECT_EQ(unique.size(), w.referenced_work_ids.size());
    for (const auto& r : w.referenced_work_ids) {
      ASSERT_TRUE(year.count(r));
      EXPECT_LE(year[r], w.year);
      EXPECT_LT(r, w.work_id);
    }
  }
}

TEST(Synth, CoreJournalsEveryTenth) {
  const auto s = gen_corpus(small_config());
  EXPECT_EQ(s.core_journals.size(), 6u);
  EXPECT_EQ(s.core_journals.front(), "S00001");
  EXPECT_EQ(s.core_journals[1], "S00011");
  std::ostringstream out;
  write_core_journals(out, s);
  EXPECT_EQ(out.str().substr(0, 14), "S00001\nS00011\n");
}

TEST(Synth, OverridesRoundTripThroughTruthCsv) {
  const auto s = gen_corpus(small_config());
  test::TempDir dir("synth");
  {
    std::ofstream out(dir / "truth.csv");
    write_truth_csv(out, s);
  }
  const auto o = read_outcome_overrides(dir / "truth.csv");
  ASSERT_EQ(o.size(), s.truth.size());
  for (const auto& t : s.truth) {
    const auto& e = o.at(t.work_id);
    EXPECT_EQ(*e.novelty_dv, t.novelty_dv);
    EXPECT_DOUBLE_EQ(*e.rs_dv, t.rs_dv);
  }
  test::write_file(dir / "bad.csv", "work_id,other\nW1,3\n");
  EXPECT_THROW(read_outcome_overrides(dir / "bad.csv"), InputError);
}

}  // namespace
}  // namespace fmx
