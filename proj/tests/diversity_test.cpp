#include <gtest/gtest.h>

#include <random>

#include "fmx/diversity.hpp"
#include "support.hpp"

namespace fmx {
namespace {

using test::work;

FieldDistanceMatrix matrix_of(std::vector<SubfieldId> ids, std::vector<double> d) {
  FieldDistanceMatrix m;
  m.subfield_ids = std::move(ids);
  m.d = std::move(d);
  return m;
}

// Plain double loop over every ordered (i, j), diagonal included.
double double_loop(const std::vector<double>& p, const std::vector<std::vector<double>>& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) s += d[i][j] * p[i] * p[j];
  }
  return s;
}

TEST(RaoStirlingScore, SingleFieldIsZero) {
  const auto m = matrix_of({1101}, {0.0});
  const std::vector<std::pair<SubfieldId, double>> p = {{1101, 1.0}};
  EXPECT_EQ(rao_stirling_score(p, m), 0.0);
}

TEST(RaoStirlingScore, TwoEqualFields) {
  const auto m = matrix_of({1101, 1102}, {0.0, 0.2, 0.2, 0.0});
  const std::vector<std::pair<SubfieldId, double>> p = {{1101, 0.5}, {1102, 0.5}};
  EXPECT_NEAR(rao_stirling_score(p, m), 0.1, 1e-15);
  EXPECT_NEAR(rao_stirling_score(p, m, PairSummation::unordered), 0.05, 1e-15);
}

TEST(RaoStirlingScore, ThreeFieldsMatchDoubleLoop) {
  const std::vector<std::vector<double>> d = {{0, 0.4, 0.9}, {0.4, 0, 0.7}, {0.9, 0.7, 0}};
  const auto m = matrix_of({1101, 1102, 2201}, {0, 0.4, 0.9, 0.4, 0, 0.7, 0.9, 0.7, 0});
  const std::vector<std::pair<SubfieldId, double>> p = {{1101, 0.5}, {1102, 0.3}, {2201, 0.2}};
  EXPECT_NEAR(rao_stirling_score(p, m), double_loop({0.5, 0.3, 0.2}, d), 1e-12);
  EXPECT_NEAR(rao_stirling_score(p, m), 0.384, 1e-12);
}

TEST(RaoStirlingScore, UnknownSubfieldThrows) {
  const auto m = matrix_of({1101}, {0.0});
  const std::vector<std::pair<SubfieldId, double>> p = {{9999, 1.0}};
  EXPECT_THROW(rao_stirling_score(p, m), std::out_of_range);
}

// Random symmetric distances and proportions: score agrees with the double
// loop, is bounded by 1 - sum p^2, and does not depend on input order.
TEST(RaoStirlingScore, RandomInstancesProperty) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<SubfieldId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<SubfieldId>(1000 + 7 * i);
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    std::vector<double> flat(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        d[i][j] = d[j][i] = u(rng);
        flat[i * n + j] = flat[j * n + i] = d[i][j];
      }
    }
    std::vector<double> p(n);
    double total = 0.0;
    for (auto& x : p) total += (x = u(rng) + 1e-3);
    double hhi = 0.0;
    std::vector<std::pair<SubfieldId, double>> props;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] /= total;
      hhi += p[i] * p[i];
      props.emplace_back(ids[i], p[i]);
    }
    const auto m = matrix_of(ids, flat);
    const double s = rao_stirling_score(props, m);
    EXPECT_NEAR(s, double_loop(p, d), 1e-12);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0 - hhi + 1e-12);
    std::shuffle(props.begin(), props.end(), rng);
    EXPECT_NEAR(rao_stirling_score(props, m), s, 1e-12);
  }
}

TEST(Distances, CosineComplementWithIsolatedRowsAtOne) {
  FieldMatrix fm;
  fm.subfield_ids = {1, 2, 3, 4};
  fm.values = {1, 0, 0, 0,   //
               1, 1, 0, 0,   //
               2, 0, 0, 0,   //
               0, 0, 0, 0};
  fm.total = 5;
  const auto d = distances(fm);
  EXPECT_NEAR(d.at(0, 1), 1.0 - 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(d.at(0, 2), 0.0, 1e-15);
  EXPECT_EQ(d.at(0, 3), 1.0);
  EXPECT_EQ(d.at(3, 3), 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(d.at(i, j), d.at(j, i));
      EXPECT_GE(d.at(i, j), 0.0);
      EXPECT_LE(d.at(i, j), 1.0);
    }
  }
}

Corpus small_corpus() {
  // Cited works in subfields 1101 (two), 2201, and a split 1101/2201 work.
  return Corpus({work("C1", 2000, "A", {}, {{1101, 1.0}}), work("C2", 2000, "A", {}, {{1101, 1.0}}),
                 work("C3", 2000, "B", {}, {{2201, 1.0}}), work("C4", 2000, "B", {}, {{1101, 0.25}, {2201, 0.75}}),
                 work("C5", 2000, "B", {}, {}),
                 work("P1", 2001, "X", {"C1", "C2", "C3"}, {{1101, 1.0}}),
                 work("P2", 2001, "X", {"C3", "C4", "C5", "gone"}, {{2201, 1.0}}),
                 work("P3", 2001, "X", {"C1"}, {{1101, 1.0}}), work("P4", 2001, "X", {"C5"}, {{1101, 1.0}})});
}

TEST(CitationMatrix, PrimaryAndFractionalAttribution) {
  const auto c = small_corpus();
  const auto universe = subfield_universe(c);
  EXPECT_EQ(universe, (std::vector<SubfieldId>{1101, 2201}));
  const auto prim = field_citation_matrix(c, 2001, universe);
  // P1: 1101 -> {1101:2, 2201:1}; P2: 2201 -> {2201:2}; P3: 1101 -> {1101:1}.
  EXPECT_EQ(prim.at(0, 0), 3.0);
  EXPECT_EQ(prim.at(0, 1), 1.0);
  EXPECT_EQ(prim.at(1, 1), 2.0);
  EXPECT_EQ(prim.at(1, 0), 0.0);
  EXPECT_EQ(prim.total, 6.0);
  DiversityOptions frac;
  frac.attribution = Attribution::fractional;
  const auto f = field_citation_matrix(c, 2001, universe, frac);
  EXPECT_EQ(f.at(1, 0), 0.25);
  EXPECT_EQ(f.at(1, 1), 1.75);
}

TEST(ReferenceProportions, SkipsUnresolvableReferences) {
  const auto c = small_corpus();
  const WorkIndex idx(c);
  std::size_t used = 0;
  const auto p = reference_proportions(c[c.find("P2")], c, idx, Attribution::fractional, &used);
  EXPECT_EQ(used, 2u);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p[0].second, 0.125, 1e-15);
  EXPECT_NEAR(p[1].second, 0.875, 1e-15);
  EXPECT_TRUE(reference_proportions(c[c.find("P4")], c, idx, Attribution::primary).empty());
}

TEST(ComputeRaoStirling, ScoresAndCountsUnresolvable) {
  const auto c = small_corpus();
  DiversityOptions opts;
  opts.min_links = 1;
  const auto run = compute_rao_stirling(c, opts);
  EXPECT_EQ(run.n_subfields, 2u);
  // C1..C5 have no references, P4 cites only an unclassified work.
  EXPECT_EQ(run.n_unresolvable, 6u);
  ASSERT_EQ(run.results.size(), 3u);
  const auto& d = run.matrices.at(2001);
  const double d12 = d.at(0, 1);
  EXPECT_NEAR(run.results[0].score, 2.0 * d12 * (2.0 / 3.0) * (1.0 / 3.0), 1e-15);  // P1
  EXPECT_EQ(run.results[2].score, 0.0);                                            // P3, one field
  EXPECT_EQ(run.results[2].n_fields, 1u);
  EXPECT_FALSE(d.pooled);
}

TEST(ComputeRaoStirling, SparseYearsPoolNeighbours) {
  const auto c = small_corpus();
  DiversityOptions opts;
  opts.min_links = 1000;
  const auto run = compute_rao_stirling(c, opts);
  EXPECT_TRUE(run.matrices.at(2001).pooled);
  EXPECT_TRUE(run.results[0].pooled_window);
  // 2000 has no links of its own; pooling borrows 2001's.
  EXPECT_TRUE(run.matrices.at(2000).pooled);
  EXPECT_EQ(run.matrices.at(2000).at(0, 1), run.matrices.at(2001).at(0, 1));
}

TEST(ComputeRaoStirling, IdenticalAcrossThreadCounts) {
  std::mt19937_64 rng(4);
  std::vector<WorkRecord> works;
  const SubfieldId subs[] = {1101, 1102, 2201, 3104, 3105};
  for (int i = 0; i < 300; ++i) {
    std::vector<std::string> refs;
    for (int r = 0; r < 6 && i > 0; ++r) {
      auto id = "W" + std::to_string(rng() % static_cast<std::uint64_t>(i));
      if (std::find(refs.begin(), refs.end(), id) == refs.end()) refs.push_back(id);
    }
    works.push_back(work("W" + std::to_string(i), 2000 + i / 60, "J", refs, {{subs[rng() % 5], 1.0}}));
  }
  const Corpus c(std::move(works));
  DiversityOptions one;
  one.min_links = 100;
  DiversityOptions four = one;
  four.threads = 4;
  const auto a = compute_rao_stirling(c, one);
  const auto b = compute_rao_stirling(c, four);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) EXPECT_EQ(a.results[i].score, b.results[i].score);
}

}  // namespace
}  // namespace fmx
