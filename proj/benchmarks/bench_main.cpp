#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "fmx/corpus_store.hpp"
#include "fmx/diversity.hpp"
#include "fmx/hdfe.hpp"
#include "fmx/novelty.hpp"
#include "fmx/synth.hpp"

namespace {

using namespace fmx;

// n rows over author x year x field groups, k regressors.
struct Panel {
  Eigen::MatrixXd X;
  std::vector<std::vector<std::int32_t>> groups;
  std::vector<std::int32_t> n_groups;
};

Panel make_panel(std::size_t n, std::int32_t authors, Eigen::Index k) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  Panel p;
  p.n_groups = {authors, 20, 26};
  p.groups.assign(3, std::vector<std::int32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < 3; ++d) p.groups[d][i] = static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(p.n_groups[d]));
  }
  p.X.resize(static_cast<Eigen::Index>(n), k);
  for (Eigen::Index i = 0; i < p.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < k; ++j) p.X(i, j) = normal(rng) + 0.1 * (p.groups[0][static_cast<std::size_t>(i)] % 7);
  }
  return p;
}

void BM_AbsorbFe(benchmark::State& state) {
  const auto p = make_panel(static_cast<std::size_t>(state.range(0)), static_cast<std::int32_t>(state.range(0) / 20), 12);
  for (auto _ : state) {
    Eigen::MatrixXd m = p.X;
    absorb_fe(m, p.groups, p.n_groups, nullptr);
    benchmark::DoNotOptimize(m.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AbsorbFe)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);

const SynthCorpus& synth_corpus() {
  static const SynthCorpus s = [] {
    SynthConfig c;
    c.n_papers = 20000;
    return gen_corpus(c);
  }();
  return s;
}

void BM_RewireNull(benchmark::State& state) {
  const Corpus corpus(synth_corpus().works);
  const int year = corpus[corpus.size() - 1].year;
  for (auto _ : state) {
    auto null = rewire_null(corpus, year, static_cast<int>(state.range(0)), 1);
    benchmark::DoNotOptimize(null.size());
  }
}
BENCHMARK(BM_RewireNull)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_RaoStirling(benchmark::State& state) {
  const Corpus corpus(synth_corpus().works);
  for (auto _ : state) {
    auto run = compute_rao_stirling(corpus);
    benchmark::DoNotOptimize(run.results.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus.size()));
}
BENCHMARK(BM_RaoStirling)->Unit(benchmark::kMillisecond);

void BM_Ingest(benchmark::State& state) {
  std::ostringstream out;
  write_works_jsonl(out, synth_corpus().works);
  const std::string text = out.str();
  for (auto _ : state) {
    std::istringstream in(text);
    auto r = ingest(in);
    benchmark::DoNotOptimize(r.corpus.size());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_Ingest)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
