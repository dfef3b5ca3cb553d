// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
//   fmx_acceptance [--work-dir DIR] [--only 1,5,9]

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include "fmx/corpus_store.hpp"
#include "fmx/csv.hpp"
#include "fmx/diversity.hpp"
#include "fmx/hdfe.hpp"
#include "fmx/margins.hpp"
#include "fmx/novelty.hpp"
#include "fmx/oracle.hpp"
#include "fmx/pipeline.hpp"
#include "fmx/synth.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace fmx;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------

Outcome linear_oracle() {
  test::DesignShape shape;  // 200 rows, 20 x 5 x 4
  double worst_b = 0.0, worst_se = 0.0, worst_t = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Design d = test::random_design(seed, shape);
    const auto t0 = Clock::now();
    const auto fit = fit_linear(d);
    worst_t = std::max(worst_t, seconds_since(t0));
    const auto ols = oracle::dense_ols(d);
    for (std::size_t j = 0; j < ols.beta.size(); ++j) {
      worst_b = std::max(worst_b, std::abs(fit.beta[static_cast<Eigen::Index>(j)] - ols.beta[j]));
      worst_se = std::max(worst_se, std::abs(fit.coefficients[j].std_error - ols.se[j]));
    }
  }
  return {worst_b <= 1e-8 && worst_se <= 1e-8 && worst_t < 1.0,
          fmt::format("max |dbeta|={:.2e} max |dse|={:.2e} slowest fit {:.3f}s over 10 designs", worst_b, worst_se,
                      worst_t)};
}

Outcome logit_oracle() {
  test::DesignShape shape;
  shape.n = 500;
  shape.levels = {25, 4};
  shape.binary = true;
  double worst_b = 0.0, worst_t = 0.0;
  bool r2_ok = true, prune_ok = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Design d = test::random_design(seed, shape);
    const auto t0 = Clock::now();
    const auto fit = fit_logit_fe(d);
    worst_t = std::max(worst_t, seconds_since(t0));
    const auto keep = oracle::prune_separated(d);
    prune_ok = prune_ok && keep.size() == fit.n_obs_used && keep == prune_separated(d).keep;
    const auto dense = oracle::dense_logit(d.subset(keep));
    for (std::size_t j = 0; j < dense.beta.size(); ++j) {
      worst_b = std::max(worst_b, std::abs(fit.beta[static_cast<Eigen::Index>(j)] - dense.beta[j]));
    }
    r2_ok = r2_ok && fit.pseudo_r2 >= 0.0 && fit.pseudo_r2 < 1.0;
  }
  return {worst_b <= 1e-6 && r2_ok && prune_ok && worst_t < 5.0,
          fmt::format("max |dbeta|={:.2e} pseudo-R2 in [0,1): {} identical pruning: {} slowest fit {:.3f}s", worst_b,
                      r2_ok ? "yes" : "no", prune_ok ? "yes" : "no", worst_t)};
}

// Small citing years whose strata hold at most 8 slots.
Corpus null_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<WorkRecord> works;
  const char* journals[] = {"A", "B", "C", "D"};
  for (int i = 0; i < 8; ++i) works.push_back(test::work("C" + std::to_string(i), 1998 + i % 2, journals[rng() % 4]));
  const int n_citing = 2 + static_cast<int>(rng() % 3);
  for (int p = 0; p < n_citing; ++p) {
    std::vector<std::string> refs;
    const int k = 1 + static_cast<int>(rng() % 3);
    while (static_cast<int>(refs.size()) < k) {
      auto r = "C" + std::to_string(rng() % 8);
      if (std::find(refs.begin(), refs.end(), r) == refs.end()) refs.push_back(r);
    }
    works.push_back(test::work("P" + std::to_string(p), 2000, "Z", refs));
  }
  return Corpus(std::move(works));
}

Outcome null_exactness() {
  constexpr int kRuns = 100000;
  double worst = 0.0;
  std::size_t fixtures = 0, runs_checked = 0, violations = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const Corpus c = null_fixture(seed);
    const CoCitationYear ref(c, 2000);
    std::map<std::pair<int, std::uint32_t>, int> stratum_counts;
    for (std::size_t s = 0; s < ref.n_slots(); ++s) ++stratum_counts[{ref.slot_stratum()[s], ref.slot_journal()[s]}];
    for (bool multiplicity : {false, true}) {
      const auto exact = oracle::exhaustive_null(c, 2000, multiplicity);
      std::mutex mu;
      const auto mc = rewire_null(c, 2000, kRuns, 1000 + seed, multiplicity, 1,
                                  [&](const CoCitationYear& y, std::span<const std::uint32_t> a) {
                                    std::map<std::pair<int, std::uint32_t>, int> got;
                                    for (std::size_t s = 0; s < a.size(); ++s) ++got[{y.slot_stratum()[s], a[s]}];
                                    const bool ok = got == stratum_counts && a.size() == ref.n_slots() &&
                                                    y.slot_offsets().size() == ref.n_papers() + 1;
                                    std::lock_guard lock(mu);
                                    ++runs_checked;
                                    violations += !ok;
                                  });
      for (const auto& [pair, m] : exact) {
        const auto it = mc.find(JournalPair::of(pair.first, pair.second));
        const double mean = it == mc.end() ? 0.0 : it->second.mean;
        const double sd = it == mc.end() ? 0.0 : it->second.std;
        worst = std::max({worst, std::abs(mean - m.mean), std::abs(sd - m.std)});
      }
      ++fixtures;
    }
  }
  return {worst <= 0.05 && violations == 0,
          fmt::format("{} fixtures x {} runs: max |moment error|={:.4f}; conservation violated in {} of {} runs",
                      fixtures, kRuns, worst, violations, runs_checked)};
}

Outcome rao_stirling_examples() {
  auto matrix = [](std::vector<SubfieldId> ids, std::vector<double> d) {
    FieldDistanceMatrix m;
    m.subfield_ids = std::move(ids);
    m.d = std::move(d);
    return m;
  };
  const double single = rao_stirling_score({{{1101, 1.0}}}, matrix({1101}, {0.0}));
  const double two = rao_stirling_score({{{1101, 0.5}, {1102, 0.5}}}, matrix({1101, 1102}, {0, 0.2, 0.2, 0}));
  const std::vector<double> p = {0.5, 0.3, 0.2};
  const std::vector<double> d = {0, 0.4, 0.9, 0.4, 0, 0.7, 0.9, 0.7, 0};
  double loop = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) loop += d[i * 3 + j] * p[i] * p[j];
  }
  const double three =
      rao_stirling_score({{{1101, 0.5}, {1102, 0.3}, {2201, 0.2}}}, matrix({1101, 1102, 2201}, d));
  return {single == 0.0 && std::abs(two - 0.1) <= 1e-12 && std::abs(three - loop) <= 1e-12,
          fmt::format("single={} two-field={:.15f} three-field={:.15f} (double loop {:.15f})", single, two, three,
                      loop)};
}

Outcome planted_recovery() {
  constexpr int kSeeds = 20;
  const auto t0 = Clock::now();
  int cover_nov = 0, cover_rs = 0, pos_nov = 0, pos_rs = 0;
  double sum_nov = 0.0, sum_rs = 0.0;
  std::size_t min_n = SIZE_MAX;
  std::vector<std::string> failures;
  for (int s = 1; s <= kSeeds; ++s) {
    SynthConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.n_papers = 50000;
    try {
      SynthCorpus synth = gen_corpus(cfg);
      Corpus corpus(std::move(synth.works));
      match_facilities(corpus, synth.facilities);
      const auto sample = expand_by_last_author(corpus);
      MetricTables metrics;
      for (const auto& t : synth.truth) metrics.overrides[t.work_id] = {t.novelty_dv, t.rs_dv};
      CovariateMaps maps;
      maps.core_journals.insert(synth.core_journals.begin(), synth.core_journals.end());
      const auto build = build_rows(corpus, sample.indices, metrics, maps);

      ModelSpec nov;
      nov.outcome = "novelty_dv";
      nov.family = Family::logit;
      ModelSpec rs;
      rs.outcome = "rs_dv";
      const auto fn = fit_model(nov, build.rows);
      const auto fr = fit_model(rs, build.rows);
      min_n = std::min(min_n, fr.n_obs_used);
      auto covers = [](const FitResult& f, double truth) {
        return std::abs(f.beta[0] - truth) <= kNormal975 * f.coefficients[0].std_error;
      };
      cover_nov += covers(fn, synth.params.beta_novelty);
      cover_rs += covers(fr, synth.params.beta_rs);
      pos_nov += fn.beta[0] > 0;
      pos_rs += fr.beta[0] > 0;
      sum_nov += fn.beta[0];
      sum_rs += fr.beta[0];
    } catch (const std::exception& e) {
      failures.push_back(fmt::format("seed {}: {}", s, e.what()));
    }
  }
  const double elapsed = seconds_since(t0);
  std::string detail = fmt::format(
      "novelty: covered {}/{} positive {}/{} mean beta {:.4f}; rs: covered {}/{} positive {}/{} mean beta {:.5f}; "
      "smallest sample {}; {:.0f}s",
      cover_nov, kSeeds, pos_nov, kSeeds, sum_nov / kSeeds, cover_rs, kSeeds, pos_rs, kSeeds, sum_rs / kSeeds, min_n,
      elapsed);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty() && cover_nov >= 17 && cover_rs >= 17 && pos_nov == kSeeds && pos_rs == kSeeds &&
              elapsed < 600.0,
          detail};
}

Outcome margins_identities() {
  auto treated = [](std::uint64_t seed, bool binary) {
    test::DesignShape shape;
    shape.n = binary ? 600 : 200;
    shape.levels = binary ? std::vector<std::int32_t>{20, 4} : std::vector<std::int32_t>{20, 5, 4};
    shape.binary = binary;
    Design d = test::random_design(seed, shape);
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) d.X(i, 0) = d.X(i, 0) > 0 ? 1.0 : 0.0;
    d.names[0] = "bsf";
    return d;
  };
  const double levels[] = {0.0, 1.0};
  double gap_err = 0.0, zero_err = 0.0, avg_err = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto lin = fit_linear(treated(seed, false));
    const auto ml = predict_margins(lin, "bsf", levels);
    gap_err = std::max(gap_err, std::abs(ml[1].avg_prediction - ml[0].avg_prediction - lin.beta[0]));

    auto logit = fit_logit_fe(treated(seed, true));
    const auto mg = predict_margins(logit, "bsf", levels);
    for (std::size_t l = 0; l < 2; ++l) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < logit.X.rows(); ++i) {
        double eta = logit.fe_value(static_cast<std::size_t>(i));
        for (Eigen::Index j = 0; j < logit.X.cols(); ++j) eta += logit.beta[j] * (j == 0 ? levels[l] : logit.X(i, j));
        s += 1.0 / (1.0 + std::exp(-eta));
      }
      avg_err = std::max(avg_err, std::abs(mg[l].avg_prediction - s / static_cast<double>(logit.X.rows())));
    }
    logit.beta[0] = 0.0;
    const auto m0 = predict_margins(logit, "bsf", levels);
    zero_err = std::max(zero_err, std::abs(m0[1].avg_prediction - m0[0].avg_prediction));
  }
  return {gap_err <= 1e-12 && zero_err <= 1e-12 && avg_err <= 1e-10,
          fmt::format("linear |gap - beta|={:.2e}; logit zero-effect gap={:.2e}; row-average error={:.2e}", gap_err,
                      zero_err, avg_err)};
}

Config small_synth_config(const fs::path& dir) {
  Config c = Config::parse(
      "synth.seed=11\nsynth.n_papers=4000\nsynth.n_authors=120\nsynth.n_journals=120\nnovelty.runs=20\n"
      "diversity.min_links=100\n");
  c.set("covariates.core_journals", (dir / "core_journals.txt").string());
  return c;
}

void run_all(const fs::path& dir, unsigned threads) {
  fs::remove_all(dir);
  PipelineOptions o;
  o.out_dir = dir;
  o.config = small_synth_config(dir);
  o.threads = threads;
  Pipeline p(o);
  p.synth();
  p.all(p.path("works.jsonl"), p.path("facilities.csv"));
}

std::string without_timings(const std::string& manifest) {
  std::istringstream in(manifest);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.find("\"seconds\"") == std::string::npos) out += line + "\n";
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  const unsigned counts[] = {1, 4, 16};
  // Same directory for every run so configured paths, and so the config hash, agree.
  for (unsigned t : counts) {
    run_all(work / "det_run", t);
    fs::remove_all(work / fmt::format("det_t{}", t));
    fs::rename(work / "det_run", work / fmt::format("det_t{}", t));
  }
  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::directory_iterator(work / "det_t1")) {
    const auto name = entry.path().filename().string();
    std::string base = test::read_file(entry.path());
    if (name == "manifest.json") base = without_timings(base);
    ++files;
    for (unsigned t : counts) {
      const fs::path other = work / fmt::format("det_t{}", t) / name;
      std::string text = fs::exists(other) ? test::read_file(other) : std::string("<missing>");
      if (name == "manifest.json") text = without_timings(text);
      if (text != base) differing.push_back(fmt::format("{} (threads {})", name, t));
    }
  }
  std::string detail = fmt::format("{} output files compared across 1/4/16 threads", files);
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty() && files > 10, detail};
}

Outcome end_to_end_shape(const fs::path& work) {
  const fs::path dir = work / "det_t1";
  std::vector<std::string> problems;
  auto need = [&](const std::string& name, std::vector<std::string> columns, std::size_t min_rows) {
    if (!fs::exists(dir / name)) {
      problems.push_back(name + " missing");
      return CsvTable{};
    }
    const auto t = read_csv(dir / name);
    for (const auto& c : columns) {
      if (!t.has_column(c)) problems.push_back(name + " lacks column " + c);
    }
    if (t.rows.size() < min_rows) problems.push_back(fmt::format("{} has {} rows", name, t.rows.size()));
    return t;
  };
  need("table2.csv", {"term"}, 10);
  need("table3.csv", {"term"}, 10);
  need("margins_main_novelty.csv", {"level", "avg_prediction", "ci_low", "ci_high"}, 2);
  need("margins_main_rs.csv", {"level", "avg_prediction", "ci_low", "ci_high"}, 2);
  need("hetero_decade.csv", {"outcome", "decade", "n_rows", "status"}, 2);
  const auto dom = need("hetero_domain.csv", {"outcome", "domain", "n_rows", "status"}, 8);

  // Domain groups partition the rows carrying each outcome.
  std::map<std::string, std::size_t> expected;
  if (fs::exists(dir / "rows.csv")) {
    for (const auto& r : read_rows_csv(dir / "rows.csv")) {
      expected["novelty"] += r.novelty_dv.has_value();
      expected["rao_stirling"] += r.rs_dv.has_value();
    }
  }
  std::map<std::string, std::size_t> summed;
  std::set<std::pair<std::string, std::string>> seen;
  if (!dom.rows.empty()) {
    const auto c_out = dom.column("outcome"), c_dom = dom.column("domain"), c_n = dom.column("n_rows");
    for (const auto& r : dom.rows) {
      if (seen.insert({r[c_out], r[c_dom]}).second) summed[r[c_out]] += static_cast<std::size_t>(std::stoull(r[c_n]));
    }
  }
  for (const auto& [outcome, n] : expected) {
    if (summed[outcome] != n) problems.push_back(fmt::format("{}: domains sum to {} of {} rows", outcome, summed[outcome], n));
  }
  std::string detail = fmt::format("domain rows: novelty {}/{}, rao_stirling {}/{}", summed["novelty"],
                                   expected["novelty"], summed["rao_stirling"], expected["rao_stirling"]);
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && !expected.empty(), detail};
}

// Runs fn in a child process; the child's stdout line comes back as text.
std::string in_child(const std::function<std::string()>& fn) {
  int fds[2];
  if (pipe(fds) != 0) return "pipe failed";
  const pid_t pid = fork();
  if (pid == 0) {
    close(fds[0]);
    std::string msg;
    try {
      msg = fn();
    } catch (const std::exception& e) {
      msg = std::string("error: ") + e.what();
    }
    [[maybe_unused]] auto n = write(fds[1], msg.data(), msg.size());
    close(fds[1]);
    _exit(0);
  }
  close(fds[1]);
  std::string out;
  char buf[512];
  ssize_t n;
  while ((n = read(fds[0], buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
  close(fds[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  return out;
}

Outcome ingest_scale(const fs::path& work) {
  const fs::path file = work / "scale.jsonl";
  const std::string gen = in_child([&] {
    SynthConfig cfg;
    cfg.seed = 3;
    cfg.n_papers = 1'000'000;
    cfg.n_authors = 20000;
    cfg.n_years = 20;
    cfg.start_year = 2000;
    const auto s = gen_corpus(cfg);
    std::ofstream out(file, std::ios::binary);
    write_works_jsonl(out, s.works);
    return std::string("ok");
  });
  if (gen != "ok") return {false, "generation failed: " + gen};
  const std::string res = in_child([&] {
    IngestOptions opts;
    opts.threads = std::max(1u, std::thread::hardware_concurrency());
    const auto t0 = Clock::now();
    const auto r = ingest_file(file, opts);
    const double secs = seconds_since(t0);
    rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    return fmt::format("{} {} {:.3f} {}", r.report.n_lines, r.corpus.size(), secs, ru.ru_maxrss);
  });
  fs::remove(file);
  std::size_t lines = 0, works = 0;
  double secs = 0.0;
  long rss_kb = 0;
  if (std::sscanf(res.c_str(), "%zu %zu %lf %ld", &lines, &works, &secs, &rss_kb) != 4) {
    return {false, "ingest failed: " + res};
  }
  const double rss_gb = static_cast<double>(rss_kb) / (1024.0 * 1024.0);
  return {lines == 1'000'000 && works == lines && secs < 60.0 && rss_gb < 4.0,
          fmt::format("{} lines -> {} works in {:.1f}s, peak RSS {:.2f} GB", lines, works, secs, rss_gb)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "fmx_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: fmx_acceptance [--work-dir DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"hdfe linear matches dense OLS", linear_oracle},
      {"hdfe logit matches dense logit", logit_oracle},
      {"rewired null matches exhaustive enumeration", null_exactness},
      {"rao-stirling hand examples", rao_stirling_examples},
      {"planted effects recovered", planted_recovery},
      {"margins identities", margins_identities},
      {"pipeline output identical across thread counts", [&] { return determinism(work); }},
      {"end-to-end output shape", [&] { return end_to_end_shape(work); }},
      {"1M-line ingest time and memory", [&] { return ingest_scale(work); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    // Shape checks read the determinism run's outputs.
    if (id == 8 && !only.empty() && !only.contains(7) && !fs::exists(work / "det_t1")) {
      run_all(work / "det_run", 1);
      fs::rename(work / "det_run", work / "det_t1");
    }
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << fmt::format("[{}] {} {}: {} ({:.1f}s)", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail,
                             seconds_since(t0))
              << std::endl;
  }
  return failed ? 1 : 0;
}
