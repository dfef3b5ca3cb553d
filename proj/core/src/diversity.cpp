#include "fmx/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fmx/parallel.hpp"

namespace fmx {

namespace {

std::optional<std::size_t> find_id(const std::vector<SubfieldId>& ids, SubfieldId id) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

// (index into universe, weight) pairs describing one work's subfield mass.
std::vector<std::pair<std::size_t, double>> attribution_of(const WorkRecord& w, const std::vector<SubfieldId>& ids,
                                                           Attribution mode) {
  std::vector<std::pair<std::size_t, double>> out;
  if (w.subfield_shares.empty()) return out;
  if (mode == Attribution::primary) {
    if (auto i = find_id(ids, w.primary_subfield())) out.emplace_back(*i, 1.0);
    return out;
  }
  for (const auto& s : w.subfield_shares) {
    if (auto i = find_id(ids, s.subfield)) out.emplace_back(*i, s.weight);
  }
  return out;
}

}  // namespace

std::optional<std::size_t> FieldMatrix::index_of(SubfieldId id) const { return find_id(subfield_ids, id); }
std::optional<std::size_t> FieldDistanceMatrix::index_of(SubfieldId id) const { return find_id(subfield_ids, id); }

std::vector<SubfieldId> subfield_universe(const Corpus& corpus) {
  std::vector<SubfieldId> ids;
  for (const auto& w : corpus.works()) {
    for (const auto& s : w.subfield_shares) ids.push_back(s.subfield);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

namespace {

// One pass over the corpus filling the matrix of every requested year.
std::map<int, FieldMatrix> year_matrices(const Corpus& corpus, const WorkIndex& index, const std::vector<int>& years,
                                         std::span<const SubfieldId> universe, const DiversityOptions& options) {
  std::map<int, FieldMatrix> out;
  for (int y : years) {
    FieldMatrix m;
    m.year = y;
    m.subfield_ids.assign(universe.begin(), universe.end());
    m.values.assign(m.n() * m.n(), 0.0);
    out.emplace(y, std::move(m));
  }
  const std::size_t n = universe.size();
  std::vector<double> cited_mass(n);
  std::vector<std::size_t> touched;
  for (const auto& w : corpus.works()) {
    auto it = out.find(w.year);
    if (it == out.end()) continue;
    FieldMatrix& m = it->second;
    const auto citing = attribution_of(w, m.subfield_ids, options.attribution);
    if (citing.empty()) continue;
    for (auto k : touched) cited_mass[k] = 0.0;
    touched.clear();
    double links = 0.0;
    for (const auto& ref : w.referenced_work_ids) {
      const auto r = index.find(ref);
      if (r == Corpus::npos) continue;
      for (const auto& [k, wt] : attribution_of(corpus[r], m.subfield_ids, options.attribution)) {
        if (cited_mass[k] == 0.0) touched.push_back(k);
        cited_mass[k] += wt;
        links += wt;
      }
    }
    if (links == 0.0) continue;
    std::sort(touched.begin(), touched.end());
    m.total += links;
    if (options.basis == DistanceBasis::citing) {
      for (const auto& [row, wt] : citing) {
        for (auto k : touched) m.at(row, k) += wt * cited_mass[k];
      }
    } else {
      // Co-citation: subfields cited together by the same paper.
      for (auto a : touched) {
        for (auto b : touched) m.at(a, b) += cited_mass[a] * cited_mass[b];
      }
    }
  }
  return out;
}

}  // namespace

FieldMatrix field_citation_matrix(const Corpus& corpus, int year, std::span<const SubfieldId> universe,
                                  const DiversityOptions& options) {
  const WorkIndex index(corpus);
  auto all = year_matrices(corpus, index, {year}, universe, options);
  return std::move(all.at(year));
}

FieldDistanceMatrix distances(const FieldMatrix& matrix) {
  FieldDistanceMatrix out;
  out.year = matrix.year;
  out.subfield_ids = matrix.subfield_ids;
  out.empty_source = matrix.total == 0.0;
  const std::size_t n = matrix.n();
  out.d.assign(n * n, 0.0);
  std::vector<double> norm(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += matrix.at(m, k) * matrix.at(m, k);
    norm[m] = std::sqrt(s);
  }
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t k = m + 1; k < n; ++k) {
      double dist = 1.0;
      if (norm[m] > 0.0 && norm[k] > 0.0) {
        double dot = 0.0;
        for (std::size_t c = 0; c < n; ++c) dot += matrix.at(m, c) * matrix.at(k, c);
        dist = std::clamp(1.0 - dot / (norm[m] * norm[k]), 0.0, 1.0);
      }
      out.d[m * n + k] = dist;
      out.d[k * n + m] = dist;
    }
  }
  return out;
}

double rao_stirling_score(std::span<const std::pair<SubfieldId, double>> proportions,
                          const FieldDistanceMatrix& dmatrix, PairSummation summation) {
  std::vector<std::pair<std::size_t, double>> idx;
  idx.reserve(proportions.size());
  for (const auto& [id, r] : proportions) {
    auto i = dmatrix.index_of(id);
    if (!i) throw std::out_of_range("rao_stirling: subfield " + std::to_string(id) + " not in distance matrix");
    idx.emplace_back(*i, r);
  }
  double score = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) {
      if (a == b) continue;
      score += dmatrix.at(idx[a].first, idx[b].first) * idx[a].second * idx[b].second;
    }
  }
  return summation == PairSummation::unordered ? 0.5 * score : score;
}

std::vector<std::pair<SubfieldId, double>> reference_proportions(const WorkRecord& work, const Corpus& corpus,
                                                                 const WorkIndex& index, Attribution attribution,
                                                                 std::size_t* refs_used) {
  std::map<SubfieldId, double> mass;
  std::size_t used = 0;
  for (const auto& ref : work.referenced_work_ids) {
    const auto r = index.find(ref);
    if (r == Corpus::npos || corpus[r].subfield_shares.empty()) continue;
    ++used;
    const auto& cited = corpus[r];
    if (attribution == Attribution::primary) {
      mass[cited.primary_subfield()] += 1.0;
    } else {
      for (const auto& s : cited.subfield_shares) mass[s.subfield] += s.weight;
    }
  }
  if (refs_used) *refs_used = used;
  std::vector<std::pair<SubfieldId, double>> out;
  double total = 0.0;
  for (const auto& [id, v] : mass) total += v;
  for (const auto& [id, v] : mass) {
    if (v > 0.0) out.emplace_back(id, v / total);
  }
  return out;
}

std::optional<RaoStirlingResult> rao_stirling(const WorkRecord& work, const Corpus& corpus, const WorkIndex& index,
                                              const FieldDistanceMatrix& dmatrix, const DiversityOptions& options) {
  RaoStirlingResult res;
  const auto props = reference_proportions(work, corpus, index, options.attribution, &res.ref_count_used);
  if (props.empty()) return std::nullopt;
  res.work_id = work.work_id;
  res.year = work.year;
  res.n_fields = props.size();
  res.pooled_window = dmatrix.pooled;
  res.score = props.size() <= 1 ? 0.0 : rao_stirling_score(props, dmatrix, options.summation);
  return res;
}

DiversityRun compute_rao_stirling(const Corpus& corpus, const DiversityOptions& options) {
  DiversityRun run;
  const auto universe = subfield_universe(corpus);
  run.n_subfields = universe.size();
  std::vector<int> years;
  for (const auto& w : corpus.works()) years.push_back(w.year);
  std::sort(years.begin(), years.end());
  years.erase(std::unique(years.begin(), years.end()), years.end());

  // Raw matrices for every year plus its neighbours (for pooling).
  std::vector<int> needed;
  for (int y : years) {
    needed.push_back(y - 1);
    needed.push_back(y);
    needed.push_back(y + 1);
  }
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  const WorkIndex index(corpus);
  const auto raw = year_matrices(corpus, index, needed, universe, options);
  auto raw_of = [&](int y) -> const FieldMatrix& { return raw.at(y); };

  std::vector<FieldDistanceMatrix> dist(years.size());
  parallel_for(years.size(), options.threads, [&](std::size_t i) {
    const int y = years[i];
    const FieldMatrix& own = raw_of(y);
    if (own.total >= static_cast<double>(options.min_links)) {
      dist[i] = distances(own);
      return;
    }
    FieldMatrix pooled = own;
    for (int nb : {y - 1, y + 1}) {
      const auto& other = raw_of(nb);
      for (std::size_t k = 0; k < pooled.values.size(); ++k) pooled.values[k] += other.values[k];
      pooled.total += other.total;
    }
    dist[i] = distances(pooled);
    dist[i].year = y;
    dist[i].pooled = true;
  });
  for (std::size_t i = 0; i < years.size(); ++i) run.matrices.emplace(years[i], std::move(dist[i]));

  std::vector<std::optional<RaoStirlingResult>> per_work(corpus.size());
  parallel_for(corpus.size(), options.threads, [&](std::size_t i) {
    const auto& w = corpus[i];
    per_work[i] = rao_stirling(w, corpus, index, run.matrices.at(w.year), options);
  });
  for (auto& r : per_work) {
    if (r) {
      run.results.push_back(std::move(*r));
    } else {
      ++run.n_unresolvable;
    }
  }
  return run;
}

}  // namespace fmx
