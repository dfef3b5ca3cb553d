#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmx/work_record.hpp"

namespace fmx {

enum class Attribution { primary, fractional };
enum class PairSummation { ordered, unordered };
enum class DistanceBasis { citing, cocitation };

struct DiversityOptions {
  Attribution attribution = Attribution::primary;
  PairSummation summation = PairSummation::ordered;
  DistanceBasis basis = DistanceBasis::citing;
  std::int64_t min_links = 1000;  // sparser years pool t-1, t, t+1
  unsigned threads = 1;
};

/// Dense square matrix over an ordered subfield universe, row-major.
struct FieldMatrix {
  int year = 0;
  std::vector<SubfieldId> subfield_ids;  // ascending
  std::vector<double> values;
  double total = 0.0;  // links counted

  std::size_t n() const noexcept { return subfield_ids.size(); }
  double& at(std::size_t m, std::size_t k) { return values[m * n() + k]; }
  double at(std::size_t m, std::size_t k) const { return values[m * n() + k]; }
  std::optional<std::size_t> index_of(SubfieldId id) const;
};

struct FieldDistanceMatrix {
  int year = 0;
  std::vector<SubfieldId> subfield_ids;
  std::vector<double> d;  // row-major, symmetric, zero diagonal, entries in [0,1]
  bool pooled = false;
  bool empty_source = false;  // built from a matrix without any links

  std::size_t n() const noexcept { return subfield_ids.size(); }
  double at(std::size_t m, std::size_t k) const { return d[m * n() + k]; }
  std::optional<std::size_t> index_of(SubfieldId id) const;
};

struct RaoStirlingResult {
  std::string work_id;
  int year = 0;
  double score = 0.0;
  std::size_t n_fields = 0;
  std::size_t ref_count_used = 0;
  bool pooled_window = false;
};

/// Ascending distinct subfield ids carried by any work in the corpus.
std::vector<SubfieldId> subfield_universe(const Corpus& corpus);

/// Citing-subfield x cited-subfield link counts for papers published in `year`.
FieldMatrix field_citation_matrix(const Corpus& corpus, int year, std::span<const SubfieldId> universe,
                                  const DiversityOptions& options = {});

/// 1 - cosine similarity between rows; rows without links sit at distance 1
/// from every other subfield.
FieldDistanceMatrix distances(const FieldMatrix& matrix);

/// Score from subfield proportions (summing to 1) against a distance matrix.
double rao_stirling_score(std::span<const std::pair<SubfieldId, double>> proportions,
                          const FieldDistanceMatrix& dmatrix, PairSummation summation = PairSummation::ordered);

/// Proportions of the work's resolvable references per subfield, ascending
/// id; empty when no reference resolves.
std::vector<std::pair<SubfieldId, double>> reference_proportions(const WorkRecord& work, const Corpus& corpus,
                                                                 const WorkIndex& index, Attribution attribution,
                                                                 std::size_t* refs_used = nullptr);

std::optional<RaoStirlingResult> rao_stirling(const WorkRecord& work, const Corpus& corpus, const WorkIndex& index,
                                              const FieldDistanceMatrix& dmatrix,
                                              const DiversityOptions& options = {});

struct DiversityRun {
  std::vector<RaoStirlingResult> results;  // ascending work_id
  std::map<int, FieldDistanceMatrix> matrices;
  std::size_t n_unresolvable = 0;
  std::size_t n_subfields = 0;
};

DiversityRun compute_rao_stirling(const Corpus& corpus, const DiversityOptions& options = {});

}  // namespace fmx
