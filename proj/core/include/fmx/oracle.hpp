#pragma once

// Brute-force reference implementations. They share no numerical code with
// the engine: plain loops, explicit dummy columns and Gauss-Jordan solves.

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fmx/hdfe.hpp"
#include "fmx/novelty.hpp"
#include "fmx/work_record.hpp"

namespace fmx::oracle {

using Matrix = std::vector<std::vector<double>>;

/// Inverse by Gauss-Jordan with partial pivoting. Throws NumericalError when
/// a pivot falls below rel_tol times the largest diagonal entry.
Matrix invert(Matrix a, double rel_tol = 1e-12);

/// Intercept, one dummy per non-reference level of every FE dimension, then X.
Matrix dummy_design(const Design& d);

struct DenseOls {
  std::vector<double> beta;  // X columns only
  std::vector<double> se;    // classical
  double rss = 0.0;
  std::size_t df_resid = 0;
};

DenseOls dense_ols(const Design& d);

struct DenseLogit {
  std::vector<double> beta;  // X columns only
  std::vector<double> se;    // inverse observed information
  double loglik = 0.0;
  int iterations = 0;
};

/// Newton-Raphson on the full dummy design until the gradient norm < grad_tol.
DenseLogit dense_logit(const Design& d, double grad_tol = 1e-10, int max_iter = 200);

/// Observation indices surviving iterative removal of FE groups whose binary
/// outcome never varies.
std::vector<std::size_t> prune_separated(const Design& d);

struct ExactMoments {
  double mean = 0.0;
  double std = 0.0;  // population
};

/// Exact null moments of every journal pair by enumerating all distinct
/// arrangements of journal labels within each cited-year stratum. Throws
/// InputError when a stratum holds more than max_slots slots or the
/// enumeration would exceed max_arrangements.
std::map<std::pair<std::string, std::string>, ExactMoments> exhaustive_null(
    const Corpus& corpus, int year, bool multiplicity = false, std::size_t max_slots = 8,
    std::size_t max_arrangements = 5'000'000);

}  // namespace fmx::oracle
