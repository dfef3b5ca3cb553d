#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmx/covariates.hpp"

namespace fmx {

enum class Family : std::uint8_t { linear, logit };
enum class SeType : std::uint8_t { classical, robust, cluster };
enum class FeDim : std::uint8_t { author, year, discipline };

const char* to_string(Family f) noexcept;
const char* to_string(SeType s) noexcept;
const char* to_string(FeDim d) noexcept;
SeType parse_se_type(std::string_view text);

/// Column names understood by build_design.
///   outcomes:    novelty_dv rs_dv new_word_dv new_phrase_dv
///   regressors:  bsf n_facilities
///   controls:    log_authors log_institutions log_countries log_references leadership
///                log_avg_career_age log_avg_inst_h log_journal_h core_journal
/// "leadership" expands to two indicators with mixed as the reference group.
const std::vector<std::string>& default_controls();

struct ModelSpec {
  std::string name;
  std::string outcome;
  std::string regressor = "bsf";
  std::vector<std::string> controls = default_controls();
  std::vector<FeDim> fe = {FeDim::author, FeDim::year, FeDim::discipline};
  Family family = Family::linear;
  SeType se_type = SeType::classical;
};

/// Numeric regression problem. Column 0 of X is the regressor of interest.
/// fe[d][i] is a dense group id in [0, n_groups[d]). An empty fe list means an
/// intercept-only model.
struct Design {
  std::vector<std::string> names;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> fe_names;
  std::vector<std::vector<std::int32_t>> fe;
  std::vector<std::int32_t> n_groups;
  std::vector<std::int32_t> cluster;  // dense ids; empty unless se_type == cluster
  std::int32_t n_clusters = 0;
  std::vector<std::size_t> row_ids;  // source row of each observation
  std::size_t n_input = 0;
  std::size_t n_missing_outcome = 0;

  std::size_t n_obs() const noexcept { return static_cast<std::size_t>(y.size()); }
  Design subset(std::span<const std::size_t> keep) const;  // re-densifies ids
};

Design build_design(const ModelSpec& spec, std::span<const CovariateRow> rows);

/// Dense 0-based ids of values in sorted order, so ids do not depend on row order.
template <class T>
std::vector<std::int32_t> densify(std::span<const T> values, std::int32_t* n_groups) {
  std::vector<T> levels(values.begin(), values.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::int32_t> ids(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    ids[i] = static_cast<std::int32_t>(std::lower_bound(levels.begin(), levels.end(), values[i]) - levels.begin());
  }
  if (n_groups) *n_groups = static_cast<std::int32_t>(levels.size());
  return ids;
}

struct AbsorbOptions {
  double tol = 1e-8;
  int max_iter = 10000;
  int threads = 1;
};

struct AbsorbInfo {
  int max_sweeps = 0;       // over columns
  double last_change = 0.0;
};

/// Replaces each column of m by its residual from the fixed-effect projection
/// (weighted when weights is non-null). Throws NumericalError on non-convergence.
AbsorbInfo absorb_fe(Eigen::Ref<Eigen::MatrixXd> m, const std::vector<std::vector<std::int32_t>>& groups,
                     const std::vector<std::int32_t>& n_groups, const Eigen::VectorXd* weights,
                     const AbsorbOptions& options = {});

/// Absorbed degrees of freedom: exact redundancy for the first two dimensions
/// via connected components, levels - 1 for every further dimension.
std::size_t fe_degrees_of_freedom(const std::vector<std::vector<std::int32_t>>& groups,
                                  const std::vector<std::int32_t>& n_groups);

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double statistic = 0.0;
  double p_value = 0.0;
};

struct FitOptions {
  SeType se_type = SeType::classical;
  AbsorbOptions absorb;
  double beta_tol = 1e-8;
  int max_outer = 100;
};

struct FitResult {
  ModelSpec spec;
  Family family = Family::linear;
  SeType se_type = SeType::classical;

  std::vector<std::string> names;  // surviving regressors, in design order
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
  std::vector<Coefficient> coefficients;
  std::vector<std::string> dropped_collinear;

  std::size_t n_input = 0;
  std::size_t n_missing_outcome = 0;
  std::size_t n_obs_used = 0;
  std::size_t n_dropped_separation = 0;
  std::vector<std::pair<std::string, std::size_t>> separation_by_dim;
  std::size_t df_fe = 0;
  std::size_t df_resid = 0;
  std::vector<std::int32_t> n_groups;

  double r2 = std::numeric_limits<double>::quiet_NaN();
  double pseudo_r2 = std::numeric_limits<double>::quiet_NaN();
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double loglik_null = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> iteration_log;

  // Fitted sample, kept for margins and FE retrieval.
  Eigen::MatrixXd X;                             // surviving columns, not demeaned
  Eigen::MatrixXd X_within;                      // X minus its (final-weight) FE projection
  Eigen::VectorXd fe_sum;                        // recovered FE contribution per observation
  std::vector<std::vector<double>> fe_levels;    // per dimension, per dense group
  std::vector<std::vector<std::int32_t>> fe_ids;
  std::vector<std::size_t> row_ids;

  std::optional<std::size_t> column(std::string_view name) const;
  double fe_value(std::size_t obs) const { return fe_sum[static_cast<Eigen::Index>(obs)]; }
};

FitResult fit_linear(const Design& design, const FitOptions& options = {});
FitResult fit_logit_fe(const Design& design, const FitOptions& options = {});

/// build_design + the family's fitter, with the ModelSpec echoed into the result.
FitResult fit_model(const ModelSpec& spec, std::span<const CovariateRow> rows, const FitOptions& options = {});

struct PruneResult {
  std::vector<std::size_t> keep;  // observation indices into the design
  std::vector<std::size_t> dropped_by_dim;
};

/// Drops observations in FE groups without outcome variation until no such
/// group remains.
PruneResult prune_separated(const Design& design);

/// Significance codes: *** p<0.01, ** p<0.05, * p<0.1.
const char* stars(double p) noexcept;

}  // namespace fmx
