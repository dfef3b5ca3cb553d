#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fmx/hdfe.hpp"
#include "fmx/margins.hpp"

namespace fmx {

inline constexpr const char* kStarsLegend = "significance: *** p<0.01, ** p<0.05, * p<0.1";

/// Spec echo, coefficient table, fit statistics and drop report.
void write_fit_json(std::ostream& out, const FitResult& fit);

/// level,avg_prediction,ci_low,ci_high
void write_margins_csv(std::ostream& out, std::span<const MarginsResult> margins);

/// Regression table: one column per model, estimate rows with stars followed
/// by a row of standard errors in parentheses, then sample/fit/FE rows.
void write_regression_table(std::ostream& out, std::span<const std::pair<std::string, const FitResult*>> models);

}  // namespace fmx
