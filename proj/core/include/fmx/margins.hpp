#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "fmx/hdfe.hpp"

namespace fmx {

inline constexpr double kNormal975 = 1.959963984540054;

/// Average adjusted prediction with var held at level for every fitted row.
struct MarginsResult {
  double level = 0.0;
  double avg_prediction = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Other covariates and recovered FE values stay at their observed values.
/// The CI uses the delta method over the coefficient covariance; FE values
/// follow beta through their recovery projection but contribute no sampling
/// noise of their own. Throws InputError when var was not estimated.
std::vector<MarginsResult> predict_margins(const FitResult& fit, std::string_view var, std::span<const double> levels);

}  // namespace fmx
