#include "fmx/margins.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "fmx/errors.hpp"

namespace fmx {

std::vector<MarginsResult> predict_margins(const FitResult& fit, std::string_view var, std::span<const double> levels) {
  const auto col = fit.column(var);
  if (!col) {
    throw InputError(fmt::format("margins variable '{}' is not among the fitted regressors{}", var,
                                 std::find(fit.dropped_collinear.begin(), fit.dropped_collinear.end(), var) !=
                                         fit.dropped_collinear.end()
                                     ? " (dropped as collinear with the fixed effects)"
                                     : ""));
  }
  const auto j = static_cast<Eigen::Index>(*col);
  const auto n = fit.X.rows();
  const auto k = fit.X.cols();
  std::vector<MarginsResult> out;
  // Recovered FE values are a projection of y - X*beta, so they move with
  // beta: d eta_i / d beta = x_i(level) - x_i + x_within_i. Their own
  // sampling noise is not propagated.
  const Eigen::MatrixXd projected = fit.X - fit.X_within;
  for (double level : levels) {
    Eigen::MatrixXd x = fit.X;
    x.col(j).setConstant(level);
    const Eigen::VectorXd eta = x * fit.beta + fit.fe_sum;
    const Eigen::MatrixXd dx = x - projected;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fit.family == Family::logit) {
        const double p = 1.0 / (1.0 + std::exp(-eta[i]));
        total += p;
        grad += dx.row(i).transpose() * (p * (1.0 - p));
      } else {
        total += eta[i];
        grad += dx.row(i).transpose();
      }
    }
    MarginsResult r;
    r.level = level;
    r.avg_prediction = total / static_cast<double>(n);
    grad /= static_cast<double>(n);
    r.std_error = std::sqrt(std::max(0.0, grad.dot(fit.vcov * grad)));
    r.ci_low = r.avg_prediction - kNormal975 * r.std_error;
    r.ci_high = r.avg_prediction + kNormal975 * r.std_error;
    out.push_back(r);
  }
  return out;
}

}  // namespace fmx
