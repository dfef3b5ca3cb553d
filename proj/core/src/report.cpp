#include "fmx/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "fmx/csv.hpp"
#include "json.hpp"

namespace fmx {

namespace {

nlohmann::json number(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

void write_fit_json(std::ostream& out, const FitResult& fit) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json spec;
  spec["name"] = fit.spec.name;
  spec["outcome"] = fit.spec.outcome;
  spec["regressor"] = fit.spec.regressor;
  spec["controls"] = fit.spec.controls;
  std::vector<std::string> fe;
  for (auto d : fit.spec.fe) fe.emplace_back(to_string(d));
  spec["fe"] = fe;
  spec["family"] = to_string(fit.family);
  spec["se_type"] = to_string(fit.se_type);
  j["spec"] = std::move(spec);

  ordered_json coefs = ordered_json::array();
  for (const auto& c : fit.coefficients) {
    ordered_json row;
    row["name"] = c.name;
    row["estimate"] = number(c.estimate);
    row["std_error"] = number(c.std_error);
    row["statistic"] = number(c.statistic);
    row["p_value"] = number(c.p_value);
    row["stars"] = stars(c.p_value);
    coefs.push_back(std::move(row));
  }
  j["coefficients"] = std::move(coefs);
  j["significance"] = kStarsLegend;
  j["p_value_reference"] = fit.family == Family::linear ? "student_t(df_resid)" : "normal";
  j["dropped_collinear"] = fit.dropped_collinear;

  ordered_json stats;
  stats["n_input"] = fit.n_input;
  stats["n_missing_outcome"] = fit.n_missing_outcome;
  stats["n_dropped_separation"] = fit.n_dropped_separation;
  stats["n_obs_used"] = fit.n_obs_used;
  ordered_json sep = ordered_json::object();
  for (const auto& [dim, n] : fit.separation_by_dim) sep[dim] = n;
  stats["separation_by_dim"] = std::move(sep);
  stats["fe_levels"] = fit.n_groups;
  stats["df_fe"] = fit.df_fe;
  stats["df_resid"] = fit.df_resid;
  stats["df_rule"] = "exact redundancy for the first two FE dimensions, levels-1 for further dimensions";
  if (fit.family == Family::linear) {
    stats["r2"] = number(fit.r2);
  } else {
    stats["pseudo_r2"] = number(fit.pseudo_r2);
    stats["loglik"] = number(fit.loglik);
    stats["loglik_null"] = number(fit.loglik_null);
  }
  stats["converged"] = fit.converged;
  stats["iterations"] = fit.iterations;
  j["fit"] = std::move(stats);
  j["iteration_log"] = fit.iteration_log;
  out << j.dump(2) << '\n';
}

void write_margins_csv(std::ostream& out, std::span<const MarginsResult> margins) {
  CsvWriter w(out);
  w.row({"level", "avg_prediction", "ci_low", "ci_high"});
  for (const auto& m : margins) {
    w.row({format_double(m.level), format_double(m.avg_prediction), format_double(m.ci_low), format_double(m.ci_high)});
  }
}

void write_regression_table(std::ostream& out, std::span<const std::pair<std::string, const FitResult*>> models) {
  CsvWriter w(out);
  w.comment(kStarsLegend);
  w.comment("standard errors in parentheses");
  std::vector<std::string> header = {"term"};
  for (const auto& [label, fit] : models) header.push_back(label);
  w.row(header);

  std::vector<std::string> terms;
  for (const auto& [label, fit] : models) {
    for (const auto& n : fit->names) {
      if (std::find(terms.begin(), terms.end(), n) == terms.end()) terms.push_back(n);
    }
  }
  for (const auto& term : terms) {
    std::vector<std::string> est = {term};
    std::vector<std::string> se = {""};
    for (const auto& [label, fit] : models) {
      const auto col = fit->column(term);
      if (!col) {
        est.emplace_back();
        se.emplace_back();
        continue;
      }
      const auto& c = fit->coefficients[*col];
      est.push_back(fmt::format("{:.4g}{}", c.estimate, stars(c.p_value)));
      se.push_back(fmt::format("({:.4g})", c.std_error));
    }
    w.row(est);
    w.row(se);
  }

  auto footer = [&](const std::string& name, auto value) {
    std::vector<std::string> row = {name};
    for (const auto& [label, fit] : models) row.push_back(value(*fit));
    w.row(row);
  };
  footer("family", [](const FitResult& f) { return std::string(to_string(f.family)); });
  footer("observations", [](const FitResult& f) { return std::to_string(f.n_obs_used); });
  footer("(pseudo) r2", [](const FitResult& f) {
    return fmt::format("{:.4f}", f.family == Family::logit ? f.pseudo_r2 : f.r2);
  });
  for (auto dim : {FeDim::author, FeDim::year, FeDim::discipline}) {
    footer(fmt::format("fe_{}", to_string(dim)), [dim](const FitResult& f) {
      return std::string(std::find(f.spec.fe.begin(), f.spec.fe.end(), dim) != f.spec.fe.end() ? "yes" : "no");
    });
  }
  footer("se_type", [](const FitResult& f) { return std::string(to_string(f.se_type)); });
}

}  // namespace fmx
