#include "fmx/hdfe.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <cmath>
#include <numeric>

#include "fmx/errors.hpp"
#include "fmx/parallel.hpp"

namespace fmx {

const char* to_string(Family f) noexcept { return f == Family::logit ? "logit" : "linear"; }

const char* to_string(SeType s) noexcept {
  switch (s) {
    case SeType::robust:
      return "robust";
    case SeType::cluster:
      return "cluster";
    case SeType::classical:
      break;
  }
  return "classical";
}

const char* to_string(FeDim d) noexcept {
  switch (d) {
    case FeDim::year:
      return "year";
    case FeDim::discipline:
      return "discipline";
    case FeDim::author:
      break;
  }
  return "author";
}

SeType parse_se_type(std::string_view text) {
  if (text == "classical") return SeType::classical;
  if (text == "robust") return SeType::robust;
  if (text == "cluster") return SeType::cluster;
  throw InputError(fmt::format("unknown standard-error type '{}'", text));
}

const std::vector<std::string>& default_controls() {
  static const std::vector<std::string> controls = {
      "log_authors",        "log_institutions", "log_countries", "log_references", "leadership",
      "log_avg_career_age", "log_avg_inst_h",   "log_journal_h", "core_journal"};
  return controls;
}

const char* stars(double p) noexcept {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

std::optional<std::size_t> FitResult::column(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == name) return j;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Design

namespace {

std::optional<double> outcome_value(const CovariateRow& r, std::string_view name) {
  auto as_num = [](const std::optional<bool>& b) -> std::optional<double> {
    if (!b) return std::nullopt;
    return *b ? 1.0 : 0.0;
  };
  if (name == "novelty_dv") return as_num(r.novelty_dv);
  if (name == "rs_dv") return r.rs_dv;
  if (name == "new_word_dv") return as_num(r.new_word_dv);
  if (name == "new_phrase_dv") return as_num(r.new_phrase_dv);
  throw InputError(fmt::format("unknown outcome '{}'", name));
}

void expand_column(std::string_view name, std::vector<std::string>& names) {
  if (name == "leadership") {
    names.emplace_back("leadership_all_north");
    names.emplace_back("leadership_all_south");
  } else {
    names.emplace_back(name);
  }
}

double column_value(const CovariateRow& r, std::string_view name) {
  if (name == "bsf") return r.bsf ? 1.0 : 0.0;
  if (name == "n_facilities") return r.n_facilities;
  if (name == "log_authors") return r.log_authors;
  if (name == "log_institutions") return r.log_institutions;
  if (name == "log_countries") return r.log_countries;
  if (name == "log_references") return r.log_references;
  if (name == "leadership_all_north") return r.leadership == Leadership::all_north ? 1.0 : 0.0;
  if (name == "leadership_all_south") return r.leadership == Leadership::all_south ? 1.0 : 0.0;
  if (name == "log_avg_career_age") return r.log_avg_career_age;
  if (name == "log_avg_inst_h") return r.log_avg_inst_h;
  if (name == "log_journal_h") return r.log_journal_h;
  if (name == "core_journal") return r.core_journal ? 1.0 : 0.0;
  throw InputError(fmt::format("unknown regressor '{}'", name));
}

}  // namespace

Design build_design(const ModelSpec& spec, std::span<const CovariateRow> rows) {
  if (std::find(spec.controls.begin(), spec.controls.end(), spec.outcome) != spec.controls.end() ||
      spec.regressor == spec.outcome) {
    throw InputError(fmt::format("outcome '{}' also listed as a regressor", spec.outcome));
  }
  if (spec.regressor != "bsf" && spec.regressor != "n_facilities") {
    throw InputError(fmt::format("regressor of interest must be bsf or n_facilities, got '{}'", spec.regressor));
  }
  Design d;
  d.n_input = rows.size();
  expand_column(spec.regressor, d.names);
  for (const auto& c : spec.controls) expand_column(c, d.names);

  std::vector<double> y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (auto v = outcome_value(rows[i], spec.outcome)) {
      y.push_back(*v);
      d.row_ids.push_back(i);
    }
  }
  d.n_missing_outcome = rows.size() - y.size();
  const auto n = static_cast<Eigen::Index>(y.size());
  d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  d.X.resize(n, static_cast<Eigen::Index>(d.names.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[d.row_ids[static_cast<std::size_t>(i)]];
    for (std::size_t j = 0; j < d.names.size(); ++j) d.X(i, static_cast<Eigen::Index>(j)) = column_value(r, d.names[j]);
  }

  std::vector<std::string> authors;
  std::vector<int> years, fields;
  for (auto i : d.row_ids) {
    authors.push_back(rows[i].fe_author);
    years.push_back(rows[i].fe_year);
    fields.push_back(rows[i].fe_discipline);
  }
  for (auto dim : spec.fe) {
    std::int32_t g = 0;
    switch (dim) {
      case FeDim::author:
        d.fe.push_back(densify<std::string>(authors, &g));
        break;
      case FeDim::year:
        d.fe.push_back(densify<int>(years, &g));
        break;
      case FeDim::discipline:
        d.fe.push_back(densify<int>(fields, &g));
        break;
    }
    d.fe_names.emplace_back(to_string(dim));
    d.n_groups.push_back(g);
  }
  d.cluster = densify<std::string>(authors, &d.n_clusters);
  return d;
}

Design Design::subset(std::span<const std::size_t> keep) const {
  Design out;
  out.names = names;
  out.fe_names = fe_names;
  out.n_input = n_input;
  out.n_missing_outcome = n_missing_outcome;
  const auto m = static_cast<Eigen::Index>(keep.size());
  out.y.resize(m);
  out.X.resize(m, X.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto src = static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]);
    out.y[i] = y[src];
    out.X.row(i) = X.row(src);
    out.row_ids.push_back(row_ids.empty() ? keep[static_cast<std::size_t>(i)] : row_ids[keep[static_cast<std::size_t>(i)]]);
  }
  for (const auto& ids : fe) {
    std::vector<std::int32_t> sub;
    sub.reserve(keep.size());
    for (auto k : keep) sub.push_back(ids[k]);
    std::int32_t g = 0;
    out.fe.push_back(densify<std::int32_t>(sub, &g));
    out.n_groups.push_back(g);
  }
  if (!cluster.empty()) {
    std::vector<std::int32_t> sub;
    for (auto k : keep) sub.push_back(cluster[k]);
    out.cluster = densify<std::int32_t>(sub, &out.n_clusters);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Absorption

AbsorbInfo absorb_fe(Eigen::Ref<Eigen::MatrixXd> m, const std::vector<std::vector<std::int32_t>>& groups,
                     const std::vector<std::int32_t>& n_groups, const Eigen::VectorXd* weights,
                     const AbsorbOptions& options) {
  const auto n = m.rows();
  const std::size_t dims = groups.size();
  std::vector<std::vector<double>> inv_total(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    if (static_cast<Eigen::Index>(groups[d].size()) != n) throw std::invalid_argument("FE id vector length mismatch");
    inv_total[d].assign(static_cast<std::size_t>(n_groups[d]), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      inv_total[d][static_cast<std::size_t>(groups[d][static_cast<std::size_t>(i)])] += weights ? (*weights)[i] : 1.0;
    }
    for (auto& t : inv_total[d]) t = t > 0 ? 1.0 / t : 0.0;
  }

  std::vector<int> sweeps(static_cast<std::size_t>(m.cols()), 0);
  std::vector<double> last(static_cast<std::size_t>(m.cols()), 0.0);
  parallel_for(static_cast<std::size_t>(m.cols()), options.threads, [&](std::size_t j) {
    auto col = m.col(static_cast<Eigen::Index>(j));
    std::vector<double> sums;
    // One cycle over all dimensions; returns the largest group-mean removed.
    auto sweep_once = [&](auto&& v) {
      double change = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const auto& g = groups[d];
        sums.assign(inv_total[d].size(), 0.0);
        if (weights) {
          for (Eigen::Index i = 0; i < n; ++i) sums[static_cast<std::size_t>(g[static_cast<std::size_t>(i)])] += (*weights)[i] * v[i];
        } else {
          for (Eigen::Index i = 0; i < n; ++i) sums[static_cast<std::size_t>(g[static_cast<std::size_t>(i)])] += v[i];
        }
        for (std::size_t k = 0; k < sums.size(); ++k) {
          sums[k] *= inv_total[d][k];
          change = std::max(change, std::abs(sums[k]));
        }
        for (Eigen::Index i = 0; i < n; ++i) v[i] -= sums[static_cast<std::size_t>(g[static_cast<std::size_t>(i)])];
      }
      return change;
    };
    Eigen::VectorXd x0, x1;
    double change = 0.0;
    for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
      // Irons-Tuck extrapolation from three consecutive iterates. Every step
      // stays in col + range(D), so the fixed point is unchanged.
      if (dims > 1 && sweep % 3 == 0) {
        x0 = col;
        change = sweep_once(col);
        if (change < options.tol) {
          sweeps[j] = sweep;
          last[j] = change;
          return;
        }
        x1 = col;
        change = sweep_once(col);
        if (change < options.tol) {
          sweeps[j] = sweep;
          last[j] = change;
          return;
        }
        const Eigen::VectorXd d1 = x1 - x0;
        const Eigen::VectorXd d2 = col - x1;
        const Eigen::VectorXd dd = d2 - d1;
        const double denom = dd.squaredNorm();
        if (denom > 0) col -= (d2.dot(dd) / denom) * d2;
        continue;
      }
      change = sweep_once(col);
      // A single dimension is an exact projection after one sweep.
      if (change < options.tol || dims == 1) {
        sweeps[j] = sweep;
        last[j] = change;
        return;
      }
    }
    throw NumericalError(fmt::format("fixed-effect absorption did not converge in {} sweeps (last change {:.3g})",
                                     options.max_iter, change));
  });
  AbsorbInfo info;
  for (std::size_t j = 0; j < sweeps.size(); ++j) {
    info.max_sweeps = std::max(info.max_sweeps, sweeps[j]);
    info.last_change = std::max(info.last_change, last[j]);
  }
  return info;
}

namespace {

struct DisjointSet {
  std::vector<std::int32_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::int32_t find(std::int32_t x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    return true;
  }
};

}  // namespace

std::size_t fe_degrees_of_freedom(const std::vector<std::vector<std::int32_t>>& groups,
                                  const std::vector<std::int32_t>& n_groups) {
  if (groups.empty()) return 1;
  std::size_t df = static_cast<std::size_t>(n_groups[0]);
  if (groups.size() >= 2) {
    const auto g0 = n_groups[0];
    const auto total = static_cast<std::size_t>(g0 + n_groups[1]);
    DisjointSet ds(total);
    std::size_t components = total;
    for (std::size_t i = 0; i < groups[0].size(); ++i) {
      if (ds.unite(groups[0][i], g0 + groups[1][i])) --components;
    }
    df += static_cast<std::size_t>(n_groups[1]);
    df -= components;
  }
  for (std::size_t d = 2; d < groups.size(); ++d) df += static_cast<std::size_t>(n_groups[d] - 1);
  return df;
}

PruneResult prune_separated(const Design& design) {
  const std::size_t n = design.n_obs();
  std::vector<char> alive(n, 1);
  PruneResult out;
  const std::size_t dims = std::max<std::size_t>(1, design.fe.size());
  out.dropped_by_dim.assign(dims, 0);
  const std::vector<std::int32_t> single(n, 0);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t d = 0; d < dims; ++d) {
      const auto& g = design.fe.empty() ? single : design.fe[d];
      const auto ng = design.fe.empty() ? 1 : static_cast<std::size_t>(design.n_groups[d]);
      std::vector<std::size_t> count(ng, 0);
      std::vector<double> sum(ng, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        ++count[static_cast<std::size_t>(g[i])];
        sum[static_cast<std::size_t>(g[i])] += design.y[static_cast<Eigen::Index>(i)];
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        const auto k = static_cast<std::size_t>(g[i]);
        if (sum[k] == 0.0 || sum[k] == static_cast<double>(count[k])) {
          alive[i] = 0;
          ++out.dropped_by_dim[d];
          changed = true;
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) out.keep.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct FeLayout {
  std::vector<std::vector<std::int32_t>> groups;
  std::vector<std::int32_t> n_groups;
  std::vector<std::string> names;
};

FeLayout fe_layout(const Design& d) {
  if (!d.fe.empty()) return {d.fe, d.n_groups, d.fe_names};
  return {{std::vector<std::int32_t>(d.n_obs(), 0)}, {1}, {"intercept"}};
}

// Columns of the absorbed design that vanish are collinear with the FEs.
// Absorption stops at tol, so a column inside the FE span only gets down to
// roughly tol; the cut sits two orders above it.
std::vector<std::size_t> surviving_columns(const Eigen::MatrixXd& original, const Eigen::MatrixXd& absorbed,
                                           const std::vector<std::string>& names, double tol,
                                           std::vector<std::string>& dropped) {
  std::vector<std::size_t> keep;
  const double cut = std::max(1e-10, 100.0 * tol);
  for (Eigen::Index j = 0; j < absorbed.cols(); ++j) {
    const double scale = std::max(1.0, original.col(j).cwiseAbs().maxCoeff());
    if (absorbed.col(j).cwiseAbs().maxCoeff() < cut * scale) {
      dropped.push_back(names[static_cast<std::size_t>(j)]);
    } else {
      keep.push_back(static_cast<std::size_t>(j));
    }
  }
  return keep;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

// Absorbed columns carry errors of order tol, so dependence is judged at
// the same scale as the collinearity cut.
void require_full_rank(const Eigen::MatrixXd& xd, const std::vector<std::string>& names, double tol) {
  if (xd.cols() == 0) return;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xd);
  qr.setThreshold(std::max(1e-10, 100.0 * tol));
  const auto rank = qr.rank();
  if (rank == xd.cols()) return;
  std::string cols;
  const auto perm = qr.colsPermutation().indices();
  for (Eigen::Index j = rank; j < xd.cols(); ++j) {
    if (!cols.empty()) cols += ", ";
    cols += names[static_cast<std::size_t>(perm[j])];
  }
  throw NumericalError(fmt::format("rank-deficient design: {} linearly dependent on the other regressors", cols));
}

Eigen::MatrixXd symmetric_inverse(const Eigen::MatrixXd& a) {
  const auto k = a.rows();
  if (k == 0) return a;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw NumericalError("cross-product matrix is not invertible");
  return ldlt.solve(Eigen::MatrixXd::Identity(k, k));
}

// Sandwich meat from per-observation scores (rows of x times s).
Eigen::MatrixXd meat(const Eigen::MatrixXd& x, const Eigen::VectorXd& s, const Design& d, SeType type) {
  const auto k = x.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
  if (type == SeType::robust) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd g = x.row(i).transpose() * s[i];
      out.noalias() += g * g.transpose();
    }
    return out;
  }
  if (d.cluster.size() != static_cast<std::size_t>(x.rows())) throw InputError("cluster ids missing for clustered errors");
  Eigen::MatrixXd by_cluster = Eigen::MatrixXd::Zero(d.n_clusters, k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) by_cluster.row(d.cluster[static_cast<std::size_t>(i)]) += x.row(i) * s[i];
  return by_cluster.transpose() * by_cluster;
}

struct Recovered {
  std::vector<std::vector<double>> levels;
  Eigen::VectorXd sum;
};

// Gauss-Seidel group means of r, giving per-level FE values.
Recovered recover_fe(const Eigen::VectorXd& r, const FeLayout& fe, const Eigen::VectorXd* w, const AbsorbOptions& options) {
  const auto n = r.size();
  Recovered out;
  out.levels.resize(fe.groups.size());
  std::vector<std::vector<double>> inv_total(fe.groups.size());
  for (std::size_t d = 0; d < fe.groups.size(); ++d) {
    out.levels[d].assign(static_cast<std::size_t>(fe.n_groups[d]), 0.0);
    inv_total[d].assign(static_cast<std::size_t>(fe.n_groups[d]), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) inv_total[d][static_cast<std::size_t>(fe.groups[d][static_cast<std::size_t>(i)])] += w ? (*w)[i] : 1.0;
    for (auto& t : inv_total[d]) t = t > 0 ? 1.0 / t : 0.0;
  }
  Eigen::VectorXd resid = r;
  std::vector<double> sums;
  for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
    double change = 0.0;
    for (std::size_t d = 0; d < fe.groups.size(); ++d) {
      const auto& g = fe.groups[d];
      sums.assign(out.levels[d].size(), 0.0);
      for (Eigen::Index i = 0; i < n; ++i) sums[static_cast<std::size_t>(g[static_cast<std::size_t>(i)])] += (w ? (*w)[i] : 1.0) * resid[i];
      for (std::size_t k = 0; k < sums.size(); ++k) {
        sums[k] *= inv_total[d][k];
        out.levels[d][k] += sums[k];
        change = std::max(change, std::abs(sums[k]));
      }
      for (Eigen::Index i = 0; i < n; ++i) resid[i] -= sums[static_cast<std::size_t>(g[static_cast<std::size_t>(i)])];
    }
    if (change < options.tol || fe.groups.size() == 1) {
      out.sum = r - resid;
      return out;
    }
  }
  throw NumericalError("fixed-effect recovery did not converge");
}

void fill_coefficients(FitResult& fit, bool student_t) {
  fit.coefficients.clear();
  for (std::size_t j = 0; j < fit.names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    Coefficient c;
    c.name = fit.names[j];
    c.estimate = fit.beta[jj];
    c.std_error = std::sqrt(fit.vcov(jj, jj));
    c.statistic = c.estimate / c.std_error;
    if (!std::isfinite(c.statistic)) {
      c.p_value = std::numeric_limits<double>::quiet_NaN();
    } else if (student_t) {
      boost::math::students_t dist(static_cast<double>(fit.df_resid));
      c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(c.statistic)));
    } else {
      c.p_value = std::erfc(std::abs(c.statistic) / std::sqrt(2.0));
    }
    fit.coefficients.push_back(std::move(c));
  }
}

void store_fe(FitResult& fit, const FeLayout& fe, Recovered rec) {
  fit.fe_levels = std::move(rec.levels);
  fit.fe_sum = std::move(rec.sum);
  fit.fe_ids = fe.groups;
  fit.n_groups = fe.n_groups;
}

}  // namespace

FitResult fit_linear(const Design& design, const FitOptions& options) {
  const auto n = static_cast<Eigen::Index>(design.n_obs());
  if (n == 0) throw InputError("no observations to fit");
  const FeLayout fe = fe_layout(design);

  FitResult fit;
  fit.family = Family::linear;
  fit.se_type = options.se_type;
  fit.n_input = design.n_input ? design.n_input : design.n_obs();
  fit.n_missing_outcome = design.n_missing_outcome;
  fit.n_obs_used = design.n_obs();
  fit.row_ids = design.row_ids;

  Eigen::MatrixXd m(n, design.X.cols() + 1);
  m.col(0) = design.y;
  m.rightCols(design.X.cols()) = design.X;
  const auto info = absorb_fe(m, fe.groups, fe.n_groups, nullptr, options.absorb);
  fit.iteration_log.push_back(fmt::format("absorb sweeps={} last_change={:.3g}", info.max_sweeps, info.last_change));

  const Eigen::MatrixXd absorbed_x = m.rightCols(design.X.cols());
  const auto keep = surviving_columns(design.X, absorbed_x, design.names, options.absorb.tol, fit.dropped_collinear);
  for (auto j : keep) fit.names.push_back(design.names[j]);
  const Eigen::MatrixXd xd = select_columns(absorbed_x, keep);
  const Eigen::VectorXd yd = m.col(0);
  require_full_rank(xd, fit.names, options.absorb.tol);

  const auto k = xd.cols();
  fit.beta = k ? Eigen::VectorXd(xd.colPivHouseholderQr().solve(yd)) : Eigen::VectorXd();
  const Eigen::VectorXd e = k ? Eigen::VectorXd(yd - xd * fit.beta) : yd;

  fit.df_fe = fe_degrees_of_freedom(fe.groups, fe.n_groups);
  const auto used = static_cast<std::size_t>(k) + fit.df_fe;
  if (used >= design.n_obs()) {
    throw NumericalError(fmt::format("no residual degrees of freedom ({} observations, {} parameters)", n, used));
  }
  fit.df_resid = design.n_obs() - used;

  const Eigen::MatrixXd bread = symmetric_inverse(xd.transpose() * xd);
  const double dn = static_cast<double>(n);
  const double df = static_cast<double>(fit.df_resid);
  switch (options.se_type) {
    case SeType::classical:
      fit.vcov = bread * (e.squaredNorm() / df);
      break;
    case SeType::robust:
      fit.vcov = bread * meat(xd, e, design, SeType::robust) * bread * (dn / df);
      break;
    case SeType::cluster: {
      const double g = design.n_clusters;
      if (g < 2) throw NumericalError("clustered errors need at least two clusters");
      fit.vcov = bread * meat(xd, e, design, SeType::cluster) * bread * (g / (g - 1.0) * (dn - 1.0) / df);
      break;
    }
  }

  fit.X = select_columns(design.X, keep);
  fit.X_within = xd;
  const Eigen::VectorXd xb = k ? Eigen::VectorXd(fit.X * fit.beta) : Eigen::VectorXd::Zero(n);
  store_fe(fit, fe, recover_fe(design.y - xb, fe, nullptr, options.absorb));
  const double sst = (design.y.array() - design.y.mean()).square().sum();
  fit.r2 = 1.0 - (design.y - xb - fit.fe_sum).squaredNorm() / sst;
  fit.converged = true;
  fit.iterations = 1;
  fill_coefficients(fit, true);
  return fit;
}

namespace {

double inv_logit(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  // y*eta - log(1 + exp(eta)), evaluated stably.
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double t = eta[i];
    const double softplus = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    ll += y[i] * t - softplus;
  }
  return ll;
}

}  // namespace

FitResult fit_logit_fe(const Design& input, const FitOptions& options) {
  for (Eigen::Index i = 0; i < input.y.size(); ++i) {
    if (input.y[i] != 0.0 && input.y[i] != 1.0) throw InputError("logit outcome must be 0/1");
  }
  FitResult fit;
  fit.family = Family::logit;
  fit.se_type = options.se_type;
  fit.n_input = input.n_input ? input.n_input : input.n_obs();
  fit.n_missing_outcome = input.n_missing_outcome;

  const auto pruned = prune_separated(input);
  const FeLayout input_fe = fe_layout(input);
  for (std::size_t d = 0; d < pruned.dropped_by_dim.size(); ++d) {
    fit.separation_by_dim.emplace_back(input_fe.names[d], pruned.dropped_by_dim[d]);
    fit.n_dropped_separation += pruned.dropped_by_dim[d];
  }
  if (pruned.keep.empty()) throw NumericalError("no variation: every observation removed by separation pruning");
  const Design design = input.subset(pruned.keep);
  const FeLayout fe = fe_layout(design);
  const auto n = static_cast<Eigen::Index>(design.n_obs());
  fit.n_obs_used = design.n_obs();
  fit.row_ids = design.row_ids;

  {
    Eigen::MatrixXd probe = design.X;
    absorb_fe(probe, fe.groups, fe.n_groups, nullptr, options.absorb);
    const auto keep = surviving_columns(design.X, probe, design.names, options.absorb.tol, fit.dropped_collinear);
    for (auto j : keep) fit.names.push_back(design.names[j]);
    fit.X = select_columns(design.X, keep);
    require_full_rank(select_columns(probe, keep), fit.names, options.absorb.tol);
  }
  const auto k = fit.X.cols();
  const Eigen::VectorXd& y = design.y;

  Eigen::VectorXd mu = (y.array() + 0.5) / 2.0;
  Eigen::VectorXd eta = (mu.array() / (1.0 - mu.array())).log();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd w(n), z(n);
  Eigen::MatrixXd m(n, k + 1);
  Eigen::MatrixXd xd;

  for (int it = 1; it <= options.max_outer; ++it) {
    // Clamped so that fitted probabilities of exactly 0 or 1 keep finite working values.
    w = mu.array().max(1e-10).min(1.0 - 1e-10) * (1.0 - mu.array().max(1e-10).min(1.0 - 1e-10));
    z = eta.array() + (y - mu).array() / w.array();
    m.col(0) = z;
    m.rightCols(k) = fit.X;
    try {
      absorb_fe(m, fe.groups, fe.n_groups, &w, options.absorb);
    } catch (const NumericalError& e) {
      const double largest = beta.size() ? beta.cwiseAbs().maxCoeff() : 0.0;
      throw NumericalError(fmt::format("logit iteration {}: {}{}", it, e.what(),
                                       largest > 10.0 ? " (coefficients diverging, likely separation by a regressor)" : ""));
    }
    xd = m.rightCols(k);
    const Eigen::VectorXd zd = m.col(0);
    Eigen::VectorXd next = Eigen::VectorXd::Zero(k);
    if (k) {
      const Eigen::MatrixXd xtw = xd.transpose() * w.asDiagonal();
      next = (xtw * xd).ldlt().solve(xtw * zd);
    }
    const Eigen::VectorXd resid = zd - xd * next;
    const Eigen::VectorXd eta_next = z - resid;
    const double step = k ? (next - beta).cwiseAbs().maxCoeff() : (eta_next - eta).cwiseAbs().maxCoeff();
    beta = next;
    eta = eta_next;
    mu = eta.unaryExpr([](double t) { return inv_logit(t); });
    fit.loglik = log_likelihood(y, eta);
    fit.iteration_log.push_back(fmt::format("iter {} loglik={:.10g} max_step={:.3g}", it, fit.loglik, step));
    fit.iterations = it;
    if (step < options.beta_tol && (it > 1 || k == 0)) {
      fit.converged = true;
      break;
    }
    if (!std::isfinite(fit.loglik)) break;
  }
  if (!fit.converged) {
    std::string trace;
    const auto from = fit.iteration_log.size() > 3 ? fit.iteration_log.size() - 3 : 0;
    for (auto i = from; i < fit.iteration_log.size(); ++i) trace += "; " + fit.iteration_log[i];
    const double largest = beta.size() ? beta.cwiseAbs().maxCoeff() : 0.0;
    throw NumericalError(fmt::format("logit did not converge in {} iterations{}{}", options.max_outer,
                                     largest > 10.0 ? " (coefficients diverging, likely separation by a regressor)" : "",
                                     trace));
  }

  fit.beta = beta;
  fit.df_fe = fe_degrees_of_freedom(fe.groups, fe.n_groups);
  const auto used = static_cast<std::size_t>(k) + fit.df_fe;
  fit.df_resid = design.n_obs() > used ? design.n_obs() - used : 0;
  if (k) {
    const Eigen::MatrixXd bread = symmetric_inverse(xd.transpose() * w.asDiagonal() * xd);
    const double dn = static_cast<double>(n);
    switch (options.se_type) {
      case SeType::classical:
        fit.vcov = bread;
        break;
      case SeType::robust:
        fit.vcov = bread * meat(xd, y - mu, design, SeType::robust) * bread * (dn / (dn - 1.0));
        break;
      case SeType::cluster: {
        const double g = design.n_clusters;
        if (g < 2) throw NumericalError("clustered errors need at least two clusters");
        fit.vcov = bread * meat(xd, y - mu, design, SeType::cluster) * bread * (g / (g - 1.0));
        break;
      }
    }
  } else {
    fit.vcov.resize(0, 0);
  }

  fit.X_within = k ? xd : Eigen::MatrixXd(n, 0);
  const Eigen::VectorXd xb = k ? Eigen::VectorXd(fit.X * beta) : Eigen::VectorXd::Zero(n);
  w = mu.array() * (1.0 - mu.array());
  store_fe(fit, fe, recover_fe(eta - xb, fe, &w, options.absorb));

  const double p = y.mean();
  fit.loglik_null = static_cast<double>(n) * (p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
  fit.pseudo_r2 = 1.0 - fit.loglik / fit.loglik_null;
  fill_coefficients(fit, false);
  return fit;
}

FitResult fit_model(const ModelSpec& spec, std::span<const CovariateRow> rows, const FitOptions& options) {
  FitOptions opts = options;
  opts.se_type = spec.se_type;
  const Design design = build_design(spec, rows);
  FitResult fit = spec.family == Family::logit ? fit_logit_fe(design, opts) : fit_linear(design, opts);
  fit.spec = spec;
  return fit;
}

}  // namespace fmx
