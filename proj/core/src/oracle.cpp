#include "fmx/oracle.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fmx/errors.hpp"

namespace fmx::oracle {

Matrix invert(Matrix a, double rel_tol) {
  const std::size_t n = a.size();
  Matrix inv(n, std::vector<double>(n, 0.0));
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    inv[i][i] = 1.0;
    scale = std::max(scale, std::abs(a[i][i]));
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    }
    if (std::abs(a[p][c]) <= rel_tol * scale) throw NumericalError("singular system in dense oracle");
    std::swap(a[p], a[c]);
    std::swap(inv[p], inv[c]);
    const double piv = a[c][c];
    for (std::size_t j = 0; j < n; ++j) {
      a[c][j] /= piv;
      inv[c][j] /= piv;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || a[r][c] == 0.0) continue;
      const double f = a[r][c];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[c][j];
        inv[r][j] -= f * inv[c][j];
      }
    }
  }
  return inv;
}

Matrix dummy_design(const Design& d) {
  const std::size_t n = d.n_obs();
  const auto k = static_cast<std::size_t>(d.X.cols());
  Matrix z(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = z[i];
    row.push_back(1.0);
    for (std::size_t dim = 0; dim < d.fe.size(); ++dim) {
      for (std::int32_t g = 1; g < d.n_groups[dim]; ++g) row.push_back(d.fe[dim][i] == g ? 1.0 : 0.0);
    }
    for (std::size_t j = 0; j < k; ++j) row.push_back(d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  }
  return z;
}

namespace {

Matrix cross(const Matrix& z, const std::vector<double>& w) {
  const std::size_t p = z.empty() ? 0 : z[0].size();
  Matrix out(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t a = 0; a < p; ++a) {
      const double za = z[i][a] * w[i];
      if (za == 0.0) continue;
      for (std::size_t b = 0; b < p; ++b) out[a][b] += za * z[i][b];
    }
  }
  return out;
}

std::vector<double> mat_vec(const Matrix& m, const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t a = 0; a < m.size(); ++a) {
    for (std::size_t b = 0; b < v.size(); ++b) out[a] += m[a][b] * v[b];
  }
  return out;
}

}  // namespace

DenseOls dense_ols(const Design& d) {
  const Matrix z = dummy_design(d);
  const std::size_t n = z.size();
  const std::size_t p = n ? z[0].size() : 0;
  const auto k = static_cast<std::size_t>(d.X.cols());
  if (n <= p) throw NumericalError("dense oracle: not enough observations");
  const Matrix inv = invert(cross(z, std::vector<double>(n, 1.0)));
  std::vector<double> zty(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < p; ++a) zty[a] += z[i][a] * d.y[static_cast<Eigen::Index>(i)];
  }
  const std::vector<double> b = mat_vec(inv, zty);
  DenseOls out;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0.0;
    for (std::size_t a = 0; a < p; ++a) fit += z[i][a] * b[a];
    const double e = d.y[static_cast<Eigen::Index>(i)] - fit;
    out.rss += e * e;
  }
  out.df_resid = n - p;
  const double sigma2 = out.rss / static_cast<double>(out.df_resid);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t a = p - k + j;
    out.beta.push_back(b[a]);
    out.se.push_back(std::sqrt(sigma2 * inv[a][a]));
  }
  return out;
}

DenseLogit dense_logit(const Design& d, double grad_tol, int max_iter) {
  const Matrix z = dummy_design(d);
  const std::size_t n = z.size();
  const std::size_t p = n ? z[0].size() : 0;
  const auto k = static_cast<std::size_t>(d.X.cols());
  std::vector<double> b(p, 0.0), mu(n), w(n), grad(p);

  auto evaluate = [&](const std::vector<double>& coef) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0.0;
      for (std::size_t a = 0; a < p; ++a) eta += z[i][a] * coef[a];
      mu[i] = 1.0 / (1.0 + std::exp(-eta));
      w[i] = mu[i] * (1.0 - mu[i]);
      const double y = d.y[static_cast<Eigen::Index>(i)];
      ll += y * eta - (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)));
    }
    return ll;
  };

  DenseLogit out;
  out.loglik = evaluate(b);
  for (int it = 1; it <= max_iter; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = d.y[static_cast<Eigen::Index>(i)] - mu[i];
      for (std::size_t a = 0; a < p; ++a) grad[a] += z[i][a] * r;
    }
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    const Matrix inv = invert(cross(z, w));
    if (norm < grad_tol) {
      out.iterations = it - 1;
      for (std::size_t j = 0; j < k; ++j) {
        out.beta.push_back(b[p - k + j]);
        out.se.push_back(std::sqrt(inv[p - k + j][p - k + j]));
      }
      return out;
    }
    const std::vector<double> step = mat_vec(inv, grad);
    // Step halving keeps the log-likelihood monotone.
    double t = 1.0;
    for (int half = 0; half < 50; ++half, t /= 2) {
      std::vector<double> trial(p);
      for (std::size_t a = 0; a < p; ++a) trial[a] = b[a] + t * step[a];
      const double ll = evaluate(trial);
      if (ll >= out.loglik - 1e-12 * std::abs(out.loglik)) {
        b = std::move(trial);
        out.loglik = ll;
        break;
      }
    }
    evaluate(b);
  }
  throw NumericalError(fmt::format("dense logit oracle did not converge in {} iterations", max_iter));
}

std::vector<std::size_t> prune_separated(const Design& d) {
  const std::size_t n = d.n_obs();
  std::vector<bool> alive(n, true);
  for (bool changed = true; changed;) {
    changed = false;
    const std::size_t dims = d.fe.empty() ? 1 : d.fe.size();
    for (std::size_t dim = 0; dim < dims; ++dim) {
      std::map<std::int32_t, std::pair<int, int>> seen;  // group -> (zeros, ones)
      for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        const std::int32_t g = d.fe.empty() ? 0 : d.fe[dim][i];
        (d.y[static_cast<Eigen::Index>(i)] > 0.5 ? seen[g].second : seen[g].first) += 1;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        const auto& s = seen[d.fe.empty() ? 0 : d.fe[dim][i]];
        if (s.first == 0 || s.second == 0) {
          alive[i] = false;
          changed = true;
        }
      }
    }
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) keep.push_back(i);
  }
  return keep;
}

std::map<std::pair<std::string, std::string>, ExactMoments> exhaustive_null(const Corpus& corpus, int year,
                                                                           bool multiplicity, std::size_t max_slots,
                                                                           std::size_t max_arrangements) {
  std::map<std::string, std::pair<std::string, int>> cited;  // work_id -> (journal, year)
  for (const auto& w : corpus.works()) cited[w.work_id] = {w.journal_id, w.year};

  std::vector<std::vector<std::size_t>> paper_slots;
  std::vector<std::string> labels;
  std::map<int, std::vector<std::size_t>> strata;
  for (const auto& w : corpus.works()) {
    if (w.year != year) continue;
    std::vector<std::size_t> mine;
    for (const auto& ref : w.referenced_work_ids) {
      auto it = cited.find(ref);
      if (it == cited.end() || it->second.first.empty()) continue;
      strata[it->second.second].push_back(labels.size());
      mine.push_back(labels.size());
      labels.push_back(it->second.first);
    }
    if (!mine.empty()) paper_slots.push_back(std::move(mine));
  }

  // Distinct arrangements per stratum.
  std::vector<std::vector<std::size_t>> positions;
  std::vector<std::vector<std::vector<std::string>>> options;
  double total = 1.0;
  for (const auto& [s, pos] : strata) {
    if (pos.size() > max_slots) {
      throw InputError(fmt::format("stratum {} has {} slots; exhaustive enumeration allows {}", s, pos.size(), max_slots));
    }
    std::vector<std::string> v;
    for (auto p : pos) v.push_back(labels[p]);
    std::sort(v.begin(), v.end());
    std::vector<std::vector<std::string>> all;
    do {
      all.push_back(v);
    } while (std::next_permutation(v.begin(), v.end()));
    total *= static_cast<double>(all.size());
    positions.push_back(pos);
    options.push_back(std::move(all));
  }
  if (total > static_cast<double>(max_arrangements)) {
    throw InputError(fmt::format("exhaustive null needs {} arrangements (limit {})", total, max_arrangements));
  }

  using Pair = std::pair<std::string, std::string>;
  std::map<Pair, std::pair<double, double>> sums;  // (sum, sum of squares)
  std::vector<std::size_t> choice(options.size(), 0);
  std::vector<std::string> current = labels;
  std::size_t n_arr = 0;
  while (true) {
    for (std::size_t s = 0; s < options.size(); ++s) {
      for (std::size_t t = 0; t < positions[s].size(); ++t) current[positions[s][t]] = options[s][choice[s]][t];
    }
    std::map<Pair, int> counts;
    for (const auto& slots : paper_slots) {
      if (multiplicity) {
        for (std::size_t a = 0; a < slots.size(); ++a) {
          for (std::size_t b = a + 1; b < slots.size(); ++b) {
            const auto& x = current[slots[a]];
            const auto& y = current[slots[b]];
            if (x != y) ++counts[x < y ? Pair{x, y} : Pair{y, x}];
          }
        }
      } else {
        std::set<std::string> js;
        for (auto s : slots) js.insert(current[s]);
        for (auto a = js.begin(); a != js.end(); ++a) {
          for (auto b = std::next(a); b != js.end(); ++b) ++counts[{*a, *b}];
        }
      }
    }
    for (const auto& [pair, c] : counts) {
      sums[pair].first += c;
      sums[pair].second += static_cast<double>(c) * c;
    }
    ++n_arr;
    std::size_t s = 0;
    while (s < choice.size() && ++choice[s] == options[s].size()) choice[s++] = 0;
    if (s == choice.size()) break;
  }

  std::map<Pair, ExactMoments> out;
  for (const auto& [pair, m] : sums) {
    const double mean = m.first / static_cast<double>(n_arr);
    const double var = m.second / static_cast<double>(n_arr) - mean * mean;
    out[pair] = {mean, std::sqrt(std::max(0.0, var))};
  }
  return out;
}

}  // namespace fmx::oracle
