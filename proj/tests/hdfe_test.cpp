#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "fmx/errors.hpp"
#include "fmx/hdfe.hpp"
#include "fmx/oracle.hpp"
#include "support.hpp"

namespace fmx {
namespace {

using test::DesignShape;
using test::random_design;

oracle::Matrix transpose_times(const oracle::Matrix& a, const oracle::Matrix& b) {
  const std::size_t p = a[0].size(), q = b[0].size();
  oracle::Matrix out(p, std::vector<double>(q, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < q; ++c) out[r][c] += a[i][r] * b[i][c];
    }
  }
  return out;
}

oracle::Matrix times(const oracle::Matrix& a, const oracle::Matrix& b) {
  oracle::Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
    }
  }
  return out;
}

// Residuals of the full dummy OLS, by plain loops.
std::vector<double> dense_residuals(const Design& d, const oracle::DenseOls& ols, const oracle::Matrix& full) {
  // Recover all coefficients from the normal equations of the full design.
  const auto xtx = transpose_times(full, full);
  oracle::Matrix ycol(full.size(), std::vector<double>(1));
  for (std::size_t i = 0; i < full.size(); ++i) ycol[i][0] = d.y[static_cast<Eigen::Index>(i)];
  const auto coef = times(oracle::invert(xtx), transpose_times(full, ycol));
  std::vector<double> e(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    double fit = 0.0;
    for (std::size_t j = 0; j < coef.size(); ++j) fit += full[i][j] * coef[j][0];
    e[i] = d.y[static_cast<Eigen::Index>(i)] - fit;
  }
  (void)ols;
  return e;
}

// Sandwich on the full dummy design; the X block equals the within-estimator
// sandwich by the Frisch-Waugh-Lovell theorem.
std::vector<double> dense_sandwich_se(const Design& d, SeType type, double scale) {
  const auto full = oracle::dummy_design(d);
  const auto e = dense_residuals(d, {}, full);
  const auto bread = oracle::invert(transpose_times(full, full));
  const std::size_t p = full[0].size();
  oracle::Matrix meat(p, std::vector<double>(p, 0.0));
  if (type == SeType::robust) {
    for (std::size_t i = 0; i < full.size(); ++i) {
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) meat[r][c] += full[i][r] * full[i][c] * e[i] * e[i];
      }
    }
  } else {
    std::map<std::int32_t, std::vector<double>> score;
    for (std::size_t i = 0; i < full.size(); ++i) {
      auto& s = score[d.cluster[i]];
      s.resize(p, 0.0);
      for (std::size_t r = 0; r < p; ++r) s[r] += full[i][r] * e[i];
    }
    for (const auto& [g, s] : score) {
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) meat[r][c] += s[r] * s[c];
      }
    }
  }
  const auto v = times(times(bread, meat), bread);
  std::vector<double> se;
  const auto k = static_cast<std::size_t>(d.X.cols());
  for (std::size_t j = p - k; j < p; ++j) se.push_back(std::sqrt(v[j][j] * scale));
  return se;
}

TEST(Absorb, SingleDimensionIsGroupDemeaning) {
  Eigen::MatrixXd m(5, 1);
  m << 1, 3, 10, 20, 30;
  const std::vector<std::vector<std::int32_t>> g = {{0, 0, 1, 1, 1}};
  absorb_fe(m, g, {2}, nullptr);
  Eigen::VectorXd expect(5);
  expect << -1, 1, -10, 0, 10;
  EXPECT_LT((m.col(0) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Absorb, WeightedSingleDimension) {
  Eigen::MatrixXd m(3, 1);
  m << 1, 4, 7;
  Eigen::VectorXd w(3);
  w << 1, 2, 3;
  absorb_fe(m, {{0, 0, 0}}, {1}, &w);
  const double mean = (1 * 1 + 2 * 4 + 3 * 7) / 6.0;
  EXPECT_NEAR(m(0, 0), 1 - mean, 1e-15);
  EXPECT_NEAR(m(2, 0), 7 - mean, 1e-15);
}

// Result equals the dense residual-maker applied to each column, and is
// orthogonal to every group indicator.
TEST(Absorb, MatchesDenseProjectionProperty) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    DesignShape shape;
    shape.n = 120;
    shape.levels = {15, 6, 3};
    shape.k = 2;
    const Design d = random_design(seed, shape);
    Eigen::MatrixXd m = d.X;
    AbsorbOptions opts;
    opts.tol = 1e-12;
    absorb_fe(m, d.fe, d.n_groups, nullptr, opts);

    Design only_fe = d;
    only_fe.X.resize(d.X.rows(), 0);
    const auto full = oracle::dummy_design(only_fe);
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
      only_fe.y = d.X.col(j);
      const auto e = dense_residuals(only_fe, {}, full);
      for (Eigen::Index i = 0; i < m.rows(); ++i) EXPECT_NEAR(m(i, j), e[static_cast<std::size_t>(i)], 1e-9);
    }
    for (std::size_t dim = 0; dim < d.fe.size(); ++dim) {
      std::vector<double> sums(static_cast<std::size_t>(d.n_groups[dim]), 0.0);
      for (Eigen::Index i = 0; i < m.rows(); ++i) sums[static_cast<std::size_t>(d.fe[dim][static_cast<std::size_t>(i)])] += m(i, 0);
      for (double s : sums) EXPECT_NEAR(s, 0.0, 1e-9);
    }
  }
}

TEST(Absorb, IdenticalAcrossThreadCounts) {
  DesignShape shape;
  shape.n = 300;
  shape.k = 6;
  const Design d = random_design(5, shape);
  Eigen::MatrixXd a = d.X, b = d.X;
  AbsorbOptions one, four;
  four.threads = 4;
  absorb_fe(a, d.fe, d.n_groups, nullptr, one);
  absorb_fe(b, d.fe, d.n_groups, nullptr, four);
  EXPECT_EQ(a, b);
}

TEST(Absorb, ReportsNonConvergence) {
  DesignShape shape;
  const Design d = random_design(2, shape);
  Eigen::MatrixXd m = d.X;
  AbsorbOptions opts;
  opts.max_iter = 1;
  EXPECT_THROW(absorb_fe(m, d.fe, d.n_groups, nullptr, opts), NumericalError);
}

TEST(FeDegreesOfFreedom, ConnectedComponents) {
  // Two author/year components: {a0,a1,y0,y1} and {a2,y2}.
  const std::vector<std::vector<std::int32_t>> g = {{0, 1, 1, 2}, {0, 0, 1, 2}};
  EXPECT_EQ(fe_degrees_of_freedom(g, {3, 3}), 3u + 3u - 2u);
  const std::vector<std::vector<std::int32_t>> three = {{0, 1, 1, 2}, {0, 0, 1, 2}, {0, 1, 0, 1}};
  EXPECT_EQ(fe_degrees_of_freedom(three, {3, 3, 2}), 4u + 1u);
  EXPECT_EQ(fe_degrees_of_freedom({{0, 1, 2}}, {3}), 3u);
  EXPECT_EQ(fe_degrees_of_freedom({}, {}), 1u);
}

TEST(FitLinear, MatchesDenseOlsOnRandomDesigns) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Design d = random_design(seed, {});
    const auto fit = fit_linear(d);
    const auto ols = oracle::dense_ols(d);
    ASSERT_EQ(fit.beta.size(), 3);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(fit.beta[static_cast<Eigen::Index>(j)], ols.beta[j], 1e-8) << "seed " << seed;
      EXPECT_NEAR(fit.coefficients[j].std_error, ols.se[j], 1e-8) << "seed " << seed;
    }
    EXPECT_EQ(fit.df_resid, ols.df_resid);
    EXPECT_TRUE(fit.dropped_collinear.empty());
  }
}

TEST(FitLinear, RobustAndClusterMatchDenseSandwich) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    Design d = random_design(seed, {});
    d.cluster = d.fe[0];
    d.n_clusters = d.n_groups[0];
    const double n = static_cast<double>(d.n_obs());
    FitOptions robust;
    robust.se_type = SeType::robust;
    const auto fr = fit_linear(d, robust);
    const double df = static_cast<double>(fr.df_resid);
    const auto se_r = dense_sandwich_se(d, SeType::robust, n / df);
    FitOptions cluster;
    cluster.se_type = SeType::cluster;
    const auto fc = fit_linear(d, cluster);
    const double g = d.n_clusters;
    const auto se_c = dense_sandwich_se(d, SeType::cluster, g / (g - 1) * (n - 1) / df);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(fr.coefficients[j].std_error, se_r[j], 1e-8);
      EXPECT_NEAR(fc.coefficients[j].std_error, se_c[j], 1e-8);
    }
  }
}

TEST(FitLinear, RecoveredEffectsReproduceFittedValues) {
  const Design d = random_design(3, {});
  const auto fit = fit_linear(d);
  const auto full = oracle::dummy_design(d);
  const auto e = dense_residuals(d, {}, full);
  double sst = 0.0, sse = 0.0;
  const double ybar = d.y.mean();
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    const double fitted = fit.X.row(i).dot(fit.beta) + fit.fe_value(static_cast<std::size_t>(i));
    EXPECT_NEAR(d.y[i] - fitted, e[static_cast<std::size_t>(i)], 1e-8);
    sst += (d.y[i] - ybar) * (d.y[i] - ybar);
    sse += e[static_cast<std::size_t>(i)] * e[static_cast<std::size_t>(i)];
  }
  EXPECT_NEAR(fit.r2, 1.0 - sse / sst, 1e-9);
  // Per-level values add up to the per-observation sum.
  for (Eigen::Index i = 0; i < d.y.size(); ++i) {
    double s = 0.0;
    for (std::size_t dim = 0; dim < fit.fe_levels.size(); ++dim) {
      s += fit.fe_levels[dim][static_cast<std::size_t>(fit.fe_ids[dim][static_cast<std::size_t>(i)])];
    }
    EXPECT_NEAR(s, fit.fe_sum[i], 1e-12);
  }
}

TEST(FitLinear, WithoutFixedEffectsFitsAnIntercept) {
  DesignShape shape;
  shape.levels = {};
  const Design d = random_design(4, shape);
  const auto fit = fit_linear(d);
  const auto ols = oracle::dense_ols(d);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(fit.beta[static_cast<Eigen::Index>(j)], ols.beta[j], 1e-10);
  EXPECT_EQ(fit.df_resid, d.n_obs() - 4);
}

TEST(FitLinear, DropsRegressorsInsideTheFixedEffectSpan) {
  Design d = random_design(6, {});
  d.X.conservativeResize(Eigen::NoChange, 4);
  d.names.push_back("year_trend");
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) d.X(i, 3) = 3.0 * d.fe[1][static_cast<std::size_t>(i)] - 1.0;
  const auto fit = fit_linear(d);
  EXPECT_EQ(fit.dropped_collinear, (std::vector<std::string>{"year_trend"}));
  EXPECT_EQ(fit.names.size(), 3u);
  const auto base = fit_linear(random_design(6, {}));
  EXPECT_NEAR(fit.beta[0], base.beta[0], 1e-9);
}

TEST(FitLinear, RankDeficientRegressorsAreNamed) {
  Design d = random_design(7, {});
  d.X.conservativeResize(Eigen::NoChange, 4);
  d.names.push_back("copy");
  d.X.col(3) = 2.0 * d.X.col(1) - d.X.col(2);
  try {
    fit_linear(d);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("rank-deficient"), std::string::npos) << e.what();
  }
}

TEST(FitLinear, NoResidualDegreesOfFreedom) {
  DesignShape shape;
  shape.n = 6;
  shape.levels = {6};
  shape.k = 1;
  EXPECT_THROW(fit_linear(random_design(1, shape)), NumericalError);
}

TEST(PruneSeparated, MatchesOracleOnRandomDesigns) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    DesignShape shape;
    shape.n = 150;
    shape.levels = {40, 5};
    shape.binary = true;
    shape.beta_scale = 1.5;
    const Design d = random_design(seed, shape);
    const auto ours = prune_separated(d);
    EXPECT_EQ(ours.keep, oracle::prune_separated(d)) << "seed " << seed;
    std::size_t dropped = 0;
    for (auto n : ours.dropped_by_dim) dropped += n;
    EXPECT_EQ(dropped + ours.keep.size(), d.n_obs());
  }
}

TEST(PruneSeparated, IteratesUntilStable) {
  // Author 0 never varies; once it goes, year 1 holds a single y=1 row, and
  // dropping that leaves author 1 with one row.
  Design d;
  d.y = Eigen::VectorXd(6);
  d.y << 0, 0, 1, 0, 1, 0;
  d.X = Eigen::MatrixXd::Zero(6, 0);
  d.fe = {{0, 0, 1, 1, 2, 2}, {0, 1, 1, 0, 0, 0}};
  d.n_groups = {3, 2};
  const auto r = prune_separated(d);
  EXPECT_EQ(r.keep, (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(r.keep, oracle::prune_separated(d));
  EXPECT_EQ(r.dropped_by_dim, (std::vector<std::size_t>{3, 1}));
}

TEST(FitLogit, MatchesDenseLogitAfterPruning) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    DesignShape shape;
    shape.n = 500;
    shape.levels = {25, 4};
    shape.binary = true;
    const Design d = random_design(seed, shape);
    const auto fit = fit_logit_fe(d);
    const Design kept = d.subset(oracle::prune_separated(d));
    const auto dense = oracle::dense_logit(kept);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(fit.beta[static_cast<Eigen::Index>(j)], dense.beta[j], 1e-6) << "seed " << seed;
      EXPECT_NEAR(fit.coefficients[j].std_error, dense.se[j], 1e-5) << "seed " << seed;
    }
    EXPECT_NEAR(fit.loglik, dense.loglik, 1e-6);
    EXPECT_EQ(fit.n_obs_used, kept.n_obs());
    EXPECT_GE(fit.pseudo_r2, 0.0);
    EXPECT_LT(fit.pseudo_r2, 1.0);
    EXPECT_TRUE(fit.converged);
  }
}

TEST(FitLogit, FittedProbabilitiesUseRecoveredEffects) {
  DesignShape shape;
  shape.n = 400;
  shape.levels = {20, 4};
  shape.binary = true;
  const Design d = random_design(9, shape);
  const auto fit = fit_logit_fe(d);
  // Score equations: residuals y - p sum to zero within every FE group.
  const Design kept = d.subset(oracle::prune_separated(d));
  for (std::size_t dim = 0; dim < kept.fe.size(); ++dim) {
    std::vector<double> s(static_cast<std::size_t>(kept.n_groups[dim]), 0.0);
    for (Eigen::Index i = 0; i < kept.y.size(); ++i) {
      const double eta = fit.X.row(i).dot(fit.beta) + fit.fe_value(static_cast<std::size_t>(i));
      s[static_cast<std::size_t>(kept.fe[dim][static_cast<std::size_t>(i)])] += kept.y[i] - 1.0 / (1.0 + std::exp(-eta));
    }
    for (double v : s) EXPECT_NEAR(v, 0.0, 1e-6);
  }
}

TEST(FitLogit, RejectsNonBinaryAndDegenerateOutcomes) {
  DesignShape shape;
  shape.binary = true;
  Design d = random_design(1, shape);
  d.y[0] = 0.5;
  EXPECT_THROW(fit_logit_fe(d), InputError);
  d.y.setOnes();
  EXPECT_THROW(fit_logit_fe(d), NumericalError);
}

TEST(FitLogit, WithoutFixedEffectsMatchesDenseLogit) {
  DesignShape shape;
  shape.n = 300;
  shape.levels = {};
  shape.binary = true;
  const Design d = random_design(2, shape);
  const auto fit = fit_logit_fe(d);
  const auto dense = oracle::dense_logit(d);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(fit.beta[static_cast<Eigen::Index>(j)], dense.beta[j], 1e-7);
}

TEST(FitLogit, RobustUsesSmallSampleFactor) {
  DesignShape shape;
  shape.n = 500;
  shape.levels = {25, 4};
  shape.binary = true;
  Design d = random_design(3, shape);
  FitOptions robust;
  robust.se_type = SeType::robust;
  const auto fit = fit_logit_fe(d, robust);
  const Design kept = d.subset(oracle::prune_separated(d));
  // Sandwich on the dense dummy design at the dense optimum.
  const auto dense = oracle::dense_logit(kept);
  const auto full = oracle::dummy_design(kept);
  const std::size_t p = full[0].size();
  // Full coefficient vector from a Newton solve is not exposed, so rebuild
  // eta from the engine's fit (equal to the dense optimum within 1e-6).
  oracle::Matrix info(p, std::vector<double>(p, 0.0)), meat = info;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double eta = fit.X.row(ii).dot(fit.beta) + fit.fe_value(i);
    const double mu = 1.0 / (1.0 + std::exp(-eta));
    const double r = kept.y[ii] - mu;
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) {
        info[a][b] += mu * (1 - mu) * full[i][a] * full[i][b];
        meat[a][b] += r * r * full[i][a] * full[i][b];
      }
    }
  }
  const auto bread = oracle::invert(info);
  const auto v = times(times(bread, meat), bread);
  const double n = static_cast<double>(kept.n_obs());
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(fit.coefficients[j].std_error, std::sqrt(v[p - 3 + j][p - 3 + j] * n / (n - 1)), 1e-5);
  }
  (void)dense;
}

TEST(BuildDesign, DropsMissingOutcomesAndExpandsLeadership) {
  std::vector<CovariateRow> rows(4);
  for (int i = 0; i < 4; ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    r.work_id = "W" + std::to_string(i);
    r.fe_author = i < 2 ? "B" : "A";
    r.fe_year = 2000 + i;
    r.fe_discipline = 31;
    r.leadership = static_cast<Leadership>(i % 3);
    r.bsf = i % 2 == 1;
    r.n_facilities = r.bsf ? 1 : 0;
  }
  rows[0].rs_dv = 0.1;
  rows[2].rs_dv = 0.3;
  rows[3].rs_dv = 0.4;
  ModelSpec spec;
  spec.outcome = "rs_dv";
  const auto d = build_design(spec, rows);
  EXPECT_EQ(d.n_obs(), 3u);
  EXPECT_EQ(d.n_missing_outcome, 1u);
  EXPECT_EQ(d.row_ids, (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_EQ(d.names.front(), "bsf");
  EXPECT_EQ(d.names.size(), 11u);
  EXPECT_NE(std::find(d.names.begin(), d.names.end(), "leadership_all_south"), d.names.end());
  EXPECT_EQ(d.fe[0], (std::vector<std::int32_t>{1, 0, 0}));  // sorted ids: A=0, B=1
  EXPECT_EQ(d.n_groups, (std::vector<std::int32_t>{2, 3, 1}));
  EXPECT_EQ(d.n_clusters, 2);

  ModelSpec bad = spec;
  bad.regressor = "log_authors";
  EXPECT_THROW(build_design(bad, rows), InputError);
  bad = spec;
  bad.controls = {"rs_dv"};
  EXPECT_THROW(build_design(bad, rows), InputError);
  bad = spec;
  bad.controls = {"shoe_size"};
  EXPECT_THROW(build_design(bad, rows), InputError);
}

TEST(Densify, SortedLevelIds) {
  std::int32_t g = 0;
  const std::vector<std::string> v = {"b", "a", "c", "a"};
  EXPECT_EQ(densify<std::string>(v, &g), (std::vector<std::int32_t>{1, 0, 2, 0}));
  EXPECT_EQ(g, 3);
}

TEST(Stars, Thresholds) {
  EXPECT_STREQ(stars(0.009), "***");
  EXPECT_STREQ(stars(0.01), "**");
  EXPECT_STREQ(stars(0.049), "**");
  EXPECT_STREQ(stars(0.05), "*");
  EXPECT_STREQ(stars(0.0999), "*");
  EXPECT_STREQ(stars(0.1), "");
}

TEST(SeType, ParsesNames) {
  EXPECT_EQ(parse_se_type("cluster"), SeType::cluster);
  EXPECT_STREQ(to_string(parse_se_type("robust")), "robust");
  EXPECT_THROW(parse_se_type("hc3"), InputError);
}

TEST(FitLinear, RuntimeOnSmallDesign) {
  const Design d = random_design(1, {});
  const auto t0 = std::chrono::steady_clock::now();
  fit_linear(d);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

}  // namespace
}  // namespace fmx
