#pragma once

#include <Eigen/Dense>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fmx/hdfe.hpp"
#include "fmx/work_record.hpp"

namespace fmx::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fmx_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Minimal valid work; callers fill in what a test cares about.
inline WorkRecord work(std::string id, int year, std::string journal = {}, std::vector<std::string> refs = {},
                       std::vector<SubfieldShare> shares = {{1101, 1.0}}) {
  WorkRecord w;
  w.work_id = std::move(id);
  w.year = year;
  w.journal_id = std::move(journal);
  w.language = "en";
  w.referenced_work_ids = std::move(refs);
  w.subfield_shares = std::move(shares);
  return w;
}

inline Authorship author(std::string id, std::string country, std::vector<std::string> inst = {"I1"}) {
  Authorship a;
  a.author_id = std::move(id);
  a.country_code = std::move(country);
  a.institution_ids = std::move(inst);
  return a;
}

struct DesignShape {
  std::size_t n = 200;
  std::vector<std::int32_t> levels = {20, 5, 4};
  std::size_t k = 3;
  bool binary = false;
  double beta_scale = 0.5;
};

// Random design in which every level of every dimension is used, so the
// dense dummy oracle sees the same parameter space as the absorber.
inline Design random_design(std::uint64_t seed, const DesignShape& shape) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Design d;
  const auto n = static_cast<Eigen::Index>(shape.n);
  const auto k = static_cast<Eigen::Index>(shape.k);
  d.X = Eigen::MatrixXd::Zero(n, k);
  d.y.resize(n);
  for (std::size_t j = 0; j < shape.k; ++j) d.names.push_back("x" + std::to_string(j));
  for (std::size_t dim = 0; dim < shape.levels.size(); ++dim) {
    const auto g = shape.levels[dim];
    std::vector<std::int32_t> ids(shape.n);
    for (std::size_t i = 0; i < shape.n; ++i) {
      ids[i] = i < static_cast<std::size_t>(g) ? static_cast<std::int32_t>(i)
                                               : static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(g));
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    d.fe.push_back(std::move(ids));
    d.n_groups.push_back(g);
    d.fe_names.push_back("fe" + std::to_string(dim));
  }
  std::vector<std::vector<double>> effects;
  for (auto g : shape.levels) {
    std::vector<double> e(static_cast<std::size_t>(g));
    for (auto& v : e) v = 0.5 * normal(rng);
    effects.push_back(std::move(e));
  }
  std::vector<double> beta(shape.k);
  for (auto& b : beta) b = shape.beta_scale * normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    double eta = 0.0;
    for (std::size_t dim = 0; dim < shape.levels.size(); ++dim) {
      const double fe = effects[dim][static_cast<std::size_t>(d.fe[dim][static_cast<std::size_t>(i)])];
      eta += fe;
      // Regressors correlated with the effects, so absorption matters.
      if (k > 0) d.X(i, 0) += 0.5 * fe;
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      d.X(i, j) += normal(rng);
      eta += beta[static_cast<std::size_t>(j)] * d.X(i, j);
    }
    if (shape.binary) {
      d.y[i] = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    } else {
      d.y[i] = eta + normal(rng);
    }
  }
  d.row_ids.resize(shape.n);
  for (std::size_t i = 0; i < shape.n; ++i) d.row_ids[i] = i;
  d.n_input = shape.n;
  return d;
}

}  // namespace fmx::test
