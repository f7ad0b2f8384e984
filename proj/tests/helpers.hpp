#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nfer/matrix.hpp"

namespace nfer::testutil {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

// Rows drawn from a Dirichlet(1,...,1).
inline Matrix random_simplex_rows(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (m(i, j) = e(rng) + 1e-3);
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= s;
  }
  return m;
}

inline Matrix unit_rows(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Matrix m = random_matrix(r, c, rng);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v * v;
    s = std::sqrt(s);
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nfer_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

}  // namespace nfer::testutil
