#include "nfer/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "nfer/core.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nfer::kernels {

namespace {
// Below this many multiply-adds the fork/join cost outweighs the work.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t m = b.rows(), k = a.cols();
  Matrix c(a.rows(), m);
#pragma omp parallel for schedule(static) if (a.rows() * m * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    double* ci = c.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.row(j).data();
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
  return c;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul_nn: inner dimensions differ");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t m = b.cols(), k = a.cols();
  Matrix c(a.rows(), m);
#pragma omp parallel for schedule(static) if (a.rows() * m * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.cols());
  const std::size_t m = b.cols(), k = a.rows();
  Matrix c(a.cols(), m);
#pragma omp parallel for schedule(static) if (a.cols() * m * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double* ci = c.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a(p, i);
      const double* bp = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) throw ShapeError("add_row_bias: bias shape");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(m.rows());
#pragma omp parallel for schedule(static) if (m.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix s(1, m.cols());
  const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>(m.cols());
#pragma omp parallel for schedule(static) if (m.size() > kParallelWork)
  for (std::ptrdiff_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, j);
    s(0, j) = acc;
  }
  return s;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(logits.rows());
#pragma omp parallel for schedule(static) if (logits.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto in = logits.row(i);
    auto out = p.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (double& x : out) x /= z;
  }
  return p;
}

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> norms(m.rows());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(m.rows());
#pragma omp parallel for schedule(static) if (m.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (double x : m.row(i)) acc += x * x;
    norms[i] = std::sqrt(acc);
  }
  return norms;
}

Matrix cosine_similarity(const Matrix& m) {
  const auto norms = row_norms(m);
  for (double nrm : norms)
    if (!(nrm > 0.0)) throw NumericError("cosine similarity: zero-norm row");
  const std::size_t n = m.rows();
  Matrix s(n, n);
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * n * m.cols() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < m.cols(); ++p) acc += m(i, p) * m(j, p);
      s(i, j) = std::clamp(acc / (norms[i] * norms[j]), -1.0, 1.0);
    }
  }
  return s;
}

}  // namespace nfer::kernels
