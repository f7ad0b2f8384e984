#pragma once

#include "nfer/matrix.hpp"

// Dense kernels used by every forward/backward pass. Two implementations
// share one contract: `nfer::kernels` is OpenMP-parallel over output rows,
// `nfer::kernels::serial` is the plain reference kept for testing and
// benchmarking. Each output element is accumulated by a single thread in the
// same order as the serial loop, so both produce bitwise identical results.

namespace nfer::kernels {

/// C = A * B^T, with A n x k and B m x k.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// C = A * B, with A n x k and B k x m.
Matrix matmul_nn(const Matrix& a, const Matrix& b);
/// C = A^T * B, with A k x n and B k x m.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// Adds `bias` (1 x m) to every row of `m`.
void add_row_bias(Matrix& m, const Matrix& bias);
/// Column sums of `m` as a 1 x cols matrix.
Matrix column_sums(const Matrix& m);
/// Row-wise numerically stable softmax.
Matrix softmax_rows(const Matrix& logits);
/// Euclidean norms of each row.
std::vector<double> row_norms(const Matrix& m);
/// Pairwise cosine similarities of the rows of `m` (n x n). Rows must be nonzero.
Matrix cosine_similarity(const Matrix& m);

namespace serial {
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
void add_row_bias(Matrix& m, const Matrix& bias);
Matrix column_sums(const Matrix& m);
Matrix softmax_rows(const Matrix& logits);
std::vector<double> row_norms(const Matrix& m);
Matrix cosine_similarity(const Matrix& m);
}  // namespace serial

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace nfer::kernels
