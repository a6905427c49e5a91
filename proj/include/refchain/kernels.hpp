#pragma once

#include "refchain/matrix.hpp"

namespace refchain {

// Attention masking for the chain self-attention stage.
enum class MaskMode { Causal, None };

namespace kern {

// Production kernels. Parallelised with OpenMP across output rows only, so
// each element is produced by the same sequence of scalar operations as a
// serial run; results are bit-identical regardless of thread count.

// C = A * B. Shapes: (m x k) * (k x n) -> (m x n).
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c);

// C = A * B^T. Shapes: (m x k) * (n x k) -> (m x n).
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c);

// C = A^T * B. Shapes: (k x m) * (k x n) -> (m x n).
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c);

// Row-wise softmax over `scores`, in place. In Causal mode entries with
// column > row are excluded (their probability is exactly 0.0); in None mode
// every entry participates. Rows always have at least one live entry.
void row_softmax(Matrix& scores, MaskMode mode);

// Numerically stable softmax of one row of n scores into out.
void softmax_row(const double* scores, std::size_t n, double* out);

}  // namespace kern
}  // namespace refchain
