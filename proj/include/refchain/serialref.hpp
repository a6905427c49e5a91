#pragma once

#include "refchain/kernels.hpp"
#include "refchain/matrix.hpp"

namespace refchain::serialref {

// Naive single-threaded reference implementations, written as independent
// straight-line loops rather than calls into the production kernels. They are
// the comparison baseline for tests and the benchmark; the CLI never links
// this library.

Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// Row-wise softmax with the same masking semantics as kern::row_softmax.
Matrix row_softmax(const Matrix& scores, MaskMode mode);

// Reference for the parameter-free cross-attention stage: given already
// refined queries Q (M x d) and proposal features F (L x d), returns the
// attended output A * F where A = rowsoftmax(Q * F^T / sqrt(d)).
Matrix cross_attention_output(const Matrix& q, const Matrix& f);

// Reference multi-head masked self-attention: X (M x d), weight matrices all
// (d x d), `heads` splitting d evenly. No residual, no layer norm.
Matrix masked_self_attention(const Matrix& x, const Matrix& wq, const Matrix& wk,
                             const Matrix& wv, const Matrix& wo, std::size_t heads,
                             MaskMode mode);

}  // namespace refchain::serialref
