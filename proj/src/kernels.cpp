#include "refchain/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace refchain {
namespace kern {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Matrices in this project are small (hundreds of rows at most), so the
// parallel clause is gated on enough work to amortize the fork.
constexpr std::int64_t kParallelThreshold = 1 << 14;

}  // namespace

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  check(a.cols() == b.rows(), "matmul_nn: inner dimensions differ");
  const std::int64_t m = static_cast<std::int64_t>(a.rows());
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  c = Matrix(a.rows(), n);
#pragma omp parallel for schedule(static) if (m * static_cast<std::int64_t>(k * n) > kParallelThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a.row(static_cast<std::size_t>(i));
    double* ci = c.row(static_cast<std::size_t>(i));
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b.row(p);
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  const std::int64_t m = static_cast<std::int64_t>(a.rows());
  const std::size_t k = a.cols();
  const std::size_t n = b.rows();
  c = Matrix(a.rows(), n);
#pragma omp parallel for schedule(static) if (m * static_cast<std::int64_t>(k * n) > kParallelThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a.row(static_cast<std::size_t>(i));
    double* ci = c.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check(a.rows() == b.rows(), "matmul_tn: inner dimensions differ");
  const std::int64_t m = static_cast<std::int64_t>(a.cols());
  const std::size_t k = a.rows();
  const std::size_t n = b.cols();
  c = Matrix(a.cols(), n);
#pragma omp parallel for schedule(static) if (m * static_cast<std::int64_t>(k * n) > kParallelThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    double* ci = c.row(static_cast<std::size_t>(i));
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(p, static_cast<std::size_t>(i));
      const double* bp = b.row(p);
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void softmax_row(const double* scores, std::size_t n, double* out) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) m = std::max(m, scores[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(scores[j] - m);
    z += out[j];
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
}

void row_softmax(Matrix& scores, MaskMode mode) {
  const std::int64_t m = static_cast<std::int64_t>(scores.rows());
  const std::size_t n = scores.cols();
#pragma omp parallel for schedule(static) if (m * static_cast<std::int64_t>(n) > kParallelThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    double* r = scores.row(static_cast<std::size_t>(i));
    // Live prefix: the whole row in None mode, columns [0, i] in Causal mode.
    const std::size_t live =
        mode == MaskMode::Causal ? std::min(n, static_cast<std::size_t>(i) + 1) : n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < live; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < live; ++j) {
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < live; ++j) r[j] *= inv;
    for (std::size_t j = live; j < n; ++j) r[j] = 0.0;
  }
}

}  // namespace kern
}  // namespace refchain
