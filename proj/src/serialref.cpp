#include "refchain/serialref.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace refchain::serialref {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  check(a.cols() == b.rows(), "serialref::matmul_nn: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check(a.cols() == b.cols(), "serialref::matmul_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check(a.rows() == b.rows(), "serialref::matmul_tn: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Matrix row_softmax(const Matrix& scores, MaskMode mode) {
  Matrix out(scores.rows(), scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const std::size_t live =
        mode == MaskMode::Causal ? std::min(scores.cols(), i + 1) : scores.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < live; ++j)
      if (scores(i, j) > mx) mx = scores(i, j);
    double z = 0.0;
    for (std::size_t j = 0; j < live; ++j) z += std::exp(scores(i, j) - mx);
    for (std::size_t j = 0; j < live; ++j) out(i, j) = std::exp(scores(i, j) - mx) / z;
    for (std::size_t j = live; j < scores.cols(); ++j) out(i, j) = 0.0;
  }
  return out;
}

Matrix cross_attention_output(const Matrix& q, const Matrix& f) {
  check(q.cols() == f.cols(), "serialref::cross_attention_output: feature widths differ");
  const double scale = 1.0 / std::sqrt(static_cast<double>(f.cols()));
  Matrix scores(q.rows(), f.rows());
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t l = 0; l < f.rows(); ++l) {
      double s = 0.0;
      for (std::size_t p = 0; p < q.cols(); ++p) s += q(i, p) * f(l, p);
      scores(i, l) = s * scale;
    }
  Matrix attn = row_softmax(scores, MaskMode::None);
  Matrix out(q.rows(), f.cols());
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t p = 0; p < f.cols(); ++p) {
      double s = 0.0;
      for (std::size_t l = 0; l < f.rows(); ++l) s += attn(i, l) * f(l, p);
      out(i, p) = s;
    }
  return out;
}

Matrix masked_self_attention(const Matrix& x, const Matrix& wq, const Matrix& wk,
                             const Matrix& wv, const Matrix& wo, std::size_t heads,
                             MaskMode mode) {
  const std::size_t m = x.rows();
  const std::size_t d = x.cols();
  check(heads > 0 && d % heads == 0, "serialref::masked_self_attention: heads must divide d");
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix q = matmul_nn(x, wq);
  Matrix k = matmul_nn(x, wk);
  Matrix v = matmul_nn(x, wv);

  Matrix concat(m, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    Matrix scores(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < hd; ++p) s += q(i, off + p) * k(j, off + p);
        scores(i, j) = s * scale;
      }
    Matrix attn = row_softmax(scores, mode);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < hd; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += attn(i, j) * v(j, off + p);
        concat(i, off + p) = s;
      }
  }
  return matmul_nn(concat, wo);
}

}  // namespace refchain::serialref
