#include "w2k/kernels.hpp"

namespace w2k::kernels {

namespace serial {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows()) throw std::invalid_argument("gemm_nn: inner dimensions differ");
  const std::size_t n = a.rows(), m = b.cols(), kk = a.cols();
  c = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < kk; ++k) sum += a(i, k) * b(k, j);
      c(i, j) = sum;
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols()) throw std::invalid_argument("gemm_nt: inner dimensions differ");
  const std::size_t n = a.rows(), m = b.rows(), kk = a.cols();
  c = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < kk; ++k) sum += a(i, k) * b(j, k);
      c(i, j) = sum;
    }
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows()) throw std::invalid_argument("gemm_tn: inner dimensions differ");
  const std::size_t n = a.cols(), m = b.cols(), kk = a.rows();
  c = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < kk; ++k) sum += a(k, i) * b(k, j);
      c(i, j) = sum;
    }
  }
}

void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& y) {
  if (bias.size() != w.cols()) throw std::invalid_argument("affine: bias length differs from output width");
  gemm_nn(x, w, y);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bias[j];
}

}  // namespace serial

std::vector<double> column_sums(const Matrix& x) {
  std::vector<double> out(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  return out;
}

}  // namespace w2k::kernels
