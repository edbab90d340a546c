#include "w2k/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace w2k::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

}  // namespace

namespace parallel {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows()) throw std::invalid_argument("gemm_nn: inner dimensions differ");
  const std::size_t n = a.rows(), m = b.cols(), kk = a.cols();
  c = Matrix(n, m);
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * m * kk > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < kk; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols()) throw std::invalid_argument("gemm_nt: inner dimensions differ");
  const std::size_t n = a.rows(), m = b.rows(), kk = a.cols();
  c = Matrix(n, m);
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * m * kk > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < m; ++j) c(i, j) = dot(ai, b.row(j));
  }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows()) throw std::invalid_argument("gemm_tn: inner dimensions differ");
  const std::size_t n = a.cols(), m = b.cols(), kk = a.rows();
  c = Matrix(n, m);
  const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n * m * kk > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double* ci = c.row(i).data();
    for (std::size_t k = 0; k < kk; ++k) {
      const double aki = a(k, i);
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
    }
  }
}

void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& y) {
  if (bias.size() != w.cols()) throw std::invalid_argument("affine: bias length differs from output width");
  gemm_nn(x, w, y);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double* yi = y.row(i).data();
    for (std::size_t j = 0; j < y.cols(); ++j) yi[j] += bias[j];
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace w2k::kernels
