#ifndef W2K_KERNELS_HPP_
#define W2K_KERNELS_HPP_

#include "w2k/matrix.hpp"

// Dense kernels used by the attention model and the ranking code.
//
// Two implementations share one interface: `serial` is the plain triple loop
// kept as the reference for tests, `parallel` splits output rows across OpenMP
// threads. Each output element is accumulated over k in ascending order in
// both, so the two agree bit for bit when the compiler does not contract
// multiply-adds differently.
namespace w2k::kernels {

namespace serial {

// C = A * B
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
// C = A * B^T
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
// C = A^T * B
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
// Y = X * W + 1 b^T
void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& y);

}  // namespace serial

namespace parallel {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void affine(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& y);

}  // namespace parallel

// Column sums of X, i.e. 1^T X.
std::vector<double> column_sums(const Matrix& x);

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace w2k::kernels

#endif  // W2K_KERNELS_HPP_
