#pragma once

#include <cstdint>

// Dense double-precision kernels behind the tensor ops. All matmul kernels
// accumulate into their output; forward paths hand in freshly zeroed
// buffers, backward paths rely on the accumulation. The parallel variants
// split work over independent output elements only, so each element keeps
// its serial summation order and the results are bitwise identical to the
// serial reference in kernels::ref.
namespace relmem::kernels {

// c[m,n] += a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n);

// c[m,n] += a[m,k] * b[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);

// c[m,n] += a[k,m]^T * b[k,n]
void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);

// Row-wise softmax over `scale * scores` with max-subtraction. mask (may be
// null) marks admissible entries with nonzero bytes; masked entries come out
// exactly 0. Overwrites out; out must not alias scores. Throws
// std::invalid_argument on a fully masked row.
void softmax_rows(const double* scores, const uint8_t* mask, double scale,
                  double* out, int64_t rows, int64_t cols);

// Serial reference implementations, kept for equivalence tests and the
// benchmark tool.
namespace ref {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n);
void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);
void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n);
void softmax_rows(const double* scores, const uint8_t* mask, double scale,
                  double* out, int64_t rows, int64_t cols);

}  // namespace ref

}  // namespace relmem::kernels
