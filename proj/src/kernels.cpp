#include "relmem/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace relmem::kernels {

namespace {
// below this many multiply-adds the fork/join overhead dominates on small
// core counts
constexpr int64_t kParallelFlops = 1 << 16;

void check_full_rows(const uint8_t* mask, int64_t rows, int64_t cols) {
  if (!mask) return;
  for (int64_t i = 0; i < rows; ++i) {
    bool any = false;
    for (int64_t j = 0; j < cols; ++j) {
      if (mask[i * cols + j]) {
        any = true;
        break;
      }
    }
    if (!any) {
      throw std::invalid_argument("softmax_rows: fully masked row " +
                                  std::to_string(i));
    }
  }
}

inline void softmax_one_row(const double* s, const uint8_t* m, double scale,
                            double* o, int64_t cols) {
  double mx = -HUGE_VAL;
  for (int64_t j = 0; j < cols; ++j) {
    if (!m || m[j]) mx = std::max(mx, scale * s[j]);
  }
  double denom = 0.0;
  for (int64_t j = 0; j < cols; ++j) {
    if (!m || m[j]) {
      o[j] = std::exp(scale * s[j] - mx);
      denom += o[j];
    } else {
      o[j] = 0.0;
    }
  }
  const double inv = 1.0 / denom;
  for (int64_t j = 0; j < cols; ++j) o[j] *= inv;
}
}  // namespace

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelFlops)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelFlops)
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelFlops)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void softmax_rows(const double* scores, const uint8_t* mask, double scale,
                  double* out, int64_t rows, int64_t cols) {
  check_full_rows(mask, rows, cols);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelFlops)
  for (int64_t i = 0; i < rows; ++i) {
    softmax_one_row(scores + i * cols, mask ? mask + i * cols : nullptr, scale,
                    out + i * cols, cols);
  }
}

namespace ref {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k,
            int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int64_t m,
               int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void softmax_rows(const double* scores, const uint8_t* mask, double scale,
                  double* out, int64_t rows, int64_t cols) {
  check_full_rows(mask, rows, cols);
  for (int64_t i = 0; i < rows; ++i) {
    softmax_one_row(scores + i * cols, mask ? mask + i * cols : nullptr, scale,
                    out + i * cols, cols);
  }
}

}  // namespace ref

}  // namespace relmem::kernels
