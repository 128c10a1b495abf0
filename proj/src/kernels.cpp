#include "tcnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tcnet::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

inline void gemm_row(const double* a_row, const double* b, double* c_row,
                     std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    if (av == 0.0) continue;
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void gemm_nt_row(const double* a_row, const double* b, double* c_row,
                        std::size_t k, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] += acc;
  }
}

// Row p of aᵀ·b.
inline void gemm_tn_row(const double* a, const double* b, double* c_row,
                        std::size_t p, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + p];
    if (av == 0.0) continue;
    const double* b_row = b + i * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline bool softmax_row(const double* x, const unsigned char* live, double* y,
                        std::size_t cols) {
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < cols; ++j) {
    if (live[j]) {
      mx = std::max(mx, x[j]);
      any = true;
    }
  }
  if (!any) return false;
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (live[j]) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    } else {
      y[j] = 0.0;
    }
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < cols; ++j) {
    if (live[j]) y[j] *= inv;
  }
  return true;
}

}  // namespace

void gemm_serial(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    gemm_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
  }
}

void gemm(std::span<const double> a, std::span<const double> b,
          std::span<double> c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void gemm_nt_serial(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    gemm_nt_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_nt_row(a.data() + r * k, b.data(), c.data() + r * n, k, n);
  }
}

void gemm_tn_serial(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    gemm_tn_row(a.data(), b.data(), c.data() + p * n, p, m, k, n);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t p = 0; p < rows; ++p) {
    const auto r = static_cast<std::size_t>(p);
    gemm_tn_row(a.data(), b.data(), c.data() + r * n, r, m, k, n);
  }
}

bool masked_softmax_rows_serial(std::span<const double> x,
                                std::span<const unsigned char> live,
                                std::span<double> y, std::size_t rows,
                                std::size_t cols) {
  bool ok = true;
  for (std::size_t i = 0; i < rows; ++i) {
    ok = softmax_row(x.data() + i * cols, live.data() + i * cols,
                     y.data() + i * cols, cols) &&
         ok;
  }
  return ok;
}

bool masked_softmax_rows(std::span<const double> x,
                         std::span<const unsigned char> live,
                         std::span<double> y, std::size_t rows,
                         std::size_t cols) {
  int bad = 0;
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) reduction(+ : bad) \
    if (rows * cols > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    if (!softmax_row(x.data() + r * cols, live.data() + r * cols,
                     y.data() + r * cols, cols)) {
      ++bad;
    }
  }
  return bad == 0;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace tcnet::kernels
