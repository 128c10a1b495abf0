#pragma once

// Dense row-major kernels used by the tensor ops.
//
// Every kernel comes in two flavours: a `*_serial` reference that is the
// plain loop nest, and an OpenMP version that splits the outermost output
// dimension across threads. Each output element is produced by exactly one
// thread with the same summation order as the serial loop, so both flavours
// are bit-identical for any thread count.

#include <cstddef>
#include <span>

namespace tcnet::kernels {

// c[m×n] += a[m×k] · b[k×n]
void gemm_serial(std::span<const double> a, std::span<const double> b,
                 std::span<double> c, std::size_t m, std::size_t k,
                 std::size_t n);
void gemm(std::span<const double> a, std::span<const double> b,
          std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

// c[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt_serial(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

// c[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn_serial(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

// Row-wise softmax over `cols` columns restricted to entries with live != 0.
// Dead entries are written as exactly 0. Returns false if some row has no
// live entry (that row is left untouched).
bool masked_softmax_rows_serial(std::span<const double> x,
                                std::span<const unsigned char> live,
                                std::span<double> y, std::size_t rows,
                                std::size_t cols);
bool masked_softmax_rows(std::span<const double> x,
                         std::span<const unsigned char> live,
                         std::span<double> y, std::size_t rows,
                         std::size_t cols);

// Number of threads the parallel kernels will use.
int max_threads();

}  // namespace tcnet::kernels
