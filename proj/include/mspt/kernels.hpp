#pragma once

#include <cstddef>
#include <cstdint>

namespace mspt::kernels {

// Dense row-major kernels. Each has a `_serial` reference twin; the unsuffixed
// version parallelizes over independent output rows with OpenMP when the work
// is large enough. Per output element the floating-point reduction order is
// identical in both versions (left-to-right over the contraction index), so
// serial and parallel results are bit-identical for any thread count.

// C (m x n) = A (m x k) * B (k x n)
void gemm_nn_serial(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c);
void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);

// C (m x n) = A (m x k) * B^T, B stored (n x k)
void gemm_nt_serial(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);

// C (m x n) = A^T * B, A stored (k x m), B stored (k x n)
void gemm_tn_serial(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);

// Row-wise softmax with per-row max subtraction. in == out is allowed.
void softmax_rows_serial(std::size_t rows, std::size_t cols,
                         const double* in, double* out);
void softmax_rows(std::size_t rows, std::size_t cols,
                  const double* in, double* out);

// For each row of X (n x d), the index of the nearest row of C (k x d) by
// squared Euclidean distance (ties broken toward the lowest index) and that
// distance. Either output pointer may be null.
void assign_nearest_serial(std::size_t n, std::size_t d, std::size_t k,
                           const double* x, const double* c,
                           std::uint32_t* assign, double* dist2);
void assign_nearest(std::size_t n, std::size_t d, std::size_t k,
                    const double* x, const double* c,
                    std::uint32_t* assign, double* dist2);

// Element-op count below which the parallel versions stay serial.
inline constexpr std::size_t kParallelCutoff = 1u << 16;

} // namespace mspt::kernels
