#include "mspt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mspt::kernels {

namespace {

inline void gemm_nn_rows(std::size_t i0, std::size_t i1, std::size_t k,
                         std::size_t n, const double* a, const double* b,
                         double* c) {
    for (std::size_t i = i0; i < i1; ++i) {
        double* crow = c + i * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline void gemm_nt_rows(std::size_t i0, std::size_t i1, std::size_t k,
                         std::size_t n, const double* a, const double* b,
                         double* c) {
    for (std::size_t i = i0; i < i1; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

// C rows indexed by i; A is (k x m) so A^T row i is the strided column i.
inline void gemm_tn_rows(std::size_t i0, std::size_t i1, std::size_t m,
                         std::size_t k, std::size_t n, const double* a,
                         const double* b, double* c) {
    for (std::size_t i = i0; i < i1; ++i) {
        double* crow = c + i * n;
        std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p * m + i];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline void softmax_row(std::size_t cols, const double* in, double* out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double e = std::exp(in[j] - mx);
        out[j] = e;
        sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
}

inline void nearest_rows(std::size_t i0, std::size_t i1, std::size_t d,
                         std::size_t k, const double* x, const double* c,
                         std::uint32_t* assign, double* dist2) {
    for (std::size_t i = i0; i < i1; ++i) {
        const double* xi = x + i * d;
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_k = 0;
        for (std::size_t q = 0; q < k; ++q) {
            const double* cq = c + q * d;
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = xi[j] - cq[j];
                acc += diff * diff;
            }
            if (acc < best) {
                best = acc;
                best_k = static_cast<std::uint32_t>(q);
            }
        }
        if (assign) assign[i] = best_k;
        if (dist2) dist2[i] = best;
    }
}

} // namespace

void gemm_nn_serial(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c) {
    gemm_nn_rows(0, m, k, n, a, b, c);
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
    if (m * k * n < kParallelCutoff) {
        gemm_nn_rows(0, m, k, n, a, b, c);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(m); ++i) {
        gemm_nn_rows(static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1,
                     k, n, a, b, c);
    }
}

void gemm_nt_serial(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c) {
    gemm_nt_rows(0, m, k, n, a, b, c);
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
    if (m * k * n < kParallelCutoff) {
        gemm_nt_rows(0, m, k, n, a, b, c);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(m); ++i) {
        gemm_nt_rows(static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1,
                     k, n, a, b, c);
    }
}

void gemm_tn_serial(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c) {
    gemm_tn_rows(0, m, m, k, n, a, b, c);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c) {
    if (m * k * n < kParallelCutoff) {
        gemm_tn_rows(0, m, m, k, n, a, b, c);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(m); ++i) {
        gemm_tn_rows(static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1,
                     m, k, n, a, b, c);
    }
}

void softmax_rows_serial(std::size_t rows, std::size_t cols, const double* in,
                         double* out) {
    for (std::size_t i = 0; i < rows; ++i) softmax_row(cols, in + i * cols, out + i * cols);
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* in,
                  double* out) {
    if (rows * cols < kParallelCutoff) {
        softmax_rows_serial(rows, cols, in, out);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(rows); ++i) {
        softmax_row(cols, in + static_cast<std::size_t>(i) * cols,
                    out + static_cast<std::size_t>(i) * cols);
    }
}

void assign_nearest_serial(std::size_t n, std::size_t d, std::size_t k,
                           const double* x, const double* c,
                           std::uint32_t* assign, double* dist2) {
    nearest_rows(0, n, d, k, x, c, assign, dist2);
}

void assign_nearest(std::size_t n, std::size_t d, std::size_t k,
                    const double* x, const double* c, std::uint32_t* assign,
                    double* dist2) {
    if (n * d * k < kParallelCutoff) {
        nearest_rows(0, n, d, k, x, c, assign, dist2);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        nearest_rows(static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1,
                     d, k, x, c, assign, dist2);
    }
}

} // namespace mspt::kernels
