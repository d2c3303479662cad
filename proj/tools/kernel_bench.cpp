// Serial vs OpenMP kernel comparison. The parallel versions must be
// bit-identical to the serial reference; this prints timings, speedups and
// the equality verdict per kernel and size.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mspt/kernels.hpp"
#include "mspt/rng.hpp"

using namespace mspt;
using Clock = std::chrono::steady_clock;

namespace {

double time_best_of(int repeats, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        fn();
        const double s = std::chrono::duration<double>(Clock::now() - t0).count();
        if (s < best) best = s;
    }
    return best;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

void report(const char* name, std::size_t size_tag, double serial, double parallel, bool equal) {
    std::printf("%-16s n=%-6zu serial=%9.4f ms  parallel=%9.4f ms  speedup=%5.2fx  %s\n", name,
                size_tag, serial * 1e3, parallel * 1e3, serial / parallel,
                equal ? "bitwise-equal" : "MISMATCH");
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; parallel paths run serially\n");
#endif

    Rng rng(99);
    const int repeats = 5;

    for (std::size_t n : {128, 256, 512, 1024}) {
        const auto a = random_vec(n * n, rng);
        const auto b = random_vec(n * n, rng);
        std::vector<double> c0(n * n), c1(n * n);

        const double ts = time_best_of(repeats, [&]() {
            kernels::gemm_nn_serial(n, n, n, a.data(), b.data(), c0.data());
        });
        const double tp = time_best_of(repeats, [&]() {
            kernels::gemm_nn(n, n, n, a.data(), b.data(), c1.data());
        });
        report("gemm_nn", n, ts, tp, c0 == c1);
    }

    for (std::size_t rows : {512, 2048, 8192}) {
        const std::size_t cols = 512;
        const auto in = random_vec(rows * cols, rng);
        std::vector<double> o0(rows * cols), o1(rows * cols);
        const double ts = time_best_of(repeats, [&]() {
            kernels::softmax_rows_serial(rows, cols, in.data(), o0.data());
        });
        const double tp = time_best_of(repeats, [&]() {
            kernels::softmax_rows(rows, cols, in.data(), o1.data());
        });
        report("softmax_rows", rows, ts, tp, o0 == o1);
    }

    for (std::size_t n : {2048, 8192, 32768}) {
        const std::size_t d = 64, k = 16;
        const auto x = random_vec(n * d, rng);
        const auto c = random_vec(k * d, rng);
        std::vector<std::uint32_t> a0(n), a1(n);
        std::vector<double> d0(n), d1(n);
        const double ts = time_best_of(repeats, [&]() {
            kernels::assign_nearest_serial(n, d, k, x.data(), c.data(), a0.data(), d0.data());
        });
        const double tp = time_best_of(repeats, [&]() {
            kernels::assign_nearest(n, d, k, x.data(), c.data(), a1.data(), d1.data());
        });
        report("assign_nearest", n, ts, tp, a0 == a1 && d0 == d1);
    }
    return 0;
}
