#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "mspt/kernels.hpp"
#include "mspt/rng.hpp"

using namespace mspt;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

} // namespace

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    Rng rng(42);
    // Ragged sizes straddling the parallel cutoff.
    const std::size_t shapes[][3] = {
        {1, 1, 1}, {3, 5, 7}, {17, 31, 13}, {64, 64, 64}, {129, 65, 33}, {200, 150, 90},
    };
    for (const auto& s : shapes) {
        const std::size_t m = s[0], k = s[1], n = s[2];
        const auto a = random_vec(m * k, rng);
        const auto b_nn = random_vec(k * n, rng);
        const auto b_nt = random_vec(n * k, rng);
        const auto a_tn = random_vec(k * m, rng);

        std::vector<double> c0(m * n), c1(m * n);
        kernels::gemm_nn_serial(m, k, n, a.data(), b_nn.data(), c0.data());
        kernels::gemm_nn(m, k, n, a.data(), b_nn.data(), c1.data());
        CHECK(c0 == c1);

        kernels::gemm_nt_serial(m, k, n, a.data(), b_nt.data(), c0.data());
        kernels::gemm_nt(m, k, n, a.data(), b_nt.data(), c1.data());
        CHECK(c0 == c1);

        kernels::gemm_tn_serial(m, k, n, a_tn.data(), b_nn.data(), c0.data());
        kernels::gemm_tn(m, k, n, a_tn.data(), b_nn.data(), c1.data());
        CHECK(c0 == c1);
    }
}

TEST_CASE("gemm_nn matches hand arithmetic") {
    const std::vector<double> a = {1, 2, 3, 4};
    const std::vector<double> b = {5, 6, 7, 8};
    std::vector<double> c(4);
    kernels::gemm_nn(2, 2, 2, a.data(), b.data(), c.data());
    CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("gemm transpose variants agree with gemm_nn on materialized transposes") {
    Rng rng(7);
    const std::size_t m = 9, k = 11, n = 6;
    const auto a = random_vec(m * k, rng);
    const auto b = random_vec(k * n, rng);

    std::vector<double> bt(n * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
    std::vector<double> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];

    std::vector<double> ref(m * n), got(m * n);
    kernels::gemm_nn(m, k, n, a.data(), b.data(), ref.data());
    kernels::gemm_nt(m, k, n, a.data(), bt.data(), got.data());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    kernels::gemm_tn(m, k, n, at.data(), b.data(), got.data());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("softmax_rows parallel equals serial and rows sum to one") {
    Rng rng(3);
    const std::size_t rows = 300, cols = 250; // above the cutoff
    const auto in = random_vec(rows * cols, rng);
    std::vector<double> o0(rows * cols), o1(rows * cols);
    kernels::softmax_rows_serial(rows, cols, in.data(), o0.data());
    kernels::softmax_rows(rows, cols, in.data(), o1.data());
    CHECK(o0 == o1);
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += o0[i * cols + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("assign_nearest breaks ties toward the lowest center index") {
    // Two identical centers; every point must map to center 0.
    const std::vector<double> x = {0.5, 0.5, -1.0, 2.0};
    const std::vector<double> c = {1.0, 1.0, 1.0, 1.0};
    std::vector<std::uint32_t> assign(2);
    std::vector<double> d2(2);
    kernels::assign_nearest(2, 2, 2, x.data(), c.data(), assign.data(), d2.data());
    CHECK(assign[0] == 0);
    CHECK(assign[1] == 0);
    CHECK(d2[0] == doctest::Approx(0.5));
}

TEST_CASE("assign_nearest parallel equals serial") {
    Rng rng(11);
    const std::size_t n = 500, d = 24, k = 10; // above the cutoff
    const auto x = random_vec(n * d, rng);
    const auto c = random_vec(k * d, rng);
    std::vector<std::uint32_t> a0(n), a1(n);
    std::vector<double> d0(n), d1(n);
    kernels::assign_nearest_serial(n, d, k, x.data(), c.data(), a0.data(), d0.data());
    kernels::assign_nearest(n, d, k, x.data(), c.data(), a1.data(), d1.data());
    CHECK(a0 == a1);
    CHECK(d0 == d1);
}
