#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mspt/tensor.hpp"
#include "support.hpp"

using namespace mspt;
using testsupport::rel_err;

TEST_CASE("matmul identity and hand-checked product") {
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
    Tensor out = matmul(a, eye);
    CHECK(out.values() == std::vector<double>{1, 2, 3, 4});

    const Tensor b = Tensor::from_rows({{5, 6}, {7, 8}});
    out = matmul(a, b);
    CHECK(out.values() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch names both shapes") {
    const Tensor a(3, 4);
    const Tensor b(5, 2);
    CHECK_THROWS_WITH_AS(matmul(a, b), "matmul: 3x4 * 5x2", DimensionError);
}

TEST_CASE("matmul gradient of sum(output) matches finite differences") {
    Rng rng(123);
    Tensor a = Tensor::randn(3, 4, rng);
    Tensor b = Tensor::randn(4, 2, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);

    Tape tape;
    Tensor loss = sum_all(matmul(a, b, &tape), &tape);
    tape.backward(loss);

    std::vector<Param> params = {{"a", a}, {"b", b}};
    const auto loss_fn = [&]() { return sum_all(matmul(a, b)).item(); };
    const double worst = testsupport::max_grad_rel_err(params, loss_fn);
    CHECK(worst <= 1e-6);
}

TEST_CASE("sum and linear-map adjoints are exact") {
    Rng rng(5);
    Tensor a = Tensor::randn(4, 3, rng);
    Tensor b = Tensor::randn(3, 5, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);

    Tape tape;
    Tensor loss = sum_all(matmul(a, b, &tape), &tape);
    tape.backward(loss);

    // grad(A) = 1 * B^T, grad(B) = A^T * 1
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            double expect = 0.0;
            for (std::size_t p = 0; p < b.cols(); ++p) expect += b.at(j, p);
            CHECK(a.grad()[i * a.cols() + j] == doctest::Approx(expect).epsilon(1e-12));
        }
    for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double expect = 0.0;
            for (std::size_t p = 0; p < a.rows(); ++p) expect += a.at(p, i);
            CHECK(b.grad()[i * b.cols() + j] == doctest::Approx(expect).epsilon(1e-12));
        }

    // loss = sum(A) alone: grad is all ones.
    a.zero_grad();
    Tape t2;
    Tensor l2 = sum_all(a, &t2);
    t2.backward(l2);
    for (double g : a.grad()) CHECK(g == 1.0);
}

TEST_CASE("softmax_rows basics") {
    Tensor x = Tensor::from_rows({{0, 0, 0}});
    Tensor y = softmax_rows(x);
    for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    x = Tensor::from_rows({{0.0, std::log(3.0)}});
    y = softmax_rows(x);
    CHECK(y.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax_rows is shift invariant and rows sum to one") {
    Rng rng(17);
    Tensor x = Tensor::randn(6, 9, rng);
    Tensor shifted = x.clone();
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) shifted.at(i, j) += 13.75;
    const Tensor y0 = softmax_rows(x);
    const Tensor y1 = softmax_rows(shifted);
    for (std::size_t i = 0; i < y0.size(); ++i)
        CHECK(y0.values()[i] == doctest::Approx(y1.values()[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < y0.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < y0.cols(); ++j) s += y0.at(i, j);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("layer_norm forward cases") {
    Tensor gain = Tensor::from_rows({{1, 1, 1}});
    Tensor bias = Tensor::from_rows({{0, 0, 0}});

    // Constant row maps to zeros.
    Tensor x = Tensor::from_rows({{4.2, 4.2, 4.2}});
    Tensor y = layer_norm(x, gain, bias, 1e-5);
    for (double v : y.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

    // [1,2,3] with eps=0 -> [-sqrt(1.5), 0, sqrt(1.5)]
    x = Tensor::from_rows({{1, 2, 3}});
    y = layer_norm(x, gain, bias, 0.0);
    const double r = std::sqrt(1.5);
    CHECK(y.values()[0] == doctest::Approx(-r).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.values()[2] == doctest::Approx(r).epsilon(1e-12));

    // Any row: output mean 0, variance 1 within eps-induced tolerance.
    Rng rng(2);
    x = Tensor::randn(1, 64, rng);
    y = layer_norm(x, Tensor(1, 64, 1.0), Tensor(1, 64, 0.0), 1e-5);
    double mean = 0.0;
    for (double v : y.values()) mean += v;
    mean /= 64.0;
    double var = 0.0;
    for (double v : y.values()) var += (v - mean) * (v - mean);
    var /= 64.0;
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm shape mismatch is a dimension error") {
    Tensor x(2, 3);
    CHECK_THROWS_AS(layer_norm(x, Tensor(1, 4, 1.0), Tensor(1, 3, 0.0), 1e-5), DimensionError);
}

TEST_CASE("gelu matches the exact Gaussian CDF") {
    Tensor x = Tensor::from_rows({{0.0, 1.0, 30.0, -30.0}});
    Tensor y = gelu(x);
    CHECK(y.values()[0] == 0.0);
    // gelu(1) = Phi(1) ~ 0.841345 (erf evaluation)
    const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    CHECK(y.values()[1] == doctest::Approx(phi1).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(0.841345).epsilon(1e-5));
    CHECK(y.values()[2] == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(std::abs(y.values()[3]) <= 1e-12);
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
    Rng rng(31);
    Tensor x = Tensor::randn(4, 5, rng);
    Tensor gain = Tensor::randn(1, 5, rng);
    Tensor bias = Tensor::randn(1, 5, rng);
    Tensor w = Tensor::randn(5, 3, rng);
    for (Tensor* t : {&x, &gain, &bias, &w}) t->set_requires_grad(true);

    const auto forward = [&](Tape* tape) {
        Tensor h = layer_norm(x, gain, bias, 1e-5, tape);
        h = gelu(h, tape);
        h = softmax_rows(h, tape);
        h = matmul(h, w, tape);
        h = hadamard(h, sigmoid_elem(h, tape), tape);
        h = tanh_elem(h, tape);
        Tensor cm = col_mean(h, tape);
        Tensor cx = col_max(h, tape);
        return sum_all(add(cm, cx, tape), tape);
    };

    Tape tape;
    Tensor loss = forward(&tape);
    tape.backward(loss);

    std::vector<Param> params = {{"x", x}, {"gain", gain}, {"bias", bias}, {"w", w}};
    const auto loss_fn = [&]() { return forward(nullptr).item(); };
    std::string worst_name;
    const double worst = testsupport::max_grad_rel_err(params, loss_fn, 1e-5, &worst_name);
    INFO("worst entry: ", worst_name);
    CHECK(worst <= 1e-4);
}

TEST_CASE("cross_entropy_loss values and analytic gradient") {
    Tensor logits = Tensor::from_rows({{0.0, 0.0}});
    CHECK(cross_entropy_loss(logits, 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    logits = Tensor::from_rows({{5.0, -1e6}});
    CHECK(cross_entropy_loss(logits, 0).item() == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(9);
    Tensor l = Tensor::randn(1, 4, rng);
    l.set_requires_grad(true);
    Tape tape;
    Tensor loss = cross_entropy_loss(l, 2, &tape);
    tape.backward(loss);
    const Tensor p = softmax_rows(l);
    for (std::size_t j = 0; j < 4; ++j) {
        const double expect = p.values()[j] - (j == 2 ? 1.0 : 0.0);
        CHECK(l.grad()[j] == doctest::Approx(expect).epsilon(1e-12));
    }

    CHECK_THROWS_AS(cross_entropy_loss(l, 7), Error);
}

TEST_CASE("backward requires a scalar loss") {
    Tensor x(2, 2, 1.0);
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = scale(x, 2.0, &tape);
    CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("forward is deterministic bit for bit") {
    Rng rng(77);
    Tensor a = Tensor::randn(13, 17, rng);
    Tensor b = Tensor::randn(17, 11, rng);
    const Tensor y1 = softmax_rows(matmul(a, b));
    const Tensor y2 = softmax_rows(matmul(a, b));
    CHECK(y1.values() == y2.values());
}

TEST_CASE("concat, flatten, broadcast-add round trips and gradients") {
    Rng rng(41);
    Tensor a = Tensor::randn(3, 2, rng);
    Tensor b = Tensor::randn(3, 4, rng);
    Tensor rowv = Tensor::randn(1, 6, rng);
    Tensor colv = Tensor::randn(3, 1, rng);
    for (Tensor* t : {&a, &b, &rowv, &colv}) t->set_requires_grad(true);

    const auto forward = [&](Tape* tape) {
        Tensor cat = concat_cols({a, b}, tape);
        cat = add_row_vector(cat, rowv, tape);
        cat = add_col_vector(cat, colv, tape);
        return sum_all(flatten_to_row(cat, tape), tape);
    };

    Tape tape;
    Tensor loss = forward(&tape);
    tape.backward(loss);
    std::vector<Param> params = {{"a", a}, {"b", b}, {"rowv", rowv}, {"colv", colv}};
    const auto loss_fn = [&]() { return forward(nullptr).item(); };
    CHECK(testsupport::max_grad_rel_err(params, loss_fn) <= 1e-6);

    const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
    const Tensor cat3 = concat_cols({m, m, m});
    CHECK(cat3.cols() == 6);
    CHECK(cat3.at(1, 4) == 3.0);
}
