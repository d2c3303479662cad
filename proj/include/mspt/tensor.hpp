#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "mspt/common.hpp"
#include "mspt/rng.hpp"

namespace mspt {

namespace detail {
struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad; // empty until the first accumulation
};
} // namespace detail

// Dense 2-D tensor of 64-bit floats, row-major. Copying a Tensor copies the
// handle; both handles alias the same buffer (parameters rely on this).
// Use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols, 0.0); }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor from_values(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor randn(std::size_t rows, std::size_t cols, Rng& rng,
                        double mean = 0.0, double sd = 1.0);

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_ ? node_->rows : 0; }
    std::size_t cols() const { return node_ ? node_->cols : 0; }
    std::size_t size() const { return rows() * cols(); }

    double at(std::size_t i, std::size_t j) const { return node_->values[i * node_->cols + j]; }
    double& at(std::size_t i, std::size_t j) { return node_->values[i * node_->cols + j]; }
    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& values() { return node_->values; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        node_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    // Accumulates len values into the grad buffer, allocating zeros first if absent.
    void accumulate_grad(const double* g, std::size_t len);
    void zero_grad() {
        if (node_) node_->grad.clear();
    }
    void scale_grad(double factor) {
        if (node_)
            for (auto& g : node_->grad) g *= factor;
    }

    // Value of a 1x1 tensor.
    double item() const;

    Tensor clone() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode tape: ops append their adjoint step in execution order;
// backward() replays every step exactly once, in reverse, then clears.
class Tape {
public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
    std::size_t size() const { return steps_.size(); }

    // loss must be 1x1. Seeds d(loss)/d(loss) = 1 and runs all adjoints.
    void backward(Tensor& loss);

    void clear() { steps_.clear(); }

private:
    std::vector<std::function<void()>> steps_;
};

// Differentiable operations. Every op validates shapes (DimensionError names
// the offending shapes) and records its adjoint on `tape` when the tape is
// non-null and some input requires gradients. Passing a null tape runs the
// pure forward computation.

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// a * b^T, b stored (n x k)
Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// a^T * b, a stored (k x m)
Tensor matmul_tn(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double factor, Tape* tape = nullptr);
Tensor hadamard(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// m + broadcast of a 1 x cols row vector down every row.
Tensor add_row_vector(const Tensor& m, const Tensor& v, Tape* tape = nullptr);
// m + broadcast of a rows x 1 column vector across every column.
Tensor add_col_vector(const Tensor& m, const Tensor& v, Tape* tape = nullptr);

// Each output row is a probability vector (per-row max subtraction).
Tensor softmax_rows(const Tensor& a, Tape* tape = nullptr);

// Per-row normalization over the feature axis with population variance:
// gain * (x - mean) / sqrt(var + eps) + bias. gain/bias are 1 x cols.
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps, Tape* tape = nullptr);

// Exact Gaussian-CDF GELU: x * Phi(x) via erf (not the tanh approximation).
Tensor gelu(const Tensor& a, Tape* tape = nullptr);
Tensor tanh_elem(const Tensor& a, Tape* tape = nullptr);
Tensor sigmoid_elem(const Tensor& a, Tape* tape = nullptr);

// Column-wise concatenation; all pieces must share a row count.
Tensor concat_cols(const std::vector<Tensor>& pieces, Tape* tape = nullptr);

// Row-major flatten to 1 x (rows*cols).
Tensor flatten_to_row(const Tensor& a, Tape* tape = nullptr);

// 1 x cols column maxima; gradient flows to the first maximal row per column.
Tensor col_max(const Tensor& a, Tape* tape = nullptr);
// 1 x cols column means.
Tensor col_mean(const Tensor& a, Tape* tape = nullptr);

Tensor sum_all(const Tensor& a, Tape* tape = nullptr);

// -log softmax(logits)[label] for a 1 x d_out logits row, in log-space.
Tensor cross_entropy_loss(const Tensor& logits, std::size_t label, Tape* tape = nullptr);

} // namespace mspt
