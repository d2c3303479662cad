#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mspt/tensor.hpp"

namespace mspt {

// Per-scale cross-attention projections, all d_k x d_k.
struct ScaleAttentionParams {
    Tensor w_q;
    Tensor w_k;
    Tensor w_v;
};

struct PTParams {
    std::size_t d_k = 0;
    std::size_t n_iters = 1; // re-calibration passes; weights shared across passes
    std::vector<std::pair<std::string, ScaleAttentionParams>> scales;

    const ScaleAttentionParams& scale(const std::string& name) const;
};

struct PTOutput {
    Tensor recalibrated; // K x d_k
    Tensor attention;    // K x n, row-stochastic; final pass when n_iters > 1
};

// One pass: Q = P*W_q, Keys = X*W_k, A = softmax_rows(Q*Keys^T / sqrt(d_k)),
// P_hat = A*(X*W_v). With n_iters > 1 the output of pass i becomes the query
// of pass i+1; the attention of the final pass is returned.
PTOutput pt_forward(const Tensor& prototypes, const Tensor& instances,
                    const ScaleAttentionParams& params, std::size_t n_iters = 1,
                    Tape* tape = nullptr);

// Weights ~ N(0, 1/d_k) from a seeded stream per scale and matrix.
PTParams pt_init(std::size_t d_k, const std::vector<std::string>& scale_names,
                 std::size_t n_iters, std::uint64_t seed);

// Analytic FLOP count of one pt_forward pass, split into terms. The
// linear-vs-quadratic attention claim concerns the attention-matrix terms
// (logits + value mix); the input projections are shared by both routes.
struct AttentionCost {
    double logits_flops = 0.0;     // 2*K*n*d_k
    double mix_flops = 0.0;        // 2*K*n*d_k
    double projection_flops = 0.0; // 4*n*d_k^2 + 2*K*d_k^2
    double attention_flops() const { return logits_flops + mix_flops; }
    double total() const { return logits_flops + mix_flops + projection_flops; }
};

AttentionCost pt_attention_cost(std::size_t n, std::size_t k, std::size_t d_k);

} // namespace mspt
