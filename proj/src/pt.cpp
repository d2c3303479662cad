#include "mspt/pt.hpp"

#include <cmath>

#include "mspt/common.hpp"
#include "mspt/rng.hpp"

namespace mspt {

const ScaleAttentionParams& PTParams::scale(const std::string& name) const {
    for (const auto& [sname, p] : scales)
        if (sname == name) return p;
    throw ConfigError("PT params: no scale '" + name + "'");
}

PTOutput pt_forward(const Tensor& prototypes, const Tensor& instances,
                    const ScaleAttentionParams& params, std::size_t n_iters, Tape* tape) {
    const std::size_t d_k = params.w_q.rows();
    if (params.w_q.cols() != d_k || params.w_k.rows() != d_k || params.w_k.cols() != d_k ||
        params.w_v.rows() != d_k || params.w_v.cols() != d_k)
        throw DimensionError("pt_forward: projection matrices must all be " + shape_str(d_k, d_k));
    if (prototypes.cols() != d_k || instances.cols() != d_k)
        throw DimensionError("pt_forward: prototypes " +
                             shape_str(prototypes.rows(), prototypes.cols()) + " and instances " +
                             shape_str(instances.rows(), instances.cols()) +
                             " must have " + std::to_string(d_k) + " columns");
    if (n_iters == 0) throw ConfigError("pt_forward: n_iters must be >= 1");

    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    const Tensor keys = matmul(instances, params.w_k, tape);
    const Tensor values = matmul(instances, params.w_v, tape);

    PTOutput out;
    Tensor query_src = prototypes;
    for (std::size_t pass = 0; pass < n_iters; ++pass) {
        const Tensor q = matmul(query_src, params.w_q, tape);
        const Tensor logits = scale(matmul_nt(q, keys, tape), inv_sqrt_dk, tape);
        out.attention = softmax_rows(logits, tape);
        out.recalibrated = matmul(out.attention, values, tape);
        query_src = out.recalibrated;
    }
    return out;
}

PTParams pt_init(std::size_t d_k, const std::vector<std::string>& scale_names,
                 std::size_t n_iters, std::uint64_t seed) {
    if (d_k == 0) throw ConfigError("pt_init: d_k must be >= 1");
    PTParams params;
    params.d_k = d_k;
    params.n_iters = n_iters;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d_k));
    for (const auto& sname : scale_names) {
        ScaleAttentionParams p;
        Rng rq = derive_rng(seed, "pt:" + sname + ":w_q");
        Rng rk = derive_rng(seed, "pt:" + sname + ":w_k");
        Rng rv = derive_rng(seed, "pt:" + sname + ":w_v");
        p.w_q = Tensor::randn(d_k, d_k, rq, 0.0, sd);
        p.w_k = Tensor::randn(d_k, d_k, rk, 0.0, sd);
        p.w_v = Tensor::randn(d_k, d_k, rv, 0.0, sd);
        params.scales.emplace_back(sname, std::move(p));
    }
    return params;
}

AttentionCost pt_attention_cost(std::size_t n, std::size_t k, std::size_t d_k) {
    if (n == 0 || k == 0 || d_k == 0)
        throw ConfigError("pt_attention_cost: arguments must be positive");
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    const double dd = static_cast<double>(d_k);
    AttentionCost cost;
    cost.logits_flops = 2.0 * kd * nd * dd;
    cost.mix_flops = 2.0 * kd * nd * dd;
    cost.projection_flops = 4.0 * nd * dd * dd + 2.0 * kd * dd * dd;
    return cost;
}

} // namespace mspt
