#include "mspt/mffm.hpp"

#include "mspt/common.hpp"

namespace mspt {

Tensor concat_pyramid(const std::vector<Tensor>& per_scale, Tape* tape) {
    if (per_scale.empty()) throw DimensionError("concat_pyramid: no scales");
    const std::size_t k = per_scale.front().rows();
    const std::size_t d = per_scale.front().cols();
    for (const auto& p : per_scale)
        if (p.rows() != k || p.cols() != d)
            throw DimensionError("concat_pyramid: block " + shape_str(p.rows(), p.cols()) +
                                 " does not match " + shape_str(k, d));
    return concat_cols(per_scale, tape);
}

Tensor mixer_token_sublayer(const Tensor& x, const MixerParams& p, Tape* tape) {
    // LN over channels, then mix tokens: columns of the K x C layout are
    // length-K token vectors, so the MLP multiplies from the left.
    Tensor normed = layer_norm(x, p.ln1_gain, p.ln1_bias, kLayerNormEps, tape);
    Tensor hidden = matmul(p.w1, normed, tape); // hidden x C
    if (p.use_bias) hidden = add_col_vector(hidden, p.b1, tape);
    hidden = gelu(hidden, tape);
    Tensor mixed = matmul(p.w2, hidden, tape); // K x C
    if (p.use_bias) mixed = add_col_vector(mixed, p.b2, tape);
    return add(x, mixed, tape);
}

Tensor mixer_channel_sublayer(const Tensor& x, const MixerParams& p, Tape* tape) {
    // LN over channels, then mix channels within each token row.
    Tensor normed = layer_norm(x, p.ln2_gain, p.ln2_bias, kLayerNormEps, tape);
    Tensor hidden = matmul_nt(normed, p.w3, tape); // K x hidden
    if (p.use_bias) hidden = add_row_vector(hidden, p.b3, tape);
    hidden = gelu(hidden, tape);
    Tensor mixed = matmul_nt(hidden, p.w4, tape); // K x C
    if (p.use_bias) mixed = add_row_vector(mixed, p.b4, tape);
    return add(x, mixed, tape);
}

Tensor mixer_layer(const Tensor& x, const MixerParams& p, Tape* tape) {
    if (p.w1.cols() != x.rows())
        throw DimensionError("mixer_layer: token weights " + shape_str(p.w1.rows(), p.w1.cols()) +
                             " do not match " + std::to_string(x.rows()) + " tokens");
    if (p.w3.cols() != x.cols())
        throw DimensionError("mixer_layer: channel weights " + shape_str(p.w3.rows(), p.w3.cols()) +
                             " do not match " + std::to_string(x.cols()) + " channels");
    return mixer_channel_sublayer(mixer_token_sublayer(x, p, tape), p, tape);
}

GapOutput gated_attention_pool(const Tensor& h, const GAPParams& p, Tape* tape) {
    if (p.v.rows() != p.u.rows() || p.v.cols() != p.u.cols())
        throw DimensionError("gated_attention_pool: V " + shape_str(p.v.rows(), p.v.cols()) +
                             " vs U " + shape_str(p.u.rows(), p.u.cols()));
    if (p.v.cols() != h.cols())
        throw DimensionError("gated_attention_pool: gates expect " +
                             std::to_string(p.v.cols()) + " features, input is " +
                             shape_str(h.rows(), h.cols()));

    Tensor gate = hadamard(tanh_elem(matmul_nt(h, p.v, tape), tape),
                           sigmoid_elem(matmul_nt(h, p.u, tape), tape), tape); // K x L
    Tensor logits = matmul_nt(p.w, gate, tape);                                // 1 x K

    GapOutput out;
    out.weights = softmax_rows(logits, tape);
    out.pooled = matmul(out.weights, h, tape); // 1 x C
    return out;
}

Tensor head_logits(const Tensor& z, const HeadParams& p, Tape* tape) {
    if (z.rows() != 1 || z.cols() != p.weight.rows())
        throw DimensionError("head: input " + shape_str(z.rows(), z.cols()) +
                             " vs weights " + shape_str(p.weight.rows(), p.weight.cols()));
    Tensor logits = matmul(z, p.weight, tape);
    if (p.use_bias) logits = add_row_vector(logits, p.bias, tape);
    return logits;
}

Tensor classify(const Tensor& z, const HeadParams& p, Tape* tape) {
    return softmax_rows(head_logits(z, p, tape), tape);
}

FusionStrategy fusion_from_string(const std::string& name) {
    if (name == "mffm") return FusionStrategy::kMFFM;
    if (name == "concatenation") return FusionStrategy::kConcatenation;
    if (name == "ms-max") return FusionStrategy::kMSMax;
    if (name == "ms-attention") return FusionStrategy::kMSAttention;
    throw ConfigError("unknown fusion strategy '" + name +
                      "' (expected mffm, concatenation, ms-max or ms-attention)");
}

std::string fusion_to_string(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::kMFFM: return "mffm";
        case FusionStrategy::kConcatenation: return "concatenation";
        case FusionStrategy::kMSMax: return "ms-max";
        case FusionStrategy::kMSAttention: return "ms-attention";
    }
    throw ConfigError("unknown fusion strategy value");
}

Tensor fuse_ms_max(const std::vector<Tensor>& per_scale, Tape* tape) {
    Tensor z;
    for (const auto& p : per_scale) {
        Tensor m = col_max(p, tape);
        z = z.defined() ? add(z, m, tape) : m;
    }
    return z;
}

Tensor fuse_ms_attention(const std::vector<Tensor>& per_scale,
                         const std::vector<GAPParams>& gaps, Tape* tape) {
    if (gaps.size() != per_scale.size())
        throw DimensionError("fuse_ms_attention: " + std::to_string(gaps.size()) +
                             " gate sets for " + std::to_string(per_scale.size()) + " scales");
    Tensor z;
    for (std::size_t s = 0; s < per_scale.size(); ++s) {
        Tensor pooled = gated_attention_pool(per_scale[s], gaps[s], tape).pooled;
        z = z.defined() ? add(z, pooled, tape) : pooled;
    }
    return z;
}

Tensor fuse_concatenation(const std::vector<Tensor>& per_scale, Tape* tape) {
    return flatten_to_row(concat_pyramid(per_scale, tape), tape);
}

} // namespace mspt
