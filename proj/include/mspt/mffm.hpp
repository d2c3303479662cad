#pragma once

#include <string>
#include <vector>

#include "mspt/tensor.hpp"

namespace mspt {

// One Mixer layer over a tokens x channels matrix (tokens = prototypes,
// channels = stacked per-scale features). Both sublayers use pre-LN over the
// channel axis (i.e. each token row is normalized over its features), the
// convention of the Mixer architecture:
//   token mixing:   U = X + W2 * gelu(W1 * LN(X) + b1 1^T) + b2 1^T  (per channel column)
//   channel mixing: H = U + gelu(LN(U) * W3^T + 1 b3) * W4^T + 1 b4  (per token row)
struct MixerParams {
    Tensor w1, b1; // token mixing: w1 is hidden x tokens, b1 is hidden x 1
    Tensor w2, b2; // tokens x hidden, tokens x 1
    Tensor w3, b3; // channel mixing: hidden x channels, 1 x hidden
    Tensor w4, b4; // channels x hidden, 1 x channels
    Tensor ln1_gain, ln1_bias; // 1 x channels
    Tensor ln2_gain, ln2_bias; // 1 x channels
    bool use_bias = true;
};

struct GAPParams {
    Tensor v; // L x C gate candidates (tanh branch)
    Tensor u; // L x C gate (sigmoid branch)
    Tensor w; // 1 x L attention head
};

struct HeadParams {
    Tensor weight; // in x d_out
    Tensor bias;   // 1 x d_out
    bool use_bias = true;
};

inline constexpr double kLayerNormEps = 1e-5;

// Row-aligned feature pyramid: columns stacked fine -> coarse.
Tensor concat_pyramid(const std::vector<Tensor>& per_scale, Tape* tape = nullptr);

Tensor mixer_token_sublayer(const Tensor& x, const MixerParams& p, Tape* tape = nullptr);
Tensor mixer_channel_sublayer(const Tensor& x, const MixerParams& p, Tape* tape = nullptr);
Tensor mixer_layer(const Tensor& x, const MixerParams& p, Tape* tape = nullptr);

struct GapOutput {
    Tensor pooled;  // 1 x C
    Tensor weights; // 1 x K, sums to 1
};

// a_i proportional to exp(w * (tanh(V h_i) ⊙ sigmoid(U h_i))); Z = sum a_i h_i.
GapOutput gated_attention_pool(const Tensor& h, const GAPParams& p, Tape* tape = nullptr);

Tensor head_logits(const Tensor& z, const HeadParams& p, Tape* tape = nullptr);
// softmax(linear(z)): class probabilities.
Tensor classify(const Tensor& z, const HeadParams& p, Tape* tape = nullptr);

// Multi-scale fusion variants over per-scale re-calibrated prototypes.
enum class FusionStrategy {
    kMFFM,          // mixer + gated attention pooling (the full module)
    kConcatenation, // flatten K x 3d_k and classify directly, no pooling
    kMSMax,         // per-scale column max over prototypes, summed over scales
    kMSAttention,   // per-scale gated attention pool, summed over scales
};

FusionStrategy fusion_from_string(const std::string& name);
std::string fusion_to_string(FusionStrategy s);

// Fused bag representation for the non-MFFM strategies. kMSAttention uses one
// GAPParams per scale, in scale order.
Tensor fuse_ms_max(const std::vector<Tensor>& per_scale, Tape* tape = nullptr);
Tensor fuse_ms_attention(const std::vector<Tensor>& per_scale,
                         const std::vector<GAPParams>& gaps, Tape* tape = nullptr);
Tensor fuse_concatenation(const std::vector<Tensor>& per_scale, Tape* tape = nullptr);

} // namespace mspt
