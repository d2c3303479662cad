#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspt/adam.hpp"
#include "mspt/data.hpp"
#include "mspt/kmeans.hpp"
#include "mspt/mffm.hpp"
#include "mspt/pt.hpp"

namespace mspt {

enum class ModelKind {
    kMSPT,         // per-scale PT -> pyramid -> mixer -> GAP -> classifier
    kPT,           // single-scale PT -> GAP -> classifier
    kFullBag,      // gated attention over all instances of one scale
    kPrototypeBag, // gated attention over static k-means prototypes
    kMeanPool,
    kMaxPool,
    kABMIL,        // same aggregator as full-bag, reported as its own baseline
};

ModelKind model_kind_from_string(const std::string& name);
std::string model_kind_to_string(ModelKind kind);
bool needs_prototypes(ModelKind kind);
bool is_multi_scale(ModelKind kind);

struct ModelConfig {
    ModelKind kind = ModelKind::kMSPT;
    FusionStrategy fusion = FusionStrategy::kMFFM;
    std::size_t k = 16;            // prototypes per scale
    std::size_t n_iters = 1;       // PT re-calibration passes
    std::size_t mixer_layers = 1;
    std::size_t token_hidden = 0;   // 0 -> 2*K
    std::size_t channel_hidden = 0; // 0 -> ceil(1.5 * channels)
    std::size_t gap_hidden = 0;     // 0 -> max(16, input_width / 4)
    bool use_bias = true;
    std::string scale = "s20"; // which scale the single-scale kinds consume
    std::size_t d_out = 2;

    static ModelConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// What a forward pass exposes besides the logits, for inspection and dumps.
struct ForwardTrace {
    Tensor logits; // 1 x d_out
    std::vector<std::pair<std::string, Tensor>> attention; // per-scale A_map, K x n
    Tensor gap_weights; // 1 x K when a gated pool ran at the top
};

class Model {
public:
    // Builds parameters for the configured kind from seeded streams.
    static Model init(const ModelConfig& cfg, std::size_t d,
                      const std::vector<std::string>& scale_names, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    std::size_t feature_dim() const { return d_; }
    const std::vector<std::string>& scale_names() const { return scale_names_; }

    // protos may be null for kinds that do not consume prototypes.
    ForwardTrace forward(const MultiScaleBag& bag, const PrototypeBag* protos,
                         Tape* tape = nullptr) const;
    Tensor forward_logits(const MultiScaleBag& bag, const PrototypeBag* protos,
                          Tape* tape = nullptr) const;

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    void zero_grad();

    // Value-only snapshot/restore, used for best-epoch bookkeeping.
    std::vector<std::vector<double>> snapshot_values() const;
    void restore_values(const std::vector<std::vector<double>>& snapshot);

    nlohmann::json to_json() const;
    static Model from_json(const nlohmann::json& j);

private:
    ModelConfig cfg_;
    std::size_t d_ = 0;
    std::vector<std::string> scale_names_;

    PTParams pt_;
    std::vector<MixerParams> mixers_;
    GAPParams gap_;
    std::vector<GAPParams> scale_gaps_; // ms-attention fusion
    HeadParams head_;

    std::vector<Param> params_;

    void register_params();
};

} // namespace mspt
