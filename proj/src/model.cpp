#include "mspt/model.hpp"

#include <cmath>

namespace mspt {

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "mspt") return ModelKind::kMSPT;
    if (name == "pt") return ModelKind::kPT;
    if (name == "full-bag") return ModelKind::kFullBag;
    if (name == "prototype-bag") return ModelKind::kPrototypeBag;
    if (name == "mean-pool" || name == "mean") return ModelKind::kMeanPool;
    if (name == "max-pool" || name == "max") return ModelKind::kMaxPool;
    if (name == "abmil") return ModelKind::kABMIL;
    throw ConfigError("unknown model kind '" + name + "'");
}

std::string model_kind_to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::kMSPT: return "mspt";
        case ModelKind::kPT: return "pt";
        case ModelKind::kFullBag: return "full-bag";
        case ModelKind::kPrototypeBag: return "prototype-bag";
        case ModelKind::kMeanPool: return "mean-pool";
        case ModelKind::kMaxPool: return "max-pool";
        case ModelKind::kABMIL: return "abmil";
    }
    throw ConfigError("unknown model kind value");
}

bool needs_prototypes(ModelKind kind) {
    return kind == ModelKind::kMSPT || kind == ModelKind::kPT ||
           kind == ModelKind::kPrototypeBag;
}

bool is_multi_scale(ModelKind kind) { return kind == ModelKind::kMSPT; }

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    if (!j.contains("kind")) throw ConfigError("model config: missing field 'kind'");
    cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
    cfg.fusion = fusion_from_string(j.value("fusion", std::string("mffm")));
    cfg.k = j.value("K", cfg.k);
    cfg.n_iters = j.value("n_iters", cfg.n_iters);
    cfg.mixer_layers = j.value("mixer_layers", cfg.mixer_layers);
    cfg.token_hidden = j.value("token_hidden", cfg.token_hidden);
    cfg.channel_hidden = j.value("channel_hidden", cfg.channel_hidden);
    cfg.gap_hidden = j.value("gap_hidden", cfg.gap_hidden);
    cfg.use_bias = j.value("use_bias", cfg.use_bias);
    cfg.scale = j.value("scale", cfg.scale);
    cfg.d_out = j.value("d_out", cfg.d_out);
    if (cfg.d_out < 2) throw ConfigError("model config: d_out must be >= 2");
    if (cfg.k == 0) throw ConfigError("model config: K must be >= 1");
    if (cfg.n_iters == 0) throw ConfigError("model config: n_iters must be >= 1");
    if (cfg.mixer_layers == 0) throw ConfigError("model config: mixer_layers must be >= 1");
    return cfg;
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{
        {"kind", model_kind_to_string(kind)},
        {"fusion", fusion_to_string(fusion)},
        {"K", k},
        {"n_iters", n_iters},
        {"mixer_layers", mixer_layers},
        {"token_hidden", token_hidden},
        {"channel_hidden", channel_hidden},
        {"gap_hidden", gap_hidden},
        {"use_bias", use_bias},
        {"scale", scale},
        {"d_out", d_out},
    };
}

namespace {

Tensor init_weight(std::size_t rows, std::size_t cols, std::uint64_t seed,
                   const std::string& name, std::size_t fan_in) {
    Rng rng = derive_rng(seed, "param:" + name);
    Tensor t = Tensor::randn(rows, cols, rng, 0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    t.set_requires_grad(true);
    return t;
}

Tensor init_const(std::size_t rows, std::size_t cols, double value) {
    Tensor t(rows, cols, value);
    t.set_requires_grad(true);
    return t;
}

GAPParams init_gap(std::size_t width, std::size_t hidden, std::uint64_t seed,
                   const std::string& prefix) {
    GAPParams g;
    g.v = init_weight(hidden, width, seed, prefix + ".v", width);
    g.u = init_weight(hidden, width, seed, prefix + ".u", width);
    g.w = init_weight(1, hidden, seed, prefix + ".w", hidden);
    return g;
}

std::size_t resolve_gap_hidden(const ModelConfig& cfg, std::size_t width) {
    return cfg.gap_hidden ? cfg.gap_hidden : std::max<std::size_t>(16, width / 4);
}

} // namespace

Model Model::init(const ModelConfig& cfg, std::size_t d,
                  const std::vector<std::string>& scale_names, std::uint64_t seed) {
    if (d == 0) throw ConfigError("model init: feature dimension must be >= 1");
    if (scale_names.empty()) throw ConfigError("model init: no scales");

    Model m;
    m.cfg_ = cfg;
    m.d_ = d;
    m.scale_names_ = scale_names;

    const bool multi = is_multi_scale(cfg.kind);
    if (!multi) {
        bool known = false;
        for (const auto& s : scale_names) known = known || s == cfg.scale;
        if (!known)
            throw ConfigError("model init: scale '" + cfg.scale + "' not present in dataset");
    }

    switch (cfg.kind) {
        case ModelKind::kMSPT: {
            m.pt_ = pt_init(d, scale_names, cfg.n_iters, derive_seed(seed, "pt"));
            const std::size_t channels = scale_names.size() * d;
            switch (cfg.fusion) {
                case FusionStrategy::kMFFM: {
                    const std::size_t token_hidden =
                        cfg.token_hidden ? cfg.token_hidden : 2 * cfg.k;
                    const std::size_t channel_hidden =
                        cfg.channel_hidden ? cfg.channel_hidden : (3 * d + 1) / 2;
                    for (std::size_t l = 0; l < cfg.mixer_layers; ++l) {
                        const std::string p = "mixer." + std::to_string(l);
                        MixerParams mix;
                        mix.use_bias = cfg.use_bias;
                        mix.w1 = init_weight(token_hidden, cfg.k, seed, p + ".w1", cfg.k);
                        mix.b1 = init_const(token_hidden, 1, 0.0);
                        mix.w2 = init_weight(cfg.k, token_hidden, seed, p + ".w2", token_hidden);
                        mix.b2 = init_const(cfg.k, 1, 0.0);
                        mix.w3 = init_weight(channel_hidden, channels, seed, p + ".w3", channels);
                        mix.b3 = init_const(1, channel_hidden, 0.0);
                        mix.w4 = init_weight(channels, channel_hidden, seed, p + ".w4", channel_hidden);
                        mix.b4 = init_const(1, channels, 0.0);
                        mix.ln1_gain = init_const(1, channels, 1.0);
                        mix.ln1_bias = init_const(1, channels, 0.0);
                        mix.ln2_gain = init_const(1, channels, 1.0);
                        mix.ln2_bias = init_const(1, channels, 0.0);
                        m.mixers_.push_back(std::move(mix));
                    }
                    m.gap_ = init_gap(channels, resolve_gap_hidden(cfg, channels), seed, "gap");
                    m.head_.weight = init_weight(channels, cfg.d_out, seed, "head.weight", channels);
                    break;
                }
                case FusionStrategy::kConcatenation: {
                    const std::size_t width = cfg.k * channels;
                    m.head_.weight = init_weight(width, cfg.d_out, seed, "head.weight", width);
                    break;
                }
                case FusionStrategy::kMSMax: {
                    m.head_.weight = init_weight(d, cfg.d_out, seed, "head.weight", d);
                    break;
                }
                case FusionStrategy::kMSAttention: {
                    const std::size_t hidden = resolve_gap_hidden(cfg, d);
                    for (const auto& sname : scale_names)
                        m.scale_gaps_.push_back(init_gap(d, hidden, seed, "gap." + sname));
                    m.head_.weight = init_weight(d, cfg.d_out, seed, "head.weight", d);
                    break;
                }
            }
            break;
        }
        case ModelKind::kPT: {
            m.pt_ = pt_init(d, {cfg.scale}, cfg.n_iters, derive_seed(seed, "pt"));
            m.gap_ = init_gap(d, resolve_gap_hidden(cfg, d), seed, "gap");
            m.head_.weight = init_weight(d, cfg.d_out, seed, "head.weight", d);
            break;
        }
        case ModelKind::kFullBag:
        case ModelKind::kPrototypeBag:
        case ModelKind::kABMIL: {
            m.gap_ = init_gap(d, resolve_gap_hidden(cfg, d), seed, "gap");
            m.head_.weight = init_weight(d, cfg.d_out, seed, "head.weight", d);
            break;
        }
        case ModelKind::kMeanPool:
        case ModelKind::kMaxPool: {
            m.head_.weight = init_weight(d, cfg.d_out, seed, "head.weight", d);
            break;
        }
    }

    m.head_.bias = init_const(1, cfg.d_out, 0.0);
    m.head_.use_bias = cfg.use_bias;
    m.register_params();
    return m;
}

void Model::register_params() {
    params_.clear();
    const auto reg = [this](const std::string& name, const Tensor& t) {
        params_.push_back({name, t});
    };

    for (auto& [sname, p] : pt_.scales) {
        reg("pt." + sname + ".w_q", p.w_q);
        reg("pt." + sname + ".w_k", p.w_k);
        reg("pt." + sname + ".w_v", p.w_v);
    }
    for (std::size_t l = 0; l < mixers_.size(); ++l) {
        const std::string p = "mixer." + std::to_string(l);
        auto& mix = mixers_[l];
        reg(p + ".w1", mix.w1);
        reg(p + ".w2", mix.w2);
        reg(p + ".w3", mix.w3);
        reg(p + ".w4", mix.w4);
        if (mix.use_bias) {
            reg(p + ".b1", mix.b1);
            reg(p + ".b2", mix.b2);
            reg(p + ".b3", mix.b3);
            reg(p + ".b4", mix.b4);
        }
        reg(p + ".ln1_gain", mix.ln1_gain);
        reg(p + ".ln1_bias", mix.ln1_bias);
        reg(p + ".ln2_gain", mix.ln2_gain);
        reg(p + ".ln2_bias", mix.ln2_bias);
    }
    if (gap_.v.defined()) {
        reg("gap.v", gap_.v);
        reg("gap.u", gap_.u);
        reg("gap.w", gap_.w);
    }
    for (std::size_t s = 0; s < scale_gaps_.size(); ++s) {
        const std::string p = "gap." + scale_names_[s];
        reg(p + ".v", scale_gaps_[s].v);
        reg(p + ".u", scale_gaps_[s].u);
        reg(p + ".w", scale_gaps_[s].w);
    }
    reg("head.weight", head_.weight);
    if (head_.use_bias) reg("head.bias", head_.bias);
}

ForwardTrace Model::forward(const MultiScaleBag& bag, const PrototypeBag* protos,
                            Tape* tape) const {
    if (needs_prototypes(cfg_.kind) && !protos)
        throw ConfigError("model '" + model_kind_to_string(cfg_.kind) +
                          "' needs prototypes but none were supplied");

    ForwardTrace trace;
    Tensor z;

    switch (cfg_.kind) {
        case ModelKind::kMSPT: {
            std::vector<Tensor> recalibrated;
            for (const auto& sname : scale_names_) {
                PTOutput out = pt_forward(protos->scale(sname), bag.scale(sname),
                                          pt_.scale(sname), cfg_.n_iters, tape);
                trace.attention.emplace_back(sname, out.attention);
                recalibrated.push_back(out.recalibrated);
            }
            switch (cfg_.fusion) {
                case FusionStrategy::kMFFM: {
                    Tensor h = concat_pyramid(recalibrated, tape);
                    for (const auto& mix : mixers_) h = mixer_layer(h, mix, tape);
                    GapOutput pooled = gated_attention_pool(h, gap_, tape);
                    trace.gap_weights = pooled.weights;
                    z = pooled.pooled;
                    break;
                }
                case FusionStrategy::kConcatenation:
                    z = fuse_concatenation(recalibrated, tape);
                    break;
                case FusionStrategy::kMSMax:
                    z = fuse_ms_max(recalibrated, tape);
                    break;
                case FusionStrategy::kMSAttention:
                    z = fuse_ms_attention(recalibrated, scale_gaps_, tape);
                    break;
            }
            break;
        }
        case ModelKind::kPT: {
            PTOutput out = pt_forward(protos->scale(cfg_.scale), bag.scale(cfg_.scale),
                                      pt_.scale(cfg_.scale), cfg_.n_iters, tape);
            trace.attention.emplace_back(cfg_.scale, out.attention);
            GapOutput pooled = gated_attention_pool(out.recalibrated, gap_, tape);
            trace.gap_weights = pooled.weights;
            z = pooled.pooled;
            break;
        }
        case ModelKind::kFullBag:
        case ModelKind::kABMIL: {
            GapOutput pooled = gated_attention_pool(bag.scale(cfg_.scale), gap_, tape);
            trace.gap_weights = pooled.weights;
            z = pooled.pooled;
            break;
        }
        case ModelKind::kPrototypeBag: {
            GapOutput pooled = gated_attention_pool(protos->scale(cfg_.scale), gap_, tape);
            trace.gap_weights = pooled.weights;
            z = pooled.pooled;
            break;
        }
        case ModelKind::kMeanPool:
            z = col_mean(bag.scale(cfg_.scale), tape);
            break;
        case ModelKind::kMaxPool:
            z = col_max(bag.scale(cfg_.scale), tape);
            break;
    }

    trace.logits = head_logits(z, head_, tape);
    return trace;
}

Tensor Model::forward_logits(const MultiScaleBag& bag, const PrototypeBag* protos,
                             Tape* tape) const {
    return forward(bag, protos, tape).logits;
}

void Model::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

std::vector<std::vector<double>> Model::snapshot_values() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(params_.size());
    for (const auto& p : params_) snap.push_back(p.value.values());
    return snap;
}

void Model::restore_values(const std::vector<std::vector<double>>& snapshot) {
    if (snapshot.size() != params_.size())
        throw Error("restore_values: snapshot has " + std::to_string(snapshot.size()) +
                    " entries for " + std::to_string(params_.size()) + " parameters");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (snapshot[i].size() != params_[i].value.size())
            throw Error("restore_values: size mismatch for '" + params_[i].name + "'");
        params_[i].value.values() = snapshot[i];
    }
}

nlohmann::json Model::to_json() const {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& p : params_) {
        params[p.name] = {
            {"rows", p.value.rows()},
            {"cols", p.value.cols()},
            {"values", p.value.values()},
        };
    }
    return nlohmann::json{
        {"format_version", 1},
        {"model_config", cfg_.to_json()},
        {"d", d_},
        {"scale_names", scale_names_},
        {"params", params},
    };
}

Model Model::from_json(const nlohmann::json& j) {
    if (j.value("format_version", -1) != 1)
        throw DataError("model file: unknown format version");
    const ModelConfig cfg = ModelConfig::from_json(j.at("model_config"));
    const auto d = j.at("d").get<std::size_t>();
    const auto scale_names = j.at("scale_names").get<std::vector<std::string>>();
    Model m = Model::init(cfg, d, scale_names, 0);
    const auto& params = j.at("params");
    for (auto& p : m.params_) {
        if (!params.contains(p.name))
            throw DataError("model file: missing parameter '" + p.name + "'");
        const auto& jp = params.at(p.name);
        if (jp.at("rows").get<std::size_t>() != p.value.rows() ||
            jp.at("cols").get<std::size_t>() != p.value.cols())
            throw DataError("model file: shape mismatch for '" + p.name + "'");
        p.value.values() = jp.at("values").get<std::vector<double>>();
    }
    return m;
}

} // namespace mspt
