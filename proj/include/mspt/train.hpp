#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspt/data.hpp"
#include "mspt/kmeans.hpp"
#include "mspt/model.hpp"

namespace mspt {

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    std::size_t batch_size = 1;
    std::size_t max_epochs = 150;
    std::size_t patience = 30;     // vs best-so-far monitored loss
    double validation_split = 0.0; // 0 = monitor training loss
    std::uint64_t seed = 0;

    void validate() const;
    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct TrainResult {
    Model model; // parameters from the best-loss epoch
    std::vector<double> loss_curve;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
};

// Epochs iterate the training bags in a seeded shuffled order, one Adam step
// per batch (batch_size defaults to 1). Stops when the monitored loss has not
// improved on its best value for `patience` consecutive epochs. A NaN loss
// aborts with the epoch and bag named.
TrainResult train(const Dataset& ds, const std::vector<std::string>& train_ids,
                  const PrototypeSet* protos, Model model, const TrainConfig& cfg);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<std::string> bag_ids;
    std::vector<int> labels;
    std::vector<double> scores; // positive-class probability per bag
};

EvalResult evaluate(const Model& model, const Dataset& ds,
                    const std::vector<std::string>& ids, const PrototypeSet* protos);

struct FoldResult {
    double accuracy = 0.0;
    double auc = 0.0;
    std::vector<double> loss_curve;
    std::size_t best_epoch = 0;
};

struct MetricsReport {
    std::string experiment;
    std::vector<FoldResult> folds;
    double acc_mean = 0.0, acc_sd = 0.0;
    double auc_mean = 0.0, auc_sd = 0.0;
    nlohmann::json config; // resolved run config
    std::string config_digest;
    double wall_time_sec = 0.0; // informational; not part of determinism checks

    nlohmann::json to_json() const;
};

// Stratified holdout: train on the remainder, evaluate on n_test bags. The
// trained model is copied to `trained_out` when non-null.
MetricsReport run_holdout(const Dataset& ds, const PrototypeSet* protos,
                          const ModelConfig& mcfg, const TrainConfig& tcfg,
                          std::size_t n_test, std::uint64_t split_seed,
                          Model* trained_out = nullptr);

// Per fold: fresh seeded init, train, evaluate; mean +/- SD across folds.
MetricsReport run_kfold(const Dataset& ds, const PrototypeSet* protos,
                        const ModelConfig& mcfg, const TrainConfig& tcfg,
                        std::size_t k, std::uint64_t split_seed);

// Prototype-count sweep over {PT, Prototype-bag} per K plus one K-independent
// Full-bag reference row. All cells share one holdout split.
struct AblationCell {
    bool has_k = false;
    std::size_t k = 0;
    std::string variant;
    double accuracy = 0.0;
    double auc = 0.0;
};

struct AblationKReport {
    std::vector<AblationCell> cells;
    nlohmann::json config;
    std::string config_digest;
    double wall_time_sec = 0.0;

    nlohmann::json to_json() const;
};

AblationKReport ablate_k(const Dataset& ds, const ModelConfig& base_model,
                         const TrainConfig& tcfg, const KMeansConfig& kmeans_base,
                         const std::vector<std::size_t>& k_values, std::size_t n_test,
                         std::uint64_t split_seed);

// Fusion-strategy sweep for the multi-scale model on one shared split.
struct FusionCell {
    std::string strategy;
    double accuracy = 0.0;
    double auc = 0.0;
    std::string config_digest; // digest of the per-strategy resolved config
};

struct FusionReport {
    std::vector<FusionCell> cells;
    nlohmann::json config;
    std::string config_digest;
    double wall_time_sec = 0.0;

    nlohmann::json to_json() const;
};

FusionReport ablate_fusion(const Dataset& ds, const PrototypeSet& protos,
                           const ModelConfig& base_model, const TrainConfig& tcfg,
                           std::size_t n_test, std::uint64_t split_seed);

// Wall times of the prototype cross-attention forward vs a dense
// instance-to-instance self-attention forward, plus log-log slopes.
struct BenchRow {
    std::size_t n = 0;
    double pt_seconds = 0.0;
    double dense_seconds = 0.0;
};

struct BenchReport {
    std::size_t k = 0, d_k = 0, repeats = 0;
    std::vector<BenchRow> rows;
    bool dense_measured = false;
    bool slopes_valid = false; // needs >= 2 points
    double pt_slope = 0.0;
    double dense_slope = 0.0;

    nlohmann::json to_json() const;
};

// measure_dense=false skips the quadratic path (large n would not fit).
BenchReport bench_complexity(const std::vector<std::size_t>& n_values, std::size_t k,
                             std::size_t d_k, std::size_t repeats, bool measure_dense = true);

// CSV emission. Numbers use round-trippable formatting.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_ablate_k_csv(const AblationKReport& report, const std::filesystem::path& path);
void write_fusion_csv(const FusionReport& report, const std::filesystem::path& path);
void write_bench_csv(const BenchReport& report, const std::filesystem::path& path);

// Inspection dumps: per-bag attention maps (bag_id, scale, prototype_index,
// instance_index, weight) and top-level GAP weights (bag_id, prototype_index,
// weight).
void dump_attention_csv(const Model& model, const Dataset& ds,
                        const std::vector<std::string>& ids, const PrototypeSet* protos,
                        const std::filesystem::path& path);
void dump_gap_csv(const Model& model, const Dataset& ds, const std::vector<std::string>& ids,
                  const PrototypeSet* protos, const std::filesystem::path& path);

} // namespace mspt
