#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mspt/common.hpp"
#include "mspt/tensor.hpp"

namespace mspt {

// One labeled sample: per-scale instance feature matrices, finest scale first.
struct MultiScaleBag {
    std::string id;
    int label = 0;
    std::vector<std::pair<std::string, Tensor>> scales; // (scale name, n_s x d)

    const Tensor& scale(const std::string& name) const;
    std::size_t instance_count(const std::string& name) const { return scale(name).rows(); }
};

struct Dataset {
    std::vector<std::string> scale_names; // fine -> coarse, e.g. {"s20","s10","s5"}
    std::size_t d = 0;
    std::vector<std::string> class_names;
    nlohmann::json provenance;
    std::vector<MultiScaleBag> bags;

    std::size_t size() const { return bags.size(); }
    const MultiScaleBag& bag_by_id(const std::string& id) const;
};

// Seeded synthetic generator config. Stands in for real slide feature bags;
// bag sizes shrink by scale_ratio per coarser scale.
struct SyntheticConfig {
    std::size_t n_bags = 0;
    std::size_t d = 512;
    std::size_t bag_size_min = 128; // instances at the finest scale
    std::size_t bag_size_max = 256;
    std::size_t scale_ratio = 4;
    double witness_rate = 0.1; // fraction of witness instances in positive bags
    double mu = 1.0;           // witness separation along the witness direction
    double sigma = 1.0;        // instance noise
    double class_balance = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    static SyntheticConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Witness bookkeeping for tests: which leading rows of each bag/scale are
// witness draws, and the direction they share.
struct GeneratorTrace {
    std::vector<double> witness_dir;                      // unit vector, length d
    std::vector<std::vector<std::size_t>> witness_counts; // [bag][scale]
};

// Deterministic generative model (bit-identical for identical config):
//   - a unit witness direction u is drawn once from the seed;
//   - every instance of a bag shares a context offset ~ N(0, (sigma/4)^2 I);
//   - negative instances are context + N(0, sigma^2 I);
//   - positive bags get max(1, round(witness_rate * n_s)) witness instances
//     per scale, context + mu*u + N(0, sigma^2 I), occupying the leading rows;
//   - remaining coarse-scale instances are means of contiguous near-equal
//     groups of the next finer scale plus fresh N(0, (sigma/2)^2 I) noise;
//   - coarse counts are n_coarse = max(1, n_fine / scale_ratio);
//   - values are quantized through float32 so the on-disk container
//     round-trips losslessly.
Dataset generate_synthetic(const SyntheticConfig& cfg, GeneratorTrace* trace = nullptr);

struct FoldPlan {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> train_ids; // per fold
    std::vector<std::vector<std::string>> test_ids;  // per fold, partition of all ids
};

// Stratified k-fold: per class, a seeded shuffle dealt round-robin, so fold
// sizes differ by at most one per class and test sets partition the dataset.
FoldPlan split_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed);

// Stratified holdout with exactly n_test test bags (largest-remainder
// apportioning across classes). Returns (train ids, test ids).
std::pair<std::vector<std::string>, std::vector<std::string>>
split_holdout(const Dataset& ds, std::size_t n_test, std::uint64_t seed);

} // namespace mspt
