#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspt/data.hpp"
#include "mspt/rng.hpp"
#include "mspt/tensor.hpp"

namespace mspt {

struct KMeansConfig {
    std::size_t k = 16;
    std::size_t max_iters = 100;
    double tol = 1e-6; // relative objective-change threshold
    std::size_t n_restarts = 10;
    std::uint64_t seed = 0;

    void validate() const;
    static KMeansConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    std::string digest() const;
};

struct KMeansResult {
    Tensor centers;                         // k x d
    std::vector<std::uint32_t> assignments; // per input row, in [0, k)
    double objective = 0.0;                 // sum of squared distances
    std::vector<double> objective_history;  // per Lloyd iteration, winning restart
};

// k-means++ seeding: first center uniform, each next sampled with probability
// proportional to squared distance to the nearest chosen center. When every
// remaining point coincides with a chosen center the draw falls back to
// uniform (duplicates permitted).
Tensor kmeanspp_init(const Tensor& x, std::size_t k, Rng& rng);

// Lloyd iterations until the relative objective improvement drops below tol
// or max_iters; best of n_restarts by objective (restart RNG streams are
// derived per index, so adding restarts never changes earlier ones). Empty
// clusters are reseeded at the point farthest from its assigned center.
// Assignment ties break toward the lowest cluster index.
KMeansResult kmeans_fit(const Tensor& x, const KMeansConfig& cfg);

struct PrototypeBag {
    std::string bag_id;
    std::vector<std::pair<std::string, Tensor>> prototypes; // per scale, k x d
    std::map<std::string, double> objective;                // per scale
    std::map<std::string, std::vector<std::uint32_t>> assignments;
    std::vector<std::string> warnings;

    const Tensor& scale(const std::string& name) const;
};

// Per-scale k-means with RNG streams derived from (cfg.seed, bag id, scale).
// Scales with fewer instances than k are padded by cycling duplicate rows (a
// warning is recorded). Centroid rows are sorted lexicographically and then
// quantized to float32 so persisted caches reproduce in-memory results
// exactly.
PrototypeBag extract_prototypes(const MultiScaleBag& bag, const KMeansConfig& cfg);

struct PrototypeSet {
    KMeansConfig config;
    std::vector<PrototypeBag> bags; // dataset order

    const PrototypeBag& for_bag(const std::string& bag_id) const;
};

PrototypeSet extract_all_prototypes(const Dataset& ds, const KMeansConfig& cfg);

// Cache container: protos.manifest.json (records the config digest) plus raw
// .f32 centroid files and .u32 assignment files per bag per scale.
void cache_prototypes(const PrototypeSet& protos, const std::filesystem::path& dir);
PrototypeSet load_prototype_cache(const std::filesystem::path& dir, const KMeansConfig& expected);

} // namespace mspt
