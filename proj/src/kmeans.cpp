#include "mspt/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "mspt/dataset_io.hpp"
#include "mspt/kernels.hpp"

namespace mspt {

namespace fs = std::filesystem;

void KMeansConfig::validate() const {
    if (k == 0) throw ConfigError("kmeans config: K must be >= 1");
    if (max_iters == 0) throw ConfigError("kmeans config: max_iters must be >= 1");
    if (tol < 0.0) throw ConfigError("kmeans config: tol must be >= 0");
    if (n_restarts == 0) throw ConfigError("kmeans config: n_restarts must be >= 1");
}

KMeansConfig KMeansConfig::from_json(const nlohmann::json& j) {
    KMeansConfig cfg;
    if (!j.contains("K")) throw ConfigError("kmeans config: missing field 'K'");
    cfg.k = j.at("K").get<std::size_t>();
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.tol = j.value("tol", cfg.tol);
    cfg.n_restarts = j.value("n_restarts", cfg.n_restarts);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

nlohmann::json KMeansConfig::to_json() const {
    return nlohmann::json{
        {"K", k}, {"max_iters", max_iters}, {"tol", tol},
        {"n_restarts", n_restarts}, {"seed", seed},
    };
}

std::string KMeansConfig::digest() const { return digest_hex(to_json().dump()); }

Tensor kmeanspp_init(const Tensor& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows(), d = x.cols();
    if (k > n)
        throw ConfigError("kmeans++: K = " + std::to_string(k) + " exceeds " +
                          std::to_string(n) + " points");

    Tensor centers(k, d);
    const auto copy_row = [&](std::size_t src, std::size_t dst) {
        for (std::size_t j = 0; j < d; ++j) centers.at(dst, j) = x.at(src, j);
    };

    copy_row(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)), 0);

    std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        // Refresh distances against the newest center only.
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = x.at(i, j) - centers.at(c - 1, j);
                acc += diff * diff;
            }
            best_d2[i] = std::min(best_d2[i], acc);
        }
        double total = 0.0;
        for (double v : best_d2) total += v;
        std::size_t pick;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += best_d2[i];
                if (r < cum) {
                    pick = i;
                    break;
                }
            }
        } else {
            // All points coincide with chosen centers; duplicates permitted.
            pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        }
        copy_row(pick, c);
    }
    return centers;
}

namespace {

struct LloydRun {
    Tensor centers;
    std::vector<std::uint32_t> assignments;
    double objective = 0.0;
    std::vector<double> history;
};

LloydRun lloyd(const Tensor& x, std::size_t k, const KMeansConfig& cfg, Rng& rng) {
    const std::size_t n = x.rows(), d = x.cols();
    LloydRun run;
    run.centers = kmeanspp_init(x, k, rng);
    run.assignments.assign(n, 0);
    std::vector<double> dist2(n, 0.0);
    std::vector<std::size_t> counts(k, 0);

    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        kernels::assign_nearest(n, d, k, x.values().data(), run.centers.values().data(),
                                run.assignments.data(), dist2.data());
        double obj = 0.0;
        for (double v : dist2) obj += v;
        run.history.push_back(obj);
        run.objective = obj;

        if (prev < std::numeric_limits<double>::infinity()) {
            const double denom = std::max(prev, 1e-300);
            if ((prev - obj) / denom < cfg.tol) break;
        }
        prev = obj;

        // Means of assigned points.
        std::fill(run.centers.values().begin(), run.centers.values().end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t a = run.assignments[i];
            counts[a]++;
            for (std::size_t j = 0; j < d; ++j) run.centers.at(a, j) += x.at(i, j);
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (std::size_t j = 0; j < d; ++j)
                    run.centers.at(c, j) /= static_cast<double>(counts[c]);

        // Reseed each empty cluster at the point currently farthest from its
        // assigned center; that point cannot feed two empty clusters.
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist2[i] > far_d) {
                    far_d = dist2[i];
                    far = i;
                }
            }
            taken[far] = true;
            for (std::size_t j = 0; j < d; ++j) run.centers.at(c, j) = x.at(far, j);
        }
    }
    return run;
}

} // namespace

KMeansResult kmeans_fit(const Tensor& x, const KMeansConfig& cfg) {
    cfg.validate();
    const std::size_t n = x.rows();
    if (n < cfg.k)
        throw ConfigError("kmeans: " + std::to_string(n) + " points for K = " +
                          std::to_string(cfg.k));

    LloydRun best;
    bool have = false;
    for (std::size_t r = 0; r < cfg.n_restarts; ++r) {
        Rng rng = derive_rng(cfg.seed, "kmeans-restart", r);
        LloydRun run = lloyd(x, cfg.k, cfg, rng);
        if (!have || run.objective < best.objective) {
            best = std::move(run);
            have = true;
        }
    }

    KMeansResult result;
    result.centers = std::move(best.centers);
    result.assignments = std::move(best.assignments);
    result.objective = best.objective;
    result.objective_history = std::move(best.history);
    return result;
}

const Tensor& PrototypeBag::scale(const std::string& name) const {
    for (const auto& [sname, mat] : prototypes)
        if (sname == name) return mat;
    throw DataError("prototype bag " + bag_id + ": no scale '" + name + "'");
}

PrototypeBag extract_prototypes(const MultiScaleBag& bag, const KMeansConfig& cfg) {
    cfg.validate();
    PrototypeBag out;
    out.bag_id = bag.id;

    for (const auto& [sname, mat] : bag.scales) {
        Tensor points = mat;
        if (mat.rows() < cfg.k) {
            // Pad tiny scales by cycling duplicate rows up to K.
            Tensor padded(cfg.k, mat.cols());
            for (std::size_t i = 0; i < cfg.k; ++i)
                for (std::size_t j = 0; j < mat.cols(); ++j)
                    padded.at(i, j) = mat.at(i % mat.rows(), j);
            points = padded;
            out.warnings.push_back("scale " + sname + ": " + std::to_string(mat.rows()) +
                                   " instances padded to K = " + std::to_string(cfg.k));
        }

        KMeansConfig scaled = cfg;
        scaled.seed = derive_seed(cfg.seed, "proto:" + bag.id + ":" + sname);
        KMeansResult fit = kmeans_fit(points, scaled);

        // Sort centroid rows lexicographically so downstream results do not
        // depend on restart internals; remap assignments to the sorted order.
        const std::size_t k = cfg.k, d = fit.centers.cols();
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            for (std::size_t j = 0; j < d; ++j) {
                if (fit.centers.at(a, j) != fit.centers.at(b, j))
                    return fit.centers.at(a, j) < fit.centers.at(b, j);
            }
            return a < b;
        });
        std::vector<std::uint32_t> rank(k);
        for (std::size_t pos = 0; pos < k; ++pos) rank[order[pos]] = static_cast<std::uint32_t>(pos);

        Tensor sorted(k, d);
        for (std::size_t pos = 0; pos < k; ++pos)
            for (std::size_t j = 0; j < d; ++j) {
                // Quantize to float32: the cache stores .f32, and fresh vs
                // cached prototypes must be bit-identical.
                sorted.at(pos, j) =
                    static_cast<double>(static_cast<float>(fit.centers.at(order[pos], j)));
            }

        std::vector<std::uint32_t> assign(mat.rows());
        for (std::size_t i = 0; i < mat.rows(); ++i) assign[i] = rank[fit.assignments[i]];

        out.prototypes.emplace_back(sname, sorted);
        out.objective[sname] = fit.objective;
        out.assignments[sname] = std::move(assign);
    }
    return out;
}

const PrototypeBag& PrototypeSet::for_bag(const std::string& bag_id) const {
    for (const auto& b : bags)
        if (b.bag_id == bag_id) return b;
    throw DataError("prototype cache has no entry for bag '" + bag_id + "'");
}

PrototypeSet extract_all_prototypes(const Dataset& ds, const KMeansConfig& cfg) {
    PrototypeSet set;
    set.config = cfg;
    set.bags.resize(ds.size());
    // Bags are independent jobs with their own derived RNG streams; results
    // land at fixed indices, so the merge order is deterministic. Exceptions
    // must not escape the parallel region.
    std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(ds.size()); ++i) {
        try {
            set.bags[static_cast<std::size_t>(i)] =
                extract_prototypes(ds.bags[static_cast<std::size_t>(i)], cfg);
        } catch (...) {
#pragma omp critical
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return set;
}

void cache_prototypes(const PrototypeSet& protos, const fs::path& dir) {
    fs::create_directories(dir);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& bag : protos.bags) {
        // Ordered array, not an object: scale order (fine -> coarse) matters.
        nlohmann::json scales = nlohmann::json::array();
        for (const auto& [sname, mat] : bag.prototypes) {
            const std::string proto_file = bag.bag_id + "_" + sname + ".protos.f32";
            const std::string assign_file = bag.bag_id + "_" + sname + ".assign.u32";
            write_f32(dir / proto_file, mat.values());
            write_u32(dir / assign_file, bag.assignments.at(sname));
            scales.push_back({
                {"scale", sname},
                {"file", proto_file},
                {"rows", mat.rows()},
                {"cols", mat.cols()},
                {"assign_file", assign_file},
                {"n_instances", bag.assignments.at(sname).size()},
                {"objective", bag.objective.at(sname)},
            });
        }
        entries.push_back({{"id", bag.bag_id}, {"scales", scales}, {"warnings", bag.warnings}});
    }
    const nlohmann::json manifest = {
        {"format_version", 1},
        {"kmeans_config", protos.config.to_json()},
        {"config_digest", protos.config.digest()},
        {"bags", entries},
    };
    write_json_file(dir / "protos.manifest.json", manifest);
}

PrototypeSet load_prototype_cache(const fs::path& dir, const KMeansConfig& expected) {
    const nlohmann::json m = read_json_file(dir / "protos.manifest.json", "prototype cache");
    if (m.value("format_version", -1) != 1)
        throw DataError("prototype cache: unknown format version");
    const std::string digest = m.value("config_digest", "");
    if (digest != expected.digest())
        throw StaleCacheError("prototype cache at '" + dir.string() + "' was built with digest " +
                              digest + " but the requested config has digest " + expected.digest());

    PrototypeSet set;
    set.config = KMeansConfig::from_json(m.at("kmeans_config"));
    for (const auto& jb : m.at("bags")) {
        PrototypeBag bag;
        bag.bag_id = jb.at("id").get<std::string>();
        bag.warnings = jb.value("warnings", std::vector<std::string>{});
        for (const auto& js : jb.at("scales")) {
            const auto sname = js.at("scale").get<std::string>();
            const auto rows = js.at("rows").get<std::size_t>();
            const auto cols = js.at("cols").get<std::size_t>();
            auto values = read_f32(dir / js.at("file").get<std::string>(), rows * cols,
                                   "prototype cache bag " + bag.bag_id + " scale " + sname);
            bag.prototypes.emplace_back(sname, Tensor::from_values(rows, cols, std::move(values)));
            bag.objective[sname] = js.at("objective").get<double>();
            const auto n_inst = js.at("n_instances").get<std::size_t>();
            bag.assignments[sname] = read_u32(dir / js.at("assign_file").get<std::string>(), n_inst,
                                              "prototype cache bag " + bag.bag_id);
        }
        set.bags.push_back(std::move(bag));
    }
    return set;
}

} // namespace mspt
