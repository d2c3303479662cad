#include "mspt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mspt/rng.hpp"

namespace mspt {

const Tensor& MultiScaleBag::scale(const std::string& name) const {
    for (const auto& [sname, mat] : scales)
        if (sname == name) return mat;
    throw DataError("bag " + id + ": no scale '" + name + "'");
}

const MultiScaleBag& Dataset::bag_by_id(const std::string& id) const {
    for (const auto& b : bags)
        if (b.id == id) return b;
    throw DataError("no bag with id '" + id + "'");
}

void SyntheticConfig::validate() const {
    if (n_bags == 0) throw ConfigError("synthetic config: n_bags must be >= 1");
    if (d == 0) throw ConfigError("synthetic config: d must be >= 1");
    if (bag_size_min == 0 || bag_size_min > bag_size_max)
        throw ConfigError("synthetic config: bag_size_range must satisfy 1 <= min <= max");
    if (scale_ratio == 0) throw ConfigError("synthetic config: scale_ratio must be >= 1");
    if (!(witness_rate > 0.0) || witness_rate > 1.0)
        throw ConfigError("synthetic config: witness_rate must be in (0, 1]");
    if (mu < 0.0) throw ConfigError("synthetic config: mu must be >= 0");
    if (!(sigma > 0.0)) throw ConfigError("synthetic config: sigma must be > 0");
    if (class_balance < 0.0 || class_balance > 1.0)
        throw ConfigError("synthetic config: class_balance must be in [0, 1]");
}

namespace {

template <typename T>
T require_field(const nlohmann::json& j, const char* key, const char* ctx) {
    if (!j.contains(key))
        throw ConfigError(std::string(ctx) + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(ctx) + ": field '" + key + "' has the wrong type");
    }
}

template <typename T>
T optional_field(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string bag_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "bag_%05zu", i);
    return std::string(buf);
}

} // namespace

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
    SyntheticConfig cfg;
    cfg.n_bags = require_field<std::size_t>(j, "n_bags", "synthetic config");
    cfg.seed = require_field<std::uint64_t>(j, "seed", "synthetic config");
    cfg.d = optional_field<std::size_t>(j, "d", cfg.d);
    if (j.contains("bag_size_range")) {
        const auto& r = j.at("bag_size_range");
        if (!r.is_array() || r.size() != 2)
            throw ConfigError("synthetic config: bag_size_range must be [min, max]");
        cfg.bag_size_min = r.at(0).get<std::size_t>();
        cfg.bag_size_max = r.at(1).get<std::size_t>();
    }
    cfg.scale_ratio = optional_field<std::size_t>(j, "scale_ratio", cfg.scale_ratio);
    cfg.witness_rate = optional_field<double>(j, "witness_rate", cfg.witness_rate);
    cfg.mu = optional_field<double>(j, "mu", cfg.mu);
    cfg.sigma = optional_field<double>(j, "sigma", cfg.sigma);
    cfg.class_balance = optional_field<double>(j, "class_balance", cfg.class_balance);
    cfg.validate();
    return cfg;
}

nlohmann::json SyntheticConfig::to_json() const {
    return nlohmann::json{
        {"n_bags", n_bags},
        {"d", d},
        {"bag_size_range", {bag_size_min, bag_size_max}},
        {"scale_ratio", scale_ratio},
        {"witness_rate", witness_rate},
        {"mu", mu},
        {"sigma", sigma},
        {"class_balance", class_balance},
        {"seed", seed},
    };
}

Dataset generate_synthetic(const SyntheticConfig& cfg, GeneratorTrace* trace) {
    cfg.validate();

    const std::size_t d = cfg.d;
    Rng dir_rng = derive_rng(cfg.seed, "witness-dir");
    std::vector<double> u(d);
    double norm = 0.0;
    for (auto& v : u) {
        v = dir_rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : u) v /= norm;

    Dataset ds;
    ds.scale_names = {"s20", "s10", "s5"};
    ds.d = d;
    ds.class_names = {"negative", "positive"};
    ds.provenance = {{"kind", "synthetic"}, {"config", cfg.to_json()}};

    if (trace) {
        trace->witness_dir = u;
        trace->witness_counts.assign(cfg.n_bags, {});
    }

    const std::size_t n_pos = static_cast<std::size_t>(
        std::lround(cfg.class_balance * static_cast<double>(cfg.n_bags)));

    for (std::size_t i = 0; i < cfg.n_bags; ++i) {
        const int label = i < n_pos ? 1 : 0;
        Rng rng = derive_rng(cfg.seed, "bag", i);

        MultiScaleBag bag;
        bag.id = bag_name(i);
        bag.label = label;

        std::vector<std::size_t> counts;
        counts.push_back(static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(cfg.bag_size_min),
            static_cast<std::int64_t>(cfg.bag_size_max))));
        for (std::size_t s = 1; s < ds.scale_names.size(); ++s)
            counts.push_back(std::max<std::size_t>(1, counts.back() / cfg.scale_ratio));

        std::vector<double> ctx(d);
        for (auto& v : ctx) v = rng.normal(0.0, cfg.sigma / 4.0);

        const auto witness_count = [&](std::size_t n_s) -> std::size_t {
            if (label == 0) return 0;
            return std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(cfg.witness_rate * static_cast<double>(n_s))));
        };

        const auto draw_witness_row = [&](double* row) {
            for (std::size_t j = 0; j < d; ++j)
                row[j] = quantize_f32(ctx[j] + cfg.mu * u[j] + rng.normal(0.0, cfg.sigma));
        };

        Tensor prev; // finer scale, already generated
        for (std::size_t s = 0; s < ds.scale_names.size(); ++s) {
            const std::size_t n_s = counts[s];
            const std::size_t w_s = witness_count(n_s);
            Tensor mat(n_s, d);
            if (s == 0) {
                for (std::size_t r = 0; r < n_s; ++r) {
                    double* row = mat.values().data() + r * d;
                    if (r < w_s) {
                        draw_witness_row(row);
                    } else {
                        for (std::size_t j = 0; j < d; ++j)
                            row[j] = quantize_f32(ctx[j] + rng.normal(0.0, cfg.sigma));
                    }
                }
            } else {
                // Contiguous near-equal groups of the finer scale.
                const std::size_t n_fine = prev.rows();
                const std::size_t base = n_fine / n_s;
                const std::size_t rem = n_fine % n_s;
                std::size_t start = 0;
                for (std::size_t r = 0; r < n_s; ++r) {
                    const std::size_t len = base + (r < rem ? 1 : 0);
                    double* row = mat.values().data() + r * d;
                    if (r < w_s) {
                        draw_witness_row(row);
                    } else {
                        for (std::size_t j = 0; j < d; ++j) {
                            double mean = 0.0;
                            for (std::size_t q = 0; q < len; ++q) mean += prev.at(start + q, j);
                            mean /= static_cast<double>(len);
                            row[j] = quantize_f32(mean + rng.normal(0.0, cfg.sigma / 2.0));
                        }
                    }
                    start += len;
                }
            }
            if (trace) trace->witness_counts[i].push_back(w_s);
            bag.scales.emplace_back(ds.scale_names[s], mat);
            prev = mat;
        }
        ds.bags.push_back(std::move(bag));
    }
    return ds;
}

FoldPlan split_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("split_kfold: k must be >= 2");
    if (k > ds.size())
        throw ConfigError("split_kfold: k = " + std::to_string(k) + " exceeds dataset size " +
                          std::to_string(ds.size()));

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.train_ids.assign(k, {});
    plan.test_ids.assign(k, {});

    const std::size_t n_classes = ds.class_names.size();
    for (std::size_t cls = 0; cls < n_classes; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (static_cast<std::size_t>(ds.bags[i].label) == cls) idx.push_back(i);
        Rng rng = derive_rng(seed, "kfold", cls);
        rng.shuffle(idx);
        for (std::size_t pos = 0; pos < idx.size(); ++pos)
            plan.test_ids[pos % k].push_back(ds.bags[idx[pos]].id);
    }

    for (std::size_t f = 0; f < k; ++f) {
        for (const auto& b : ds.bags) {
            const auto& test = plan.test_ids[f];
            if (std::find(test.begin(), test.end(), b.id) == test.end())
                plan.train_ids[f].push_back(b.id);
        }
    }
    return plan;
}

std::pair<std::vector<std::string>, std::vector<std::string>>
split_holdout(const Dataset& ds, std::size_t n_test, std::uint64_t seed) {
    if (n_test == 0 || n_test >= ds.size())
        throw ConfigError("split_holdout: n_test must be in [1, N-1]");

    const std::size_t n_classes = ds.class_names.size();
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.bags[i].label)].push_back(i);

    // Largest-remainder apportioning of n_test across classes.
    std::vector<std::size_t> take(n_classes, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t cls = 0; cls < n_classes; ++cls) {
        const double exact = static_cast<double>(n_test) *
                             static_cast<double>(by_class[cls].size()) /
                             static_cast<double>(ds.size());
        take[cls] = static_cast<std::size_t>(exact);
        assigned += take[cls];
        remainders.push_back({exact - static_cast<double>(take[cls]), cls});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < n_test; i = (i + 1) % n_classes) {
        const std::size_t cls = remainders[i].second;
        if (take[cls] < by_class[cls].size()) {
            take[cls]++;
            assigned++;
        }
    }

    std::vector<bool> is_test(ds.size(), false);
    for (std::size_t cls = 0; cls < n_classes; ++cls) {
        auto idx = by_class[cls];
        Rng rng = derive_rng(seed, "holdout", cls);
        rng.shuffle(idx);
        for (std::size_t i = 0; i < take[cls]; ++i) is_test[idx[i]] = true;
    }

    std::vector<std::string> train, test;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (is_test[i] ? test : train).push_back(ds.bags[i].id);
    return {train, test};
}

} // namespace mspt
