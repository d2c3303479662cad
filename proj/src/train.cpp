#include "mspt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>

#include "mspt/kernels.hpp"
#include "mspt/metrics.hpp"

namespace mspt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::vector<std::size_t> resolve_ids(const Dataset& ds, const std::vector<std::string>& ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        bool found = false;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.bags[i].id == id) {
                out.push_back(i);
                found = true;
                break;
            }
        }
        if (!found) throw DataError("no bag with id '" + id + "'");
    }
    return out;
}

const PrototypeBag* protos_for(const PrototypeSet* protos, const std::string& bag_id,
                               bool required) {
    if (!required) return nullptr;
    if (!protos) throw ConfigError("model needs a prototype cache but none was supplied");
    return &protos->for_bag(bag_id);
}

} // namespace

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("train config: lr must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("train config: weight_decay must be >= 0");
    if (batch_size == 0) throw ConfigError("train config: batch_size must be >= 1");
    if (max_epochs == 0) throw ConfigError("train config: max_epochs must be >= 1");
    if (patience == 0 || patience > max_epochs)
        throw ConfigError("train config: patience must be in [1, max_epochs]");
    if (validation_split < 0.0 || validation_split >= 1.0)
        throw ConfigError("train config: validation_split must be in [0, 1)");
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.lr = j.value("lr", cfg.lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.validation_split = j.value("validation_split", cfg.validation_split);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

nlohmann::json TrainConfig::to_json() const {
    return nlohmann::json{
        {"lr", lr},
        {"weight_decay", weight_decay},
        {"batch_size", batch_size},
        {"max_epochs", max_epochs},
        {"patience", patience},
        {"validation_split", validation_split},
        {"seed", seed},
    };
}

TrainResult train(const Dataset& ds, const std::vector<std::string>& train_ids,
                  const PrototypeSet* protos, Model model, const TrainConfig& cfg) {
    cfg.validate();
    if (train_ids.empty()) throw ConfigError("train: empty training set");

    std::vector<std::size_t> pool = resolve_ids(ds, train_ids);
    const bool wants_protos = needs_prototypes(model.config().kind);

    // Optional monitored validation subset, carved from the training ids.
    std::vector<std::size_t> val;
    if (cfg.validation_split > 0.0) {
        Rng rng = derive_rng(cfg.seed, "val-split");
        rng.shuffle(pool);
        const std::size_t n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(cfg.validation_split *
                                                    static_cast<double>(pool.size()))));
        if (n_val >= pool.size())
            throw ConfigError("train: validation_split leaves no training bags");
        val.assign(pool.end() - static_cast<std::ptrdiff_t>(n_val), pool.end());
        pool.resize(pool.size() - n_val);
    }

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.weight_decay = cfg.weight_decay;
    Adam opt(acfg);

    TrainResult result{std::move(model), {}, 0, 0};
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_values = result.model.snapshot_values();
    std::size_t since_best = 0;

    const auto bag_loss = [&](std::size_t idx, Tape* tape) {
        const auto& bag = ds.bags[idx];
        const Tensor logits =
            result.model.forward_logits(bag, protos_for(protos, bag.id, wants_protos), tape);
        return cross_entropy_loss(logits, static_cast<std::size_t>(bag.label), tape);
    };

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order = pool;
        Rng rng = derive_rng(cfg.seed, "epoch", epoch);
        rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            result.model.zero_grad();
            for (std::size_t b = start; b < stop; ++b) {
                Tape tape;
                Tensor loss = bag_loss(order[b], &tape);
                const double lv = loss.item();
                if (!std::isfinite(lv))
                    throw NumericError("loss is not finite at epoch " + std::to_string(epoch) +
                                       ", bag " + ds.bags[order[b]].id);
                epoch_loss += lv;
                tape.backward(loss);
            }
            if (stop - start > 1) {
                const double inv = 1.0 / static_cast<double>(stop - start);
                for (auto& p : result.model.params()) p.value.scale_grad(inv);
            }
            opt.step(result.model.params());
        }
        epoch_loss /= static_cast<double>(order.size());

        double monitored = epoch_loss;
        if (!val.empty()) {
            double vloss = 0.0;
            for (std::size_t idx : val) vloss += bag_loss(idx, nullptr).item();
            monitored = vloss / static_cast<double>(val.size());
        }
        result.loss_curve.push_back(monitored);
        result.epochs_run = epoch + 1;

        if (monitored < best) {
            best = monitored;
            result.best_epoch = epoch;
            best_values = result.model.snapshot_values();
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= cfg.patience) break;
    }

    result.model.restore_values(best_values);
    return result;
}

EvalResult evaluate(const Model& model, const Dataset& ds,
                    const std::vector<std::string>& ids, const PrototypeSet* protos) {
    if (ids.empty()) throw ConfigError("evaluate: empty bag list");
    const bool wants_protos = needs_prototypes(model.config().kind);

    EvalResult result;
    std::vector<std::vector<double>> probabilities;
    for (const auto& id : ids) {
        const auto& bag = ds.bag_by_id(id);
        const Tensor logits = model.forward_logits(bag, protos_for(protos, id, wants_protos));
        const Tensor probs = softmax_rows(logits);
        probabilities.push_back(probs.values());
        result.bag_ids.push_back(id);
        result.labels.push_back(bag.label);
        result.scores.push_back(probs.values().at(1));
    }
    result.accuracy = accuracy(probabilities, result.labels);
    return result;
}

namespace {

FoldResult run_single_split(const Dataset& ds, const PrototypeSet* protos,
                            const ModelConfig& mcfg, const TrainConfig& tcfg,
                            const std::vector<std::string>& train_ids,
                            const std::vector<std::string>& test_ids,
                            Model* trained_out = nullptr) {
    Model model = Model::init(mcfg, ds.d, ds.scale_names, derive_seed(tcfg.seed, "init"));
    TrainResult tr = train(ds, train_ids, protos, std::move(model), tcfg);
    EvalResult ev = evaluate(tr.model, ds, test_ids, protos);
    FoldResult fold;
    fold.accuracy = ev.accuracy;
    fold.auc = auc(ev.scores, ev.labels);
    fold.loss_curve = std::move(tr.loss_curve);
    fold.best_epoch = tr.best_epoch;
    if (trained_out) *trained_out = tr.model;
    return fold;
}

void summarize(MetricsReport& report) {
    std::vector<double> accs, aucs;
    for (const auto& f : report.folds) {
        accs.push_back(f.accuracy);
        aucs.push_back(f.auc);
    }
    report.acc_mean = mean(accs);
    report.acc_sd = std_dev(accs);
    report.auc_mean = mean(aucs);
    report.auc_sd = std_dev(aucs);
}

} // namespace

MetricsReport run_holdout(const Dataset& ds, const PrototypeSet* protos,
                          const ModelConfig& mcfg, const TrainConfig& tcfg,
                          std::size_t n_test, std::uint64_t split_seed, Model* trained_out) {
    const auto t0 = Clock::now();
    const auto [train_ids, test_ids] = split_holdout(ds, n_test, split_seed);

    MetricsReport report;
    report.experiment = "holdout";
    report.folds.push_back(
        run_single_split(ds, protos, mcfg, tcfg, train_ids, test_ids, trained_out));
    summarize(report);
    report.wall_time_sec = seconds_since(t0);
    return report;
}

MetricsReport run_kfold(const Dataset& ds, const PrototypeSet* protos,
                        const ModelConfig& mcfg, const TrainConfig& tcfg,
                        std::size_t k, std::uint64_t split_seed) {
    const auto t0 = Clock::now();
    const FoldPlan plan = split_kfold(ds, k, split_seed);

    MetricsReport report;
    report.experiment = "kfold";
    for (std::size_t f = 0; f < k; ++f) {
        TrainConfig fold_cfg = tcfg;
        fold_cfg.seed = derive_seed(tcfg.seed, "fold", f);
        report.folds.push_back(
            run_single_split(ds, protos, mcfg, fold_cfg, plan.train_ids[f], plan.test_ids[f]));
    }
    summarize(report);
    report.wall_time_sec = seconds_since(t0);
    return report;
}

AblationKReport ablate_k(const Dataset& ds, const ModelConfig& base_model,
                         const TrainConfig& tcfg, const KMeansConfig& kmeans_base,
                         const std::vector<std::size_t>& k_values, std::size_t n_test,
                         std::uint64_t split_seed) {
    if (k_values.empty()) throw ConfigError("ablate_k: empty K list");
    const auto t0 = Clock::now();
    const auto [train_ids, test_ids] = split_holdout(ds, n_test, split_seed);

    AblationKReport report;
    for (std::size_t k : k_values) {
        KMeansConfig kc = kmeans_base;
        kc.k = k;
        const PrototypeSet protos = extract_all_prototypes(ds, kc);
        for (ModelKind kind : {ModelKind::kPT, ModelKind::kPrototypeBag}) {
            ModelConfig mc = base_model;
            mc.kind = kind;
            mc.k = k;
            TrainConfig tc = tcfg;
            tc.seed = derive_seed(tcfg.seed, "ablate:" + model_kind_to_string(kind), k);
            const FoldResult fold = run_single_split(ds, &protos, mc, tc, train_ids, test_ids);
            AblationCell cell;
            cell.has_k = true;
            cell.k = k;
            cell.variant = model_kind_to_string(kind);
            cell.accuracy = fold.accuracy;
            cell.auc = fold.auc;
            report.cells.push_back(cell);
        }
    }

    // K-independent reference line: trained on all instances, no clustering.
    {
        ModelConfig mc = base_model;
        mc.kind = ModelKind::kFullBag;
        TrainConfig tc = tcfg;
        tc.seed = derive_seed(tcfg.seed, "ablate:full-bag", 0);
        const FoldResult fold = run_single_split(ds, nullptr, mc, tc, train_ids, test_ids);
        AblationCell cell;
        cell.variant = "full-bag";
        cell.accuracy = fold.accuracy;
        cell.auc = fold.auc;
        report.cells.push_back(cell);
    }

    report.wall_time_sec = seconds_since(t0);
    return report;
}

FusionReport ablate_fusion(const Dataset& ds, const PrototypeSet& protos,
                           const ModelConfig& base_model, const TrainConfig& tcfg,
                           std::size_t n_test, std::uint64_t split_seed) {
    const auto t0 = Clock::now();
    const auto [train_ids, test_ids] = split_holdout(ds, n_test, split_seed);

    FusionReport report;
    for (FusionStrategy strategy :
         {FusionStrategy::kConcatenation, FusionStrategy::kMSMax, FusionStrategy::kMSAttention,
          FusionStrategy::kMFFM}) {
        ModelConfig mc = base_model;
        mc.kind = ModelKind::kMSPT;
        mc.fusion = strategy;
        // Identical folds and seeds across strategies: only the fusion differs.
        const FoldResult fold = run_single_split(ds, &protos, mc, tcfg, train_ids, test_ids);
        FusionCell cell;
        cell.strategy = fusion_to_string(strategy);
        cell.accuracy = fold.accuracy;
        cell.auc = fold.auc;
        cell.config_digest = digest_hex(nlohmann::json{{"model", mc.to_json()},
                                                       {"train", tcfg.to_json()},
                                                       {"n_test", n_test},
                                                       {"split_seed", split_seed}}
                                            .dump());
        report.cells.push_back(cell);
    }
    report.wall_time_sec = seconds_since(t0);
    return report;
}

namespace {

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = mean(x), my = mean(y);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

double time_best_of(std::size_t repeats, const std::function<void()>& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

} // namespace

BenchReport bench_complexity(const std::vector<std::size_t>& n_values, std::size_t k,
                             std::size_t d_k, std::size_t repeats, bool measure_dense) {
    if (n_values.empty()) throw ConfigError("bench: empty n list");
    for (std::size_t i = 1; i < n_values.size(); ++i)
        if (n_values[i] <= n_values[i - 1])
            throw ConfigError("bench: n values must be strictly ascending");
    if (k == 0 || d_k == 0 || repeats == 0)
        throw ConfigError("bench: K, d_k and repeats must be positive");

    BenchReport report;
    report.k = k;
    report.d_k = d_k;
    report.repeats = repeats;

    Rng rng(12345);
    std::vector<double> wq(d_k * d_k), wk(d_k * d_k), wv(d_k * d_k), p(k * d_k);
    for (auto* v : {&wq, &wk, &wv, &p})
        for (auto& x : *v) x = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(d_k)));

    volatile double sink = 0.0;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_k));

    for (std::size_t n : n_values) {
        std::vector<double> x(n * d_k);
        for (auto& v : x) v = rng.normal();

        BenchRow row;
        row.n = n;

        {
            std::vector<double> keys(n * d_k), vals(n * d_k), q(k * d_k), a(k * n), out(k * d_k);
            const auto pt_once = [&]() {
                kernels::gemm_nn(n, d_k, d_k, x.data(), wk.data(), keys.data());
                kernels::gemm_nn(n, d_k, d_k, x.data(), wv.data(), vals.data());
                kernels::gemm_nn(k, d_k, d_k, p.data(), wq.data(), q.data());
                kernels::gemm_nt(k, d_k, n, q.data(), keys.data(), a.data());
                for (auto& v : a) v *= inv_sqrt;
                kernels::softmax_rows(k, n, a.data(), a.data());
                kernels::gemm_nn(k, n, d_k, a.data(), vals.data(), out.data());
            };
            pt_once(); // warm up
            row.pt_seconds = time_best_of(repeats, pt_once);
            sink += out[0];
        }

        if (measure_dense) {
            std::vector<double> q(n * d_k), keys(n * d_k), vals(n * d_k), a(n * n), out(n * d_k);
            const auto dense_once = [&]() {
                kernels::gemm_nn(n, d_k, d_k, x.data(), wq.data(), q.data());
                kernels::gemm_nn(n, d_k, d_k, x.data(), wk.data(), keys.data());
                kernels::gemm_nn(n, d_k, d_k, x.data(), wv.data(), vals.data());
                kernels::gemm_nt(n, d_k, n, q.data(), keys.data(), a.data());
                for (auto& v : a) v *= inv_sqrt;
                kernels::softmax_rows(n, n, a.data(), a.data());
                kernels::gemm_nn(n, n, d_k, a.data(), vals.data(), out.data());
            };
            dense_once();
            row.dense_seconds = time_best_of(repeats, dense_once);
            report.dense_measured = true;
            sink += out[0];
        }

        report.rows.push_back(row);
    }
    (void)sink;

    if (n_values.size() >= 2) {
        std::vector<double> logn, logpt, logdense;
        for (const auto& row : report.rows) {
            logn.push_back(std::log(static_cast<double>(row.n)));
            logpt.push_back(std::log(row.pt_seconds));
            if (report.dense_measured) logdense.push_back(std::log(row.dense_seconds));
        }
        report.slopes_valid = true;
        report.pt_slope = least_squares_slope(logn, logpt);
        if (report.dense_measured) report.dense_slope = least_squares_slope(logn, logdense);
    }
    return report;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json folds_json = nlohmann::json::array();
    for (const auto& f : folds) {
        folds_json.push_back({
            {"accuracy", f.accuracy},
            {"auc", f.auc},
            {"best_epoch", f.best_epoch},
            {"loss_curve", f.loss_curve},
        });
    }
    return nlohmann::json{
        {"experiment", experiment},
        {"folds", folds_json},
        {"summary",
         {{"accuracy", {{"mean", acc_mean}, {"sd", acc_sd}}},
          {"auc", {{"mean", auc_mean}, {"sd", auc_sd}}}}},
        {"config", config},
        {"config_digest", config_digest},
        {"wall_time_sec", wall_time_sec},
    };
}

nlohmann::json AblationKReport::to_json() const {
    nlohmann::json cells_json = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json jc = {{"variant", c.variant}, {"accuracy", c.accuracy}, {"auc", c.auc}};
        if (c.has_k)
            jc["K"] = c.k;
        else
            jc["K"] = nullptr;
        cells_json.push_back(jc);
    }
    return nlohmann::json{
        {"cells", cells_json},
        {"config", config},
        {"config_digest", config_digest},
        {"wall_time_sec", wall_time_sec},
    };
}

nlohmann::json FusionReport::to_json() const {
    nlohmann::json cells_json = nlohmann::json::array();
    for (const auto& c : cells)
        cells_json.push_back({{"strategy", c.strategy},
                              {"accuracy", c.accuracy},
                              {"auc", c.auc},
                              {"config_digest", c.config_digest}});
    return nlohmann::json{
        {"cells", cells_json},
        {"config", config},
        {"config_digest", config_digest},
        {"wall_time_sec", wall_time_sec},
    };
}

nlohmann::json BenchReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json jr = {{"n", r.n}, {"pt_seconds", r.pt_seconds}};
        if (dense_measured) jr["dense_seconds"] = r.dense_seconds;
        rows_json.push_back(jr);
    }
    nlohmann::json slopes = {{"valid", slopes_valid}};
    if (slopes_valid) {
        slopes["pt"] = pt_slope;
        if (dense_measured) slopes["dense"] = dense_slope;
    }
    return nlohmann::json{
        {"K", k}, {"d_k", d_k}, {"repeats", repeats}, {"rows", rows_json}, {"slopes", slopes},
    };
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    return out;
}

} // namespace

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "fold,accuracy,auc,best_epoch\n";
    for (std::size_t f = 0; f < report.folds.size(); ++f)
        out << f << "," << fmt_double(report.folds[f].accuracy) << ","
            << fmt_double(report.folds[f].auc) << "," << report.folds[f].best_epoch << "\n";
    out << "mean," << fmt_double(report.acc_mean) << "," << fmt_double(report.auc_mean) << ",\n";
    out << "sd," << fmt_double(report.acc_sd) << "," << fmt_double(report.auc_sd) << ",\n";
}

void write_ablate_k_csv(const AblationKReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "K,variant,accuracy,auc\n";
    for (const auto& c : report.cells) {
        if (c.has_k)
            out << c.k;
        out << "," << c.variant << "," << fmt_double(c.accuracy) << "," << fmt_double(c.auc)
            << "\n";
    }
}

void write_fusion_csv(const FusionReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "strategy,accuracy,auc,config_digest\n";
    for (const auto& c : report.cells)
        out << c.strategy << "," << fmt_double(c.accuracy) << "," << fmt_double(c.auc) << ","
            << c.config_digest << "\n";
}

void write_bench_csv(const BenchReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "n,pt_seconds,dense_seconds\n";
    for (const auto& r : report.rows) {
        out << r.n << "," << fmt_double(r.pt_seconds) << ",";
        if (report.dense_measured) out << fmt_double(r.dense_seconds);
        out << "\n";
    }
}

void dump_attention_csv(const Model& model, const Dataset& ds,
                        const std::vector<std::string>& ids, const PrototypeSet* protos,
                        const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "bag_id,scale,prototype_index,instance_index,weight\n";
    const bool wants = needs_prototypes(model.config().kind);
    for (const auto& id : ids) {
        const auto& bag = ds.bag_by_id(id);
        const ForwardTrace trace = model.forward(bag, protos_for(protos, id, wants));
        for (const auto& [sname, a] : trace.attention) {
            for (std::size_t r = 0; r < a.rows(); ++r)
                for (std::size_t c = 0; c < a.cols(); ++c)
                    out << id << "," << sname << "," << r << "," << c << ","
                        << fmt_double(a.at(r, c)) << "\n";
        }
    }
}

void dump_gap_csv(const Model& model, const Dataset& ds, const std::vector<std::string>& ids,
                  const PrototypeSet* protos, const std::filesystem::path& path) {
    auto out = open_csv(path);
    out << "bag_id,prototype_index,weight\n";
    const bool wants = needs_prototypes(model.config().kind);
    bool any = false;
    for (const auto& id : ids) {
        const auto& bag = ds.bag_by_id(id);
        const ForwardTrace trace = model.forward(bag, protos_for(protos, id, wants));
        if (!trace.gap_weights.defined()) continue;
        any = true;
        for (std::size_t c = 0; c < trace.gap_weights.cols(); ++c)
            out << id << "," << c << "," << fmt_double(trace.gap_weights.at(0, c)) << "\n";
    }
    if (!any)
        throw ConfigError("model kind '" + model_kind_to_string(model.config().kind) +
                          "' has no gated pooling weights to dump");
}

} // namespace mspt
