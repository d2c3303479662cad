// Experiment CLI: dataset generation, prototype clustering, training,
// evaluation, ablation sweeps and the attention-complexity benchmark.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mspt/data.hpp"
#include "mspt/dataset_io.hpp"
#include "mspt/kmeans.hpp"
#include "mspt/model.hpp"
#include "mspt/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SplitSpec {
    std::string kind = "holdout";
    std::size_t test = 0; // holdout test size
    std::size_t k = 5;    // kfold count
    std::uint64_t seed = 0;
};

struct RunConfig {
    fs::path dataset;
    fs::path protos;
    fs::path output;
    mspt::ModelConfig model;
    mspt::TrainConfig train;
    mspt::KMeansConfig kmeans;
    SplitSpec split;
    std::vector<std::size_t> k_values = {1, 2, 4, 8, 16, 32};

    json resolved() const {
        return json{
            {"dataset", dataset.string()},
            {"protos", protos.string()},
            {"model", model.to_json()},
            {"train", train.to_json()},
            {"kmeans", kmeans.to_json()},
            {"split",
             {{"kind", split.kind}, {"test", split.test}, {"k", split.k}, {"seed", split.seed}}},
            {"ablate", {{"k_values", k_values}}},
        };
    }
    std::string digest() const { return mspt::digest_hex(resolved().dump()); }
};

RunConfig load_run_config(const fs::path& path) {
    const json j = mspt::read_json_file(path, "run config");
    RunConfig rc;
    if (!j.contains("dataset")) throw mspt::ConfigError("run config: missing field 'dataset'");
    rc.dataset = j.at("dataset").get<std::string>();
    if (j.contains("protos")) rc.protos = j.at("protos").get<std::string>();
    if (j.contains("output")) rc.output = j.at("output").get<std::string>();
    if (!j.contains("model")) throw mspt::ConfigError("run config: missing field 'model'");
    rc.model = mspt::ModelConfig::from_json(j.at("model"));
    rc.train = j.contains("train") ? mspt::TrainConfig::from_json(j.at("train"))
                                   : mspt::TrainConfig{};
    if (j.contains("kmeans")) {
        rc.kmeans = mspt::KMeansConfig::from_json(j.at("kmeans"));
    } else {
        rc.kmeans.k = rc.model.k;
        rc.kmeans.seed = rc.train.seed;
    }
    if (j.contains("split")) {
        const auto& js = j.at("split");
        rc.split.kind = js.value("kind", rc.split.kind);
        rc.split.test = js.value("test", rc.split.test);
        rc.split.k = js.value("k", rc.split.k);
        rc.split.seed = js.value("seed", rc.train.seed);
    } else {
        rc.split.seed = rc.train.seed;
    }
    if (rc.split.kind != "holdout" && rc.split.kind != "kfold")
        throw mspt::ConfigError("run config: split.kind must be 'holdout' or 'kfold'");
    if (j.contains("ablate") && j.at("ablate").contains("k_values"))
        rc.k_values = j.at("ablate").at("k_values").get<std::vector<std::size_t>>();
    return rc;
}

// --seed overrides every seeded stage so one flag reproduces a whole run.
void apply_seed_override(RunConfig& rc, const std::optional<std::uint64_t>& seed) {
    if (!seed) return;
    rc.train.seed = *seed;
    rc.kmeans.seed = *seed;
    rc.split.seed = *seed;
}

fs::path resolve_output(const RunConfig& rc, const std::string& flag_out) {
    fs::path out = flag_out.empty() ? rc.output : fs::path(flag_out);
    if (out.empty())
        throw mspt::ConfigError("no output directory: set 'output' in the run config or pass --out");
    fs::create_directories(out);
    return out;
}

mspt::PrototypeSet load_protos_for(const RunConfig& rc) {
    if (rc.protos.empty())
        throw mspt::ConfigError("model kind '" +
                                mspt::model_kind_to_string(rc.model.kind) +
                                "' needs a prototype cache: set 'protos' in the run config");
    mspt::KMeansConfig expected = rc.kmeans;
    expected.k = rc.model.k;
    return mspt::load_prototype_cache(rc.protos, expected);
}

std::size_t holdout_test_count(const RunConfig& rc, std::size_t n_bags) {
    if (rc.split.test > 0) return rc.split.test;
    return std::max<std::size_t>(1, n_bags / 5);
}

int cmd_gen(const std::string& config_path, const std::string& out_dir) {
    const json j = mspt::read_json_file(config_path, "synthetic config");
    const auto cfg = mspt::SyntheticConfig::from_json(j);
    const mspt::Dataset ds = mspt::generate_synthetic(cfg);
    mspt::save_dataset(ds, out_dir);
    std::cout << "dataset: " << out_dir << "\n"
              << "bags: " << ds.size() << " d: " << ds.d << "\n"
              << "config_digest: " << mspt::digest_hex(cfg.to_json().dump()) << "\n";
    return 0;
}

int cmd_cluster(const std::string& dataset_dir, const std::string& config_path,
                std::string out_dir) {
    const mspt::Dataset ds = mspt::load_dataset(dataset_dir);
    mspt::KMeansConfig cfg;
    if (!config_path.empty())
        cfg = mspt::KMeansConfig::from_json(mspt::read_json_file(config_path, "kmeans config"));
    if (out_dir.empty()) out_dir = (fs::path(dataset_dir) / "protos").string();

    const mspt::PrototypeSet protos = mspt::extract_all_prototypes(ds, cfg);
    mspt::cache_prototypes(protos, out_dir);

    std::size_t warnings = 0;
    for (const auto& bag : protos.bags) warnings += bag.warnings.size();
    std::cout << "prototype cache: " << out_dir << "\n"
              << "bags: " << protos.bags.size() << " K: " << cfg.k << "\n"
              << "config_digest: " << cfg.digest() << "\n";
    if (warnings) std::cout << "padding warnings: " << warnings << " (see manifest)\n";
    return 0;
}

int cmd_train(RunConfig rc, const std::string& flag_out) {
    const fs::path out = resolve_output(rc, flag_out);
    const mspt::Dataset ds = mspt::load_dataset(rc.dataset);

    mspt::PrototypeSet protos;
    const bool wants = mspt::needs_prototypes(rc.model.kind);
    if (wants) protos = load_protos_for(rc);

    mspt::MetricsReport report;
    if (rc.split.kind == "holdout") {
        mspt::Model trained;
        report = mspt::run_holdout(ds, wants ? &protos : nullptr, rc.model, rc.train,
                                   holdout_test_count(rc, ds.size()), rc.split.seed, &trained);
        mspt::write_json_file(out / "model.json", trained.to_json());
    } else {
        report = mspt::run_kfold(ds, wants ? &protos : nullptr, rc.model, rc.train, rc.split.k,
                                 rc.split.seed);
    }
    report.config = rc.resolved();
    report.config_digest = rc.digest();
    mspt::write_json_file(out / "metrics.json", report.to_json());
    mspt::write_metrics_csv(report, out / "metrics.csv");

    std::cout << "experiment: " << report.experiment << "\n"
              << "accuracy: " << report.acc_mean << " +/- " << report.acc_sd << "\n"
              << "auc: " << report.auc_mean << " +/- " << report.auc_sd << "\n"
              << "config_digest: " << report.config_digest << "\n"
              << "reports: " << (out / "metrics.json") << "\n";
    return 0;
}

int cmd_eval(RunConfig rc, const std::string& model_path, const std::string& flag_out,
             const std::string& dump_attention, const std::string& dump_gap) {
    const fs::path out = resolve_output(rc, flag_out);
    const mspt::Dataset ds = mspt::load_dataset(rc.dataset);
    const mspt::Model model = mspt::Model::from_json(mspt::read_json_file(model_path, "model file"));

    mspt::PrototypeSet protos;
    const bool wants = mspt::needs_prototypes(model.config().kind);
    if (wants) protos = load_protos_for(rc);

    std::vector<std::string> test_ids;
    if (rc.split.kind == "holdout") {
        test_ids = mspt::split_holdout(ds, holdout_test_count(rc, ds.size()), rc.split.seed).second;
    } else {
        throw mspt::ConfigError("eval expects a holdout split (kfold runs evaluate internally)");
    }

    const mspt::EvalResult ev = mspt::evaluate(model, ds, test_ids, wants ? &protos : nullptr);

    mspt::MetricsReport report;
    report.experiment = "eval";
    mspt::FoldResult fold;
    fold.accuracy = ev.accuracy;
    fold.auc = mspt::auc(ev.scores, ev.labels);
    report.folds.push_back(fold);
    report.acc_mean = fold.accuracy;
    report.auc_mean = fold.auc;
    report.config = rc.resolved();
    report.config_digest = rc.digest();
    mspt::write_json_file(out / "eval.json", report.to_json());
    mspt::write_metrics_csv(report, out / "eval.csv");

    if (!dump_attention.empty())
        mspt::dump_attention_csv(model, ds, test_ids, wants ? &protos : nullptr, dump_attention);
    if (!dump_gap.empty())
        mspt::dump_gap_csv(model, ds, test_ids, wants ? &protos : nullptr, dump_gap);

    std::cout << "accuracy: " << fold.accuracy << "\nauc: " << fold.auc << "\n"
              << "config_digest: " << report.config_digest << "\n";
    return 0;
}

int cmd_ablate_k(RunConfig rc, const std::string& flag_out) {
    const fs::path out = resolve_output(rc, flag_out);
    const mspt::Dataset ds = mspt::load_dataset(rc.dataset);
    mspt::AblationKReport report =
        mspt::ablate_k(ds, rc.model, rc.train, rc.kmeans, rc.k_values,
                       holdout_test_count(rc, ds.size()), rc.split.seed);
    report.config = rc.resolved();
    report.config_digest = rc.digest();
    mspt::write_json_file(out / "ablate_k.json", report.to_json());
    mspt::write_ablate_k_csv(report, out / "ablate_k.csv");
    std::cout << "cells: " << report.cells.size() << "\n"
              << "config_digest: " << report.config_digest << "\n"
              << "reports: " << (out / "ablate_k.csv") << "\n";
    return 0;
}

int cmd_ablate_fusion(RunConfig rc, const std::string& flag_out) {
    const fs::path out = resolve_output(rc, flag_out);
    const mspt::Dataset ds = mspt::load_dataset(rc.dataset);
    rc.model.kind = mspt::ModelKind::kMSPT;
    const mspt::PrototypeSet protos = load_protos_for(rc);
    mspt::FusionReport report = mspt::ablate_fusion(ds, protos, rc.model, rc.train,
                                                    holdout_test_count(rc, ds.size()),
                                                    rc.split.seed);
    report.config = rc.resolved();
    report.config_digest = rc.digest();
    mspt::write_json_file(out / "ablate_fusion.json", report.to_json());
    mspt::write_fusion_csv(report, out / "ablate_fusion.csv");
    std::cout << "strategies: " << report.cells.size() << "\n"
              << "config_digest: " << report.config_digest << "\n"
              << "reports: " << (out / "ablate_fusion.csv") << "\n";
    return 0;
}

int cmd_bench(const std::vector<std::size_t>& n_values, std::size_t k, std::size_t d_k,
              std::size_t repeats, bool no_dense, const std::string& flag_out) {
    fs::path out = flag_out.empty() ? fs::path(".") : fs::path(flag_out);
    fs::create_directories(out);
    const mspt::BenchReport report = mspt::bench_complexity(n_values, k, d_k, repeats, !no_dense);
    mspt::write_json_file(out / "bench.json", report.to_json());
    mspt::write_bench_csv(report, out / "bench.csv");
    for (const auto& row : report.rows) {
        std::cout << "n=" << row.n << " pt=" << row.pt_seconds << "s";
        if (report.dense_measured) std::cout << " dense=" << row.dense_seconds << "s";
        std::cout << "\n";
    }
    if (report.slopes_valid) {
        std::cout << "pt log-log slope: " << report.pt_slope << "\n";
        if (report.dense_measured)
            std::cout << "dense log-log slope: " << report.dense_slope << "\n";
    } else {
        std::cout << "slopes omitted (need >= 2 points)\n";
    }
    return 0;
}

int cmd_validate(const std::string& dataset_dir) {
    const mspt::ValidationReport report = mspt::validate_manifest(dataset_dir);
    if (report.ok()) {
        std::cout << "valid container, no findings\n";
        return 0;
    }
    for (const auto& f : report.findings) std::cout << "finding: " << f << "\n";
    std::cout << report.findings.size() << " finding(s)\n";
    return 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale prototype attention experiments over feature-bag datasets"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed_override;
    app.add_option("--seed", seed_override, "Override every seeded stage of the run");

    std::string config_path, dataset_dir, out_dir, run_path, model_path;
    std::string dump_attention, dump_gap;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset container");
    gen->add_option("--config", config_path, "Synthetic config JSON")->required();
    gen->add_option("--out", out_dir, "Output dataset directory")->required();

    auto* cluster = app.add_subcommand("cluster", "Build the per-bag prototype cache");
    cluster->add_option("--dataset", dataset_dir, "Dataset directory")->required();
    cluster->add_option("--config", config_path, "K-means config JSON");
    cluster->add_option("--out", out_dir, "Cache directory (default <dataset>/protos)");

    auto* train = app.add_subcommand("train", "Train a model and write metric reports");
    train->add_option("--run", run_path, "Run config JSON")->required();
    train->add_option("--out", out_dir, "Output directory (overrides run config)");

    auto* eval = app.add_subcommand("eval", "Evaluate a saved model on the run's test split");
    eval->add_option("--run", run_path, "Run config JSON")->required();
    eval->add_option("--model", model_path, "Saved model JSON")->required();
    eval->add_option("--out", out_dir, "Output directory");
    eval->add_option("--dump-attention", dump_attention, "Write per-bag attention maps to CSV");
    eval->add_option("--dump-gap", dump_gap, "Write pooled attention weights to CSV");

    auto* ablate_k = app.add_subcommand("ablate-k", "Prototype-count sweep (PT, prototype-bag, full-bag)");
    ablate_k->add_option("--run", run_path, "Run config JSON")->required();
    ablate_k->add_option("--out", out_dir, "Output directory");

    auto* ablate_fusion = app.add_subcommand("ablate-fusion", "Fusion-strategy sweep for the multi-scale model");
    ablate_fusion->add_option("--run", run_path, "Run config JSON")->required();
    ablate_fusion->add_option("--out", out_dir, "Output directory");

    std::vector<std::size_t> bench_n = {1024, 2048, 4096};
    std::size_t bench_k = 16, bench_dk = 64, bench_repeats = 3;
    bool bench_no_dense = false;
    auto* bench = app.add_subcommand("bench", "Attention complexity benchmark (prototype vs dense)");
    bench->add_option("--n", bench_n, "Instance counts, ascending");
    bench->add_option("--K", bench_k, "Prototype count");
    bench->add_option("--dk", bench_dk, "Feature dimension");
    bench->add_option("--repeats", bench_repeats, "Timing repeats (best-of)");
    bench->add_flag("--no-dense", bench_no_dense, "Skip the quadratic dense path");
    bench->add_option("--out", out_dir, "Output directory");

    auto* validate = app.add_subcommand("validate", "Check a dataset container without loading it");
    validate->add_option("--dataset", dataset_dir, "Dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(config_path, out_dir);
        if (cluster->parsed()) return cmd_cluster(dataset_dir, config_path, out_dir);
        if (validate->parsed()) return cmd_validate(dataset_dir);
        if (bench->parsed())
            return cmd_bench(bench_n, bench_k, bench_dk, bench_repeats, bench_no_dense, out_dir);

        RunConfig rc = load_run_config(run_path);
        apply_seed_override(rc, seed_override);
        if (train->parsed()) return cmd_train(std::move(rc), out_dir);
        if (eval->parsed()) return cmd_eval(std::move(rc), model_path, out_dir, dump_attention, dump_gap);
        if (ablate_k->parsed()) return cmd_ablate_k(std::move(rc), out_dir);
        if (ablate_fusion->parsed()) return cmd_ablate_fusion(std::move(rc), out_dir);
        return 2;
    } catch (const mspt::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const mspt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mspt::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
