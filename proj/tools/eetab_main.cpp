#include "eetab/benchmark.hpp"
#include "eetab/csv.hpp"
#include "eetab/parallel.hpp"
#include "eetab/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using ee::Dataset;

// Flat key-value config with [sections]; '#' starts a comment.
using IniMap = std::map<std::string, std::string>; // "section.key" -> value

IniMap parse_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    IniMap out;
    std::string line, section;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.front() == '[') {
            if (line.back() != ']') throw std::runtime_error("config: bad section: " + line);
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config: expected key=value: " + line);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        out[(section.empty() ? "" : section + ".") + trim(line.substr(0, eq))] =
            trim(line.substr(eq + 1));
    }
    return out;
}

ee::BenchmarkConfig benchmark_config_from_ini(const IniMap& ini) {
    ee::BenchmarkConfig cfg;
    const auto get = [&](const std::string& key) -> const std::string* {
        const auto it = ini.find(key);
        return it == ini.end() ? nullptr : &it->second;
    };
    const auto get_u = [&](const std::string& key, std::size_t& out) {
        if (const auto* v = get(key)) out = std::stoull(*v);
    };
    const auto get_d = [&](const std::string& key, double& out) {
        if (const auto* v = get(key)) out = std::stod(*v);
    };

    if (const auto* v = get("run.split_mode"))
        cfg.split_mode = (*v == "temporal") ? ee::SplitMode::temporal : ee::SplitMode::shuffled;
    get_d("run.test_fraction", cfg.test_fraction);
    if (const auto* v = get("run.sparsify"); v && *v != "none")
        cfg.sparsify_n = std::stoull(*v);
    if (const auto* v = get("run.seed")) {
        cfg.seed = std::stoull(*v);
        cfg.nn.seed = cfg.seed;
    }
    if (const auto* v = get("run.methods")) {
        cfg.methods.clear();
        std::stringstream ss(*v);
        std::string name;
        while (std::getline(ss, name, ',')) cfg.methods.push_back(ee::method_from_name(name));
    }
    get_u("knn.k", cfg.knn.k);
    get_d("knn.p", cfg.knn.minkowski_p);
    get_u("rf.trees", cfg.rf_trees);
    get_u("rf.max_depth", cfg.rf_tree.max_depth);
    get_u("rf.min_samples_split", cfg.rf_tree.min_samples_split);
    get_u("rf.min_samples_leaf", cfg.rf_tree.min_samples_leaf);
    get_u("rf.features_per_split", cfg.rf_tree.features_per_split);
    get_u("gbt.rounds", cfg.gbt.rounds);
    get_d("gbt.eta", cfg.gbt.shrinkage);
    get_u("gbt.max_depth", cfg.gbt.tree.max_depth);
    get_d("gbt.subsample", cfg.gbt.row_subsample);
    get_d("gbt.colsample", cfg.gbt.col_subsample);
    get_u("nn.epochs", cfg.nn.epochs);
    get_u("nn.batch", cfg.nn.batch_size);
    get_u("nn.ensemble", cfg.nn.ensemble_size);
    get_d("nn.lr", cfg.nn.adam.lr);
    get_u("nn.hidden1", cfg.nn.net.hidden1);
    get_u("nn.hidden2", cfg.nn.net.hidden2);
    if (const auto* v = get("nn.seed")) cfg.nn.seed = std::stoull(*v);
    if (const auto* v = get("run.average_embeddings")) cfg.average_embeddings = (*v == "1");
    return cfg;
}

bool looks_like_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    char magic[8] = {};
    is.read(magic, sizeof magic);
    return is && std::string_view(magic, 8) == "EETABDS1";
}

Dataset load_data(const std::string& path, const ee::ColumnMap& map) {
    if (looks_like_cache(path)) return ee::load_cache(path);
    return ee::ingest_csv(path, map);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"entity-embedding tabular toolkit"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0 = default)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
    ee::SyntheticConfig scfg;
    std::string synth_out = "synthetic.csv";
    std::string truth_out;
    synth->add_option("--rows", scfg.rows, "row count");
    synth->add_option("--stores", scfg.stores, "store count");
    synth->add_option("--states", scfg.states, "state count");
    synth->add_option("--latent-dim", scfg.latent_dim, "latent store dimension");
    synth->add_option("--sigma", scfg.noise_sigma, "log-scale noise sigma");
    synth->add_option("--days", scfg.n_days, "calendar span in days");
    synth->add_option("--seed", scfg.seed, "seed");
    synth->add_option("--out", synth_out, "output CSV path");
    synth->add_option("--truth-out", truth_out, "optional ground-truth JSON path");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "ingest a CSV into a binary cache");
    std::string ingest_data, ingest_out = "dataset.cache";
    ee::ColumnMap cmap;
    bool no_promo = false, no_state = false;
    ingest->add_option("--data", ingest_data, "input CSV")->required();
    ingest->add_option("--out", ingest_out, "output cache path");
    ingest->add_option("--map-store", cmap.store, "store column name");
    ingest->add_option("--map-date", cmap.date, "date column name");
    ingest->add_option("--map-sales", cmap.sales, "sales column name");
    ingest->add_option("--map-promo", cmap.promo, "promo column name");
    ingest->add_option("--map-state", cmap.state, "state column name");
    ingest->add_flag("--no-promo", no_promo, "skip the promo column");
    ingest->add_flag("--no-state", no_state, "skip the state column");

    // train
    auto* train_cmd = app.add_subcommand("train", "train the embedding network ensemble");
    std::string train_data, train_out = "model.eens", train_config;
    long long train_seed = -1;
    std::string train_mode = "embed";
    train_cmd->add_option("--data", train_data, "dataset (CSV or cache)")->required();
    train_cmd->add_option("--out", train_out, "output model path");
    train_cmd->add_option("--config", train_config, "config file (nn section)");
    train_cmd->add_option("--seed", train_seed, "seed override");
    train_cmd->add_option("--mode", train_mode, "embed | one_hot | one_hot_extra_dense");

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "run the with/without-embedding comparison");
    std::string bench_data, bench_config, out_dir = ".";
    long long bench_seed = -1;
    bench->add_option("--data", bench_data, "dataset (CSV or cache)")->required();
    bench->add_option("--config", bench_config, "benchmark config file");
    bench->add_option("--seed", bench_seed, "seed override");
    bench->add_option("--out-dir", out_dir, "report directory");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "embedding-space analyses");
    std::string an_model, an_data, an_outdir = ".", an_flags, an_feature = "store";
    long long an_seed = -1;
    bool an_svg = false;
    ee::AnalysisConfig acfg;
    analyze->add_option("--model", an_model, "trained ensemble file")->required();
    analyze->add_option("--data", an_data, "dataset (CSV or cache)")->required();
    analyze->add_option("--flags", an_flags,
                        "comma list: tsne,scatter,pc-density,pc-sales,cross-corr,schoenberg");
    analyze->add_option("--feature", an_feature, "feature to analyze");
    analyze->add_option("--pairs", acfg.scatter_pairs, "scatter pair count");
    analyze->add_option("--complements", acfg.metric_complements, "metric complement samples");
    analyze->add_option("--perplexity", acfg.tsne.perplexity, "t-SNE perplexity");
    analyze->add_option("--out-dir", an_outdir, "output directory");
    analyze->add_option("--seed", an_seed, "seed override");
    analyze->add_flag("--svg", an_svg, "also render SVG scatters");
    analyze->add_flag("--sales-scale", acfg.metric_sales_scale,
                      "estimate the metric on the Sales scale");

    // export-embeddings
    auto* exp = app.add_subcommand("export-embeddings", "write per-feature embedding CSVs");
    std::string exp_model, exp_outdir = "embeddings";
    exp->add_option("--model", exp_model, "trained ensemble file")->required();
    exp->add_option("--out-dir", exp_outdir, "output directory");

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) ee::set_threads(threads);

    try {
        if (*synth) {
            const auto [data, truth] = ee::generate_synthetic(scfg);
            ee::write_csv(data, synth_out);
            std::cout << "wrote " << data.size() << " rows to " << synth_out << "\n";
            if (!truth_out.empty()) {
                nlohmann::json j;
                j["bayes_mape_floor"] = truth.bayes_mape_floor;
                j["noise_sigma"] = truth.cfg.noise_sigma;
                j["stores"] = truth.cfg.stores;
                j["latent_dim"] = truth.cfg.latent_dim;
                nlohmann::json lat = nlohmann::json::array();
                for (std::size_t s = 0; s < truth.store_latent.rows(); ++s) {
                    nlohmann::json row = nlohmann::json::array();
                    for (std::size_t k = 0; k < truth.store_latent.cols(); ++k)
                        row.push_back(truth.store_latent(s, k));
                    lat.push_back(row);
                }
                j["store_latent"] = lat;
                std::ofstream os(truth_out);
                os << j.dump(2) << "\n";
                std::cout << "wrote ground truth to " << truth_out << "\n";
            }
        } else if (*ingest) {
            if (no_promo) cmap.promo.clear();
            if (no_state) cmap.state.clear();
            const auto data = ee::ingest_csv(ingest_data, cmap);
            ee::save_cache(data, ingest_out);
            std::cout << "cached " << data.size() << " rows, "
                      << data.feature_count() << " features to " << ingest_out << "\n";
        } else if (*train_cmd) {
            ee::BenchmarkConfig bcfg;
            if (!train_config.empty()) bcfg = benchmark_config_from_ini(parse_ini(train_config));
            ee::TrainConfig tcfg = bcfg.nn;
            if (train_seed >= 0) tcfg.seed = static_cast<std::uint64_t>(train_seed);
            if (train_mode == "one_hot") tcfg.net.mode = ee::InputMode::one_hot;
            else if (train_mode == "one_hot_extra_dense")
                tcfg.net.mode = ee::InputMode::one_hot_extra_dense;
            else tcfg.net.mode = ee::InputMode::embed;

            const auto data = load_data(train_data, cmap);
            const auto transform = ee::fit_target_transform(data);
            const auto ensemble = ee::train_ensemble(tcfg, data, transform);
            ee::save_ensemble(ensemble, train_out);
            std::cout << "trained " << ensemble.members.size() << " network(s) on "
                      << data.size() << " rows; saved to " << train_out << "\n";
        } else if (*bench) {
            ee::BenchmarkConfig bcfg;
            if (!bench_config.empty()) bcfg = benchmark_config_from_ini(parse_ini(bench_config));
            if (bench_seed >= 0) {
                bcfg.seed = static_cast<std::uint64_t>(bench_seed);
                bcfg.nn.seed = bcfg.seed;
            }
            const auto data = load_data(bench_data, cmap);
            const auto report = ee::run_benchmark(bcfg, data);
            std::filesystem::create_directories(out_dir);
            const std::string jpath = out_dir + "/report.json";
            ee::write_report_json(report, jpath);
            const std::string table = ee::render_report_table(report);
            std::ofstream ts(out_dir + "/report.txt");
            ts << table;
            std::cout << table << "report written to " << jpath << "\n";
        } else if (*analyze) {
            acfg.feature = an_feature;
            if (an_seed >= 0) acfg.seed = static_cast<std::uint64_t>(an_seed);
            acfg.svg = an_svg;
            std::stringstream ss(an_flags);
            std::string flag;
            while (std::getline(ss, flag, ','))
                if (!flag.empty()) acfg.flags.insert(flag);
            const auto model = ee::load_ensemble(an_model);
            const auto data = load_data(an_data, cmap);
            const auto written = ee::run_analysis(model, data, acfg, an_outdir);
            for (const auto& p : written) std::cout << "wrote " << p << "\n";
        } else if (*exp) {
            const auto model = ee::load_ensemble(exp_model);
            const auto written = ee::export_embeddings(model.members.front(), exp_outdir);
            for (const auto& p : written) std::cout << "wrote " << p << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
