#include "eetab/benchmark.hpp"
#include "eetab/pca.hpp"
#include "eetab/rng.hpp"
#include "eetab/stats.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ee {

namespace {

double now_sec() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string wall_timestamp() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

Matrix one_hot_matrix(const Dataset& d) {
    const auto& schema = d.schema();
    std::vector<std::size_t> off(schema.feature_count() + 1, 0);
    for (std::size_t f = 0; f < schema.feature_count(); ++f)
        off[f + 1] = off[f] + schema.features[f].cardinality;
    Matrix m(d.size(), off.back());
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(d.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (std::size_t f = 0; f < schema.feature_count(); ++f)
            m(i, off[f] + std::size_t(d.value(i, f))) = 1.0;
    }
    return m;
}

TreeData tree_data_from_codes(const Dataset& d, std::vector<double> targets) {
    TreeData td;
    td.columns.resize(d.feature_count());
    for (std::size_t f = 0; f < d.feature_count(); ++f) {
        td.columns[f].resize(d.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            td.columns[f][i] = double(d.value(i, f));
    }
    td.targets = std::move(targets);
    return td;
}

TreeData tree_data_from_matrix(const Matrix& m, std::vector<double> targets) {
    TreeData td;
    td.columns.assign(m.cols(), std::vector<double>(m.rows()));
    for (std::size_t j = 0; j < m.cols(); ++j)
        for (std::size_t i = 0; i < m.rows(); ++i) td.columns[j][i] = m(i, j);
    td.targets = std::move(targets);
    return td;
}

std::vector<double> log_targets(const Dataset& d) {
    std::vector<double> t(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) t[i] = std::log(d.target(i));
    return t;
}

std::vector<double> tree_predict_rows(const TreeData& td,
                                      const std::function<double(std::span<const double>)>& f) {
    const std::size_t n = td.targets.size(), nf = td.feature_count();
    std::vector<double> out(n);
#pragma omp parallel
    {
        std::vector<double> x(nf);
#pragma omp for schedule(static)
        for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            for (std::size_t j = 0; j < nf; ++j) x[j] = td.columns[j][i];
            out[i] = f(x);
        }
    }
    return out;
}

std::vector<double> exp_all(std::vector<double> v) {
    for (double& x : v) x = std::exp(x);
    return v;
}

} // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::knn: return "knn";
        case Method::random_forest: return "random_forest";
        case Method::gbt: return "gbt";
        case Method::nn: return "nn";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "knn") return Method::knn;
    if (name == "random_forest" || name == "rf") return Method::random_forest;
    if (name == "gbt") return Method::gbt;
    if (name == "nn") return Method::nn;
    throw std::invalid_argument("unknown method '" + name + "'");
}

std::string config_echo(const BenchmarkConfig& cfg) {
    std::ostringstream os;
    os << "split_mode=" << (cfg.split_mode == SplitMode::temporal ? "temporal" : "shuffled")
       << "\ntest_fraction=" << cfg.test_fraction << "\nsparsify="
       << (cfg.sparsify_n ? std::to_string(*cfg.sparsify_n) : std::string("none"))
       << "\nseed=" << cfg.seed << "\nmethods=";
    for (std::size_t i = 0; i < cfg.methods.size(); ++i)
        os << (i ? "," : "") << method_name(cfg.methods[i]);
    os << "\nknn.k=" << cfg.knn.k << "\nknn.p=" << cfg.knn.minkowski_p
       << "\nrf.trees=" << cfg.rf_trees << "\nrf.max_depth=" << cfg.rf_tree.max_depth
       << "\nrf.min_samples_split=" << cfg.rf_tree.min_samples_split
       << "\nrf.min_samples_leaf=" << cfg.rf_tree.min_samples_leaf
       << "\ngbt.rounds=" << cfg.gbt.rounds << "\ngbt.eta=" << cfg.gbt.shrinkage
       << "\ngbt.max_depth=" << cfg.gbt.tree.max_depth
       << "\ngbt.subsample=" << cfg.gbt.row_subsample
       << "\ngbt.colsample=" << cfg.gbt.col_subsample << "\nnn.epochs=" << cfg.nn.epochs
       << "\nnn.batch=" << cfg.nn.batch_size << "\nnn.ensemble=" << cfg.nn.ensemble_size
       << "\nnn.seed=" << cfg.nn.seed << "\nnn.lr=" << cfg.nn.adam.lr
       << "\nnn.hidden1=" << cfg.nn.net.hidden1 << "\nnn.hidden2=" << cfg.nn.net.hidden2
       << "\naverage_embeddings=" << (cfg.average_embeddings ? 1 : 0) << "\n";
    return os.str();
}

std::vector<EmbeddingMatrix> benchmark_embeddings(const Ensemble& ensemble,
                                                  bool average_members) {
    if (ensemble.members.empty()) throw std::invalid_argument("empty ensemble");
    auto embs = extract_embeddings(ensemble.members.front());
    if (!average_members) return embs;
    for (std::size_t k = 1; k < ensemble.members.size(); ++k) {
        const auto other = extract_embeddings(ensemble.members[k]);
        for (std::size_t f = 0; f < embs.size(); ++f)
            for (std::size_t i = 0; i < embs[f].w.size(); ++i)
                embs[f].w.data()[i] += other[f].w.data()[i];
    }
    const double inv = 1.0 / double(ensemble.members.size());
    for (auto& e : embs)
        for (std::size_t i = 0; i < e.w.size(); ++i) e.w.data()[i] *= inv;
    return embs;
}

BatchPredictFn ensemble_predictor(const Ensemble& e) {
    return [&e](std::span<const std::int32_t> xs, std::size_t rows, std::span<double> out) {
        if (out.size() < rows) throw std::invalid_argument("ensemble_predictor: out too small");
        std::fill(out.begin(), out.begin() + rows, 0.0);
        ForwardCache c;
        for (const auto& m : e.members) {
            forward_batch(m, xs, rows, c);
            for (std::size_t i = 0; i < rows; ++i) out[i] += c.pred[i];
        }
        const double inv = 1.0 / double(e.members.size());
        for (std::size_t i = 0; i < rows; ++i) out[i] *= inv;
    };
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const Dataset& data) {
    return run_benchmark_full(cfg, data).report;
}

BenchmarkArtifacts run_benchmark_full(const BenchmarkConfig& cfg, const Dataset& data) {
    const double t0 = now_sec();
    BenchmarkReport report;
    report.config_echo = config_echo(cfg);
    report.version = kVersion;
    report.timestamp = wall_timestamp();

    const auto run_step = [](const char* step, auto&& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("benchmark step '") + step +
                                     "' failed: " + e.what());
        }
    };

    auto [train_set, test_set] = run_step("split", [&] {
        return split(data, cfg.split_mode, cfg.test_fraction, cfg.seed);
    });
    if (cfg.sparsify_n)
        train_set = run_step("sparsify",
                             [&] { return sparsify(train_set, *cfg.sparsify_n, cfg.seed + 1); });

    const TargetTransform transform =
        run_step("target_transform", [&] { return fit_target_transform(train_set); });

    const bool need_embed_nn = true; // embeddings feed every with-EE evaluation
    Ensemble embed_ensemble;
    double nn_embed_train_time = 0.0;
    if (need_embed_nn) {
        const double t = now_sec();
        TrainConfig nn_cfg = cfg.nn;
        nn_cfg.net.mode = InputMode::embed;
        embed_ensemble =
            run_step("train_nn_embed", [&] { return train_ensemble(nn_cfg, train_set, transform); });
        nn_embed_train_time = now_sec() - t;
    }
    const auto embs = benchmark_embeddings(embed_ensemble, cfg.average_embeddings);

    const auto test_actual = std::vector<double>(test_set.targets().begin(),
                                                 test_set.targets().end());
    const auto ytr_log = log_targets(train_set);

    // Feature representations, built lazily.
    Matrix onehot_train, onehot_test, embedded_train, embedded_test;
    const auto ensure_onehot = [&] {
        if (onehot_train.rows() == 0) {
            onehot_train = one_hot_matrix(train_set);
            onehot_test = one_hot_matrix(test_set);
        }
    };
    const auto ensure_embedded = [&] {
        if (embedded_train.rows() == 0) {
            embedded_train = embed_dataset(train_set, embs);
            embedded_test = embed_dataset(test_set, embs);
        }
    };

    const auto push_result = [&](Method m, bool with_ee, double mape_value, double runtime) {
        EvalReport r;
        r.method = method_name(m);
        r.mape = mape_value;
        r.with_embeddings = with_ee;
        r.split_mode = cfg.split_mode;
        r.seed = static_cast<std::int64_t>(cfg.seed);
        r.runtime_sec = runtime;
        report.results.push_back(std::move(r));
    };

    for (const Method m : cfg.methods) {
        switch (m) {
            case Method::knn: {
                double t = now_sec();
                run_step("knn", [&] {
                    ensure_onehot();
                    const auto model = fit_knn(onehot_train, ytr_log, cfg.knn);
                    const auto pred = exp_all(predict_knn(model, onehot_test));
                    push_result(m, false, mape(pred, test_actual), now_sec() - t);
                    return 0;
                });
                t = now_sec();
                run_step("knn_ee", [&] {
                    ensure_embedded();
                    const auto model = fit_knn(embedded_train, ytr_log, cfg.knn);
                    const auto pred = exp_all(predict_knn(model, embedded_test));
                    push_result(m, true, mape(pred, test_actual), now_sec() - t);
                    return 0;
                });
                break;
            }
            case Method::random_forest: {
                double t = now_sec();
                run_step("random_forest", [&] {
                    const auto td = tree_data_from_codes(train_set, ytr_log);
                    const auto f = fit_random_forest(td, cfg.rf_tree, cfg.rf_trees, cfg.seed);
                    auto tq = tree_data_from_codes(test_set, std::vector<double>(test_set.size()));
                    const auto pred = exp_all(tree_predict_rows(
                        tq, [&](std::span<const double> x) { return predict_forest(f, x); }));
                    push_result(m, false, mape(pred, test_actual), now_sec() - t);
                    return 0;
                });
                t = now_sec();
                run_step("random_forest_ee", [&] {
                    ensure_embedded();
                    const auto td = tree_data_from_matrix(embedded_train, ytr_log);
                    const auto f = fit_random_forest(td, cfg.rf_tree, cfg.rf_trees, cfg.seed);
                    auto tq = tree_data_from_matrix(embedded_test,
                                                    std::vector<double>(test_set.size()));
                    const auto pred = exp_all(tree_predict_rows(
                        tq, [&](std::span<const double> x) { return predict_forest(f, x); }));
                    push_result(m, true, mape(pred, test_actual), now_sec() - t);
                    return 0;
                });
                break;
            }
            case Method::gbt: {
                double t = now_sec();
                run_step("gbt", [&] {
                    const auto td = tree_data_from_codes(train_set, ytr_log);
                    const auto model = fit_gbt(td, cfg.gbt, cfg.seed);
                    auto tq = tree_data_from_codes(test_set, std::vector<double>(test_set.size()));
                    const auto pred = exp_all(tree_predict_rows(
                        tq, [&](std::span<const double> x) { return predict_gbt(model, x); }));
                    push_result(m, false, mape(pred, test_actual), now_sec() - t);
                    return 0;
                });
                t = now_sec();
                run_step("gbt_ee", [&] {
                    ensure_embedded();
                    const auto td = tree_data_from_matrix(embedded_train, ytr_log);
                    const auto model = fit_gbt(td, cfg.gbt, cfg.seed);
                    auto tq = tree_data_from_matrix(embedded_test,
                                                    std::vector<double>(test_set.size()));
                    const auto pred = exp_all(tree_predict_rows(
                        tq, [&](std::span<const double> x) { return predict_gbt(model, x); }));
                    push_result(m, true, mape(pred, test_actual), now_sec() - t);
                    return 0;
                });
                break;
            }
            case Method::nn: {
                double t = now_sec();
                run_step("nn_one_hot", [&] {
                    TrainConfig oh = cfg.nn;
                    oh.net.mode = InputMode::one_hot;
                    const auto ens = train_ensemble(oh, train_set, transform);
                    const auto pred = ens.predict_sales(test_set);
                    push_result(m, false, mape(pred, test_actual), now_sec() - t);
                    return 0;
                });
                run_step("nn_embed", [&] {
                    const auto pred = embed_ensemble.predict_sales(test_set);
                    push_result(m, true, mape(pred, test_actual), nn_embed_train_time);
                    return 0;
                });
                break;
            }
        }
    }

    report.total_runtime_sec = now_sec() - t0;
    for (const auto& r : report.results)
        if (!std::isfinite(r.mape))
            throw std::runtime_error("benchmark: non-finite MAPE for " + r.method);
    return {std::move(report), embs};
}

void write_report_json(const BenchmarkReport& r, const std::string& path) {
    nlohmann::json j;
    j["version"] = r.version;
    j["timestamp"] = r.timestamp;
    j["total_runtime_sec"] = r.total_runtime_sec;
    j["config"] = r.config_echo;
    j["results"] = nlohmann::json::array();
    for (const auto& e : r.results)
        j["results"].push_back(
            {{"method", e.method},
             {"with_embeddings", e.with_embeddings},
             {"mape", e.mape},
             {"split_mode", e.split_mode == SplitMode::temporal ? "temporal" : "shuffled"},
             {"seed", e.seed},
             {"runtime_sec", e.runtime_sec}});
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_report_json: cannot open " + path);
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("write_report_json: write failed for " + path);
}

std::string render_report_table(const BenchmarkReport& r) {
    std::ostringstream os;
    os << "method                 MAPE     MAPE (with EE)\n";
    os << "---------------------------------------------\n";
    for (std::size_t i = 0; i < r.results.size(); ++i) {
        const auto& e = r.results[i];
        if (e.with_embeddings) continue;
        double with_ee = NAN;
        for (const auto& o : r.results)
            if (o.method == e.method && o.with_embeddings) with_ee = o.mape;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-20s %8.4f %12.4f\n", e.method.c_str(), e.mape,
                      with_ee);
        os << buf;
    }
    return os.str();
}

namespace {

std::string csv_path(const std::string& dir, const std::string& name) {
    return dir + "/" + name;
}

} // namespace

std::vector<std::string> run_analysis(const Ensemble& model, const Dataset& data,
                                      const AnalysisConfig& cfg, const std::string& out_dir) {
    if (model.members.empty() || model.members.front().cfg.mode != InputMode::embed)
        throw std::invalid_argument("run_analysis: needs a trained embed-mode model");
    std::filesystem::create_directories(out_dir);

    const auto& schema = model.members.front().schema;
    const auto fi = schema.feature_index(cfg.feature);
    if (!fi) throw std::invalid_argument("run_analysis: unknown feature '" + cfg.feature + "'");
    const auto embs = extract_embeddings(model.members.front());
    const Matrix& feat_emb = embs[*fi].w;

    std::vector<std::string> written;
    nlohmann::json summary;
    summary["feature"] = cfg.feature;
    summary["version"] = kVersion;

    const auto run_flag = [&](const char* flag, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("analysis flag '") + flag +
                                     "' failed: " + e.what());
        }
    };

    // The metric is shared by the scatter and Schoenberg analyses.
    std::optional<CategoryMetric> metric;
    const auto ensure_metric = [&] {
        if (metric) return;
        BatchPredictFn f = ensemble_predictor(model);
        if (cfg.metric_sales_scale) {
            const TargetTransform tf = model.transform;
            BatchPredictFn base = std::move(f);
            f = [base, tf](std::span<const std::int32_t> xs, std::size_t rows,
                           std::span<double> out) {
                base(xs, rows, out);
                for (std::size_t i = 0; i < rows; ++i) out[i] = tf.inverse(out[i]);
            };
        }
        metric = estimate_metric(f, data, *fi, cfg.metric_complements, cfg.seed);
    };

    if (cfg.flags.count("tsne")) run_flag("tsne", [&] {
        TsneConfig tc = cfg.tsne;
        tc.seed = cfg.seed;
        if (feat_emb.rows() < 16) tc.perplexity = std::min(tc.perplexity, 3.0);
        const auto res = tsne(feat_emb, tc);
        const std::string path = csv_path(out_dir, "tsne_" + cfg.feature + ".csv");
        std::ofstream os(path);
        os << "x,y,label\n";
        for (std::size_t i = 0; i < res.y.rows(); ++i)
            os << res.y(i, 0) << ',' << res.y(i, 1) << ','
               << schema.features[*fi].labels[i] << "\n";
        if (!os) throw std::runtime_error("cannot write " + path);
        written.push_back(path);
        summary["tsne"] = {{"points", res.y.rows()}, {"final_kl", res.kl_trace.back()}};
        if (cfg.svg) {
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < res.y.rows(); ++i)
                pts.emplace_back(res.y(i, 0), res.y(i, 1));
            const std::string svg = csv_path(out_dir, "tsne_" + cfg.feature + ".svg");
            write_svg_scatter(pts, svg);
            written.push_back(svg);
        }
    });

    if (cfg.flags.count("scatter")) run_flag("scatter", [&] {
        ensure_metric();
        const auto pts =
            embedding_metric_scatter(embs[*fi], *metric, cfg.scatter_pairs, cfg.seed);
        const std::string path = csv_path(out_dir, "scatter_" + cfg.feature + ".csv");
        std::ofstream os(path);
        os << "pair_id,emb_dist,metric_dist\n";
        for (std::size_t i = 0; i < pts.size(); ++i)
            os << i << ',' << pts[i].emb_dist << ',' << pts[i].metric_dist << "\n";
        if (!os) throw std::runtime_error("cannot write " + path);
        written.push_back(path);
        summary["scatter"] = {{"pairs", pts.size()}};
        if (cfg.svg) {
            std::vector<std::pair<double, double>> xy;
            for (const auto& p : pts) xy.emplace_back(p.emb_dist, p.metric_dist);
            const std::string svg = csv_path(out_dir, "scatter_" + cfg.feature + ".svg");
            write_svg_scatter(xy, svg);
            written.push_back(svg);
        }
    });

    if (cfg.flags.count("pc-sales")) run_flag("pc-sales", [&] {
        // Mean sales per category of the analyzed feature.
        std::vector<double> mean_sales(feat_emb.rows(), 0.0);
        std::vector<std::size_t> counts(feat_emb.rows(), 0);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto v = static_cast<std::size_t>(data.value(i, *fi));
            mean_sales[v] += data.target(i);
            ++counts[v];
        }
        for (std::size_t v = 0; v < mean_sales.size(); ++v)
            if (counts[v] > 0) mean_sales[v] /= double(counts[v]);

        const PcaResult p = pca(feat_emb);
        const std::string path = csv_path(out_dir, "pc_sales_" + cfg.feature + ".csv");
        std::ofstream os(path);
        os << "component,projection,mean_sales\n";
        const auto emit = [&](const std::string& name, std::span<const double> dir) {
            const auto pairs = sales_along_direction(feat_emb, dir, mean_sales);
            for (const auto& [proj, sales] : pairs)
                os << name << ',' << proj << ',' << sales << "\n";
        };
        std::vector<double> dir(feat_emb.cols());
        for (std::size_t c = 0; c < std::min<std::size_t>(2, feat_emb.cols()); ++c) {
            for (std::size_t b = 0; b < dir.size(); ++b) dir[b] = p.components(b, c);
            emit("pc" + std::to_string(c), dir);
        }
        Rng rng(cfg.seed);
        for (std::size_t r = 0; r < 2; ++r) {
            for (double& v : dir) v = rng.normal();
            emit("rand" + std::to_string(r), dir);
        }
        if (!os) throw std::runtime_error("cannot write " + path);
        written.push_back(path);
        summary["pc_sales"] = {{"categories", feat_emb.rows()}};
    });

    if (cfg.flags.count("pc-density")) run_flag("pc-density", [&] {
        const std::size_t top_k = std::min(cfg.pc_top_k, feat_emb.cols());
        const auto dens = pc_density_report(feat_emb, top_k, cfg.density_bins);
        const std::string path = csv_path(out_dir, "pc_density_" + cfg.feature + ".csv");
        std::ofstream os(path);
        os << "component,bin_lo,bin_hi,mass\n";
        nlohmann::json jd = nlohmann::json::array();
        for (const auto& d : dens) {
            for (std::size_t b = 0; b < d.bin_mass.size(); ++b)
                os << d.component << ',' << d.bin_edges[b] << ',' << d.bin_edges[b + 1] << ','
                   << d.bin_mass[b] << "\n";
            jd.push_back({{"component", d.component},
                          {"mu", d.mu},
                          {"sigma", d.sigma},
                          {"k2_statistic", d.k2.statistic},
                          {"k2_p_value", d.k2.p_value}});
        }
        if (!os) throw std::runtime_error("cannot write " + path);
        written.push_back(path);
        summary["pc_density"] = jd;
        if (top_k >= 2 && feat_emb.rows() > top_k) {
            const PcaResult p = pca(feat_emb);
            const Matrix proj = p.project(feat_emb, top_k);
            const auto [skew, kurt] = mardia(proj);
            summary["mardia"] = {{"skew_statistic", skew.statistic},
                                 {"skew_p_value", skew.p_value},
                                 {"kurtosis_statistic", kurt.statistic},
                                 {"kurtosis_p_value", kurt.p_value}};
        }
    });

    if (cfg.flags.count("cross-corr")) run_flag("cross-corr", [&] {
        const auto rep = cross_subspace_correlation(embs, data);
        const std::string path = csv_path(out_dir, "crosscorr.csv");
        std::ofstream os(path);
        os << "feature_a,feature_b,canonical_correlation\n";
        for (const auto& p : rep.pairs)
            os << schema.features[p.feature_a].name << ','
               << schema.features[p.feature_b].name << ',' << p.max_canonical_correlation
               << "\n";
        if (!os) throw std::runtime_error("cannot write " + path);
        written.push_back(path);
        summary["cross_corr_max"] = rep.max_abs;
    });

    if (cfg.flags.count("schoenberg")) run_flag("schoenberg", [&] {
        ensure_metric();
        nlohmann::json js = nlohmann::json::array();
        for (const double lambda : cfg.lambdas) {
            const auto check = schoenberg_check(*metric, lambda);
            js.push_back({{"lambda", lambda},
                          {"min_eigenvalue", check.min_eigenvalue},
                          {"positive_definite", check.is_positive_definite}});
        }
        summary["schoenberg"] = js;
    });

    const std::string spath = csv_path(out_dir, "summary.json");
    std::ofstream ss(spath);
    ss << summary.dump(2) << "\n";
    if (!ss) throw std::runtime_error("run_analysis: cannot write " + spath);
    written.push_back(spath);
    return written;
}

} // namespace ee
