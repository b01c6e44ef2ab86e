#pragma once

#include "eetab/dataset.hpp"
#include "eetab/geometry.hpp"
#include "eetab/knn.hpp"
#include "eetab/net.hpp"
#include "eetab/trees.hpp"
#include "eetab/tsne.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ee {

inline constexpr const char* kVersion = "eetab 0.1.0";

enum class Method { knn, random_forest, gbt, nn };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

// Table-style defaults: KNN k=10/p=1, RF 200 trees depth 35, GBT 3000 rounds
// eta 0.02 depth 10 subsample 0.7, NN 1000/500 with a 5-network ensemble.
struct BenchmarkConfig {
    SplitMode split_mode = SplitMode::shuffled;
    double test_fraction = 0.10;
    std::optional<std::size_t> sparsify_n; // e.g. 200000; unset = no sparsification
    std::vector<Method> methods = {Method::knn, Method::random_forest, Method::gbt, Method::nn};
    KnnConfig knn;
    TreeConfig rf_tree{35, 2, 1, 0, std::nullopt};
    std::size_t rf_trees = 200;
    BoostConfig gbt;
    TrainConfig nn;
    std::uint64_t seed = 0;
    bool average_embeddings = false; // default: first ensemble member's embeddings
};

struct BenchmarkReport {
    std::vector<EvalReport> results; // two entries per method: without / with EE
    std::string config_echo;
    std::string version;
    std::string timestamp; // excluded from determinism comparisons
    double total_runtime_sec = 0.0;
};

std::string config_echo(const BenchmarkConfig& cfg);

// Protocol: split -> optional sparsify -> train the embed-mode ensemble on the
// training split only -> evaluate every requested method on its native
// representation and on the embedded features; MAPE on the Sales scale.
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const Dataset& data);

// Same run, but also hands back the embeddings the baselines consumed
// (supports the no-leakage property checks).
struct BenchmarkArtifacts {
    BenchmarkReport report;
    std::vector<EmbeddingMatrix> embeddings;
};
BenchmarkArtifacts run_benchmark_full(const BenchmarkConfig& cfg, const Dataset& data);

// Embeddings the baselines consume (first member or averaged, per config).
std::vector<EmbeddingMatrix> benchmark_embeddings(const Ensemble& ensemble,
                                                  bool average_members);

void write_report_json(const BenchmarkReport& r, const std::string& path);
std::string render_report_table(const BenchmarkReport& r);

struct AnalysisConfig {
    std::string feature = "store";
    std::set<std::string> flags; // tsne scatter pc-density pc-sales cross-corr schoenberg
    std::size_t scatter_pairs = 10000;
    std::size_t metric_complements = 1000;
    bool metric_sales_scale = false;
    std::vector<double> lambdas = {0.1, 1.0, 10.0};
    std::size_t pc_top_k = 4;
    std::size_t density_bins = 30;
    TsneConfig tsne; // perplexity dropped to 3 for fewer than 16 points
    std::uint64_t seed = 0;
    bool svg = false;
};

// Dispatches to the geometry analyses per flags; writes plot-data CSVs and a
// JSON summary into out_dir. Returns the written paths.
std::vector<std::string> run_analysis(const Ensemble& model, const Dataset& data,
                                      const AnalysisConfig& cfg, const std::string& out_dir);

// Batched transformed-scale evaluation backed by the ensemble mean.
BatchPredictFn ensemble_predictor(const Ensemble& e);

} // namespace ee
