#pragma once

#include "eetab/dataset.hpp"
#include "eetab/matrix.hpp"
#include "eetab/net.hpp"
#include "eetab/stats.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ee {

// Batched model evaluation on the transformed-target (sigmoid) scale:
// fills out[i] for each of the `rows` integer-coded samples in xs.
using BatchPredictFn =
    std::function<void(std::span<const std::int32_t> xs, std::size_t rows, std::span<double> out)>;

// Empirical category metric of one feature: the average output gap between
// two categories over one shared, seeded set of complement configurations.
struct CategoryMetric {
    std::size_t feature = 0;
    Matrix dist; // m x m, symmetric, zero diagonal
    std::size_t complement_count = 0;
    std::uint64_t seed = 0;
};

CategoryMetric estimate_metric(const BatchPredictFn& f, const Dataset& data, std::size_t feature,
                               std::size_t complement_count, std::uint64_t seed);

struct MergeResult {
    CategoryMetric metric;
    std::vector<std::size_t> merge_map; // old category index -> new index
};

// Collapses categories at distance <= tol (connected components); afterwards
// every off-diagonal distance exceeds tol.
MergeResult merge_indiscernible(const CategoryMetric& metric, double tol);

struct SchoenbergCheck {
    double lambda = 1.0;
    Matrix kernel; // exp(-lambda * d)
    double min_eigenvalue = 0.0;
    bool is_positive_definite = false;
};

// Embeddability criterion: the metric embeds isometrically only if the
// exponential kernel is positive definite. Tolerance 1e-10 * m.
SchoenbergCheck schoenberg_check(const CategoryMetric& metric, double lambda);

struct ScatterPoint {
    std::size_t p = 0, q = 0;
    double emb_dist = 0.0;
    double metric_dist = 0.0;
};

// Seeded sample of distinct category pairs; Euclidean embedding distance vs
// metric distance. Requests beyond the number of distinct pairs are clipped.
std::vector<ScatterPoint> embedding_metric_scatter(const EmbeddingMatrix& emb,
                                                   const CategoryMetric& metric,
                                                   std::size_t pairs, std::uint64_t seed);

// (projection onto the normalized direction, mean sales of the category),
// sorted by projection.
std::vector<std::pair<double, double>> sales_along_direction(
    const Matrix& embeddings, std::span<const double> direction,
    std::span<const double> per_category_mean_sales);

struct PcComponentDensity {
    std::size_t component = 0;
    std::vector<double> projections;
    std::vector<double> bin_edges;  // bins+1 edges
    std::vector<double> bin_mass;   // sums to 1
    double mu = 0.0, sigma = 0.0;   // gaussian fit
    NormalityReport k2;
};

std::vector<PcComponentDensity> pc_density_report(const Matrix& embeddings, std::size_t top_k,
                                                  std::size_t bins = 30);

struct SubspaceCorrelation {
    std::size_t feature_a = 0, feature_b = 0;
    double max_canonical_correlation = 0.0;
};

struct CrossCorrelationReport {
    std::vector<SubspaceCorrelation> pairs;
    double max_abs = 0.0;
};

// First canonical correlation between the embedded coordinates of every
// feature pair over the dataset rows.
CrossCorrelationReport cross_subspace_correlation(const std::vector<EmbeddingMatrix>& embs,
                                                  const Dataset& data);

// Minimal SVG scatter output (no styling contract).
void write_svg_scatter(const std::vector<std::pair<double, double>>& points,
                       const std::string& path);

} // namespace ee
