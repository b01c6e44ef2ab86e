#pragma once

#include "eetab/geometry.hpp"
#include "eetab/knn.hpp"
#include "eetab/matrix.hpp"
#include "eetab/trees.hpp"

#include <optional>
#include <span>

// Plain single-thread reference kernels. The OpenMP kernels in the library
// are checked against these in the test suite and timed against them by the
// bench_kernels target.
namespace ee::ref {

Matrix matmul(const Matrix& a, const Matrix& b);

// Full-scan nearest neighbors: every distance, one stable sort, same tie and
// zero-distance rules as the indexed path.
double predict_knn_scan(const KnnModel& m, std::span<const double> x);
std::vector<double> predict_knn_scan(const KnnModel& m, const Matrix& queries);

CategoryMetric estimate_metric(const BatchPredictFn& f, const Dataset& data,
                               std::size_t feature, std::size_t complement_count,
                               std::uint64_t seed);

std::optional<SplitChoice> best_split(const TreeData& data, std::span<const std::size_t> rows,
                                      std::span<const std::size_t> candidate_features,
                                      std::size_t min_samples_leaf = 1);

// Mardia skewness statistic from the O(n^2) pairwise definition.
double mardia_skewness_pairwise(const Matrix& data);

} // namespace ee::ref
