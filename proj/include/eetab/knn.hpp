#pragma once

#include "eetab/matrix.hpp"

#include <span>
#include <vector>

namespace ee {

struct KnnConfig {
    std::size_t k = 10;
    double minkowski_p = 1.0;
};

// Lazy learner: stores the training rows verbatim, in their original order
// (the tie rule at the k-th distance uses the original row index).
struct KnnModel {
    Matrix features;
    std::vector<double> targets;
    KnnConfig cfg;
};

KnnModel fit_knn(Matrix features, std::vector<double> targets, KnnConfig cfg);

// Inverse-distance weighted mean of the k nearest neighbors by Minkowski-p
// distance. Exact matches dominate: if any selected neighbor is at distance
// zero, the mean of the zero-distance targets is returned.
double predict_knn(const KnnModel& m, std::span<const double> x);

// Batch prediction, parallel over queries.
std::vector<double> predict_knn(const KnnModel& m, const Matrix& queries);

} // namespace ee
