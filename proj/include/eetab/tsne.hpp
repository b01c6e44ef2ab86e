#pragma once

#include "eetab/matrix.hpp"

#include <cstdint>
#include <vector>

namespace ee {

struct TsneConfig {
    double perplexity = 5.0;
    std::size_t iterations = 1000;
    double learning_rate = 10.0;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iters = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    std::uint64_t seed = 0;
};

struct TsneResult {
    Matrix y;                     // n x 2
    std::vector<double> kl_trace; // KL divergence per iteration (plain P)
};

// Exact (non-approximated) t-SNE to 2D: per-point bandwidths matched to the
// perplexity by binary search, symmetrized affinities, gradient descent with
// momentum and early exaggeration. Deterministic under the seed.
TsneResult tsne(const Matrix& points, const TsneConfig& cfg);

} // namespace ee
