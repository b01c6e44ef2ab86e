#pragma once

#include "eetab/matrix.hpp"

#include <vector>

namespace ee {

struct PcaResult {
    Matrix components;             // cols x cols, orthonormal columns, descending variance
    std::vector<double> eigenvalues; // nonincreasing, clamped at 0
    std::vector<double> mean;

    // (data - mean) * components, restricted to the first `k` components.
    Matrix project(const Matrix& data, std::size_t k) const;
};

// Eigen-decomposition of the sample covariance (divisor n-1) of mean-centered
// data. Rows are observations.
PcaResult pca(const Matrix& data);

} // namespace ee
