#pragma once

#include "eetab/matrix.hpp"

#include <vector>

namespace ee {

struct SymEigen {
    std::vector<double> values; // descending
    Matrix vectors;             // column j pairs with values[j]
};

// Cyclic Jacobi eigensolver for symmetric matrices. Sweeps until the
// off-diagonal Frobenius norm falls below 1e-12 relative to ||A||_F.
// Throws if the input is not symmetric within `symmetry_tol`.
SymEigen sym_eigen(const Matrix& a, double symmetry_tol = 1e-9);

double min_eigenvalue(const Matrix& a, double symmetry_tol = 1e-9);

} // namespace ee
