#include "eetab/pca.hpp"
#include "eetab/eigen_sym.hpp"

#include <stdexcept>

namespace ee {

PcaResult pca(const Matrix& data) {
    const std::size_t n = data.rows(), d = data.cols();
    if (n < 2) throw std::invalid_argument("pca: need at least 2 rows");
    if (d < 1) throw std::invalid_argument("pca: need at least 1 column");

    PcaResult r;
    r.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) r.mean[j] += data(i, j);
    for (std::size_t j = 0; j < d; ++j) r.mean[j] /= static_cast<double>(n);

    Matrix cov(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = data(i, a) - r.mean[a];
            for (std::size_t b = a; b < d; ++b)
                cov(a, b) += xa * (data(i, b) - r.mean[b]);
        }
    }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            cov(a, b) /= static_cast<double>(n - 1);
            cov(b, a) = cov(a, b);
        }

    SymEigen e = sym_eigen(cov);
    for (double& v : e.values)
        if (v < 0.0) v = 0.0;
    r.components = std::move(e.vectors);
    r.eigenvalues = std::move(e.values);
    return r;
}

Matrix PcaResult::project(const Matrix& data, std::size_t k) const {
    if (data.cols() != mean.size()) throw std::invalid_argument("pca project: shape mismatch");
    if (k > components.cols()) throw std::invalid_argument("pca project: too many components");
    Matrix out(data.rows(), k);
    for (std::size_t i = 0; i < data.rows(); ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < data.cols(); ++a)
                s += (data(i, a) - mean[a]) * components(a, j);
            out(i, j) = s;
        }
    return out;
}

} // namespace ee
