#include "eetab/serial_ref.hpp"
#include "eetab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ee::ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("ref::matmul: shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t l = 0; l < a.cols(); ++l) {
            const double av = a(i, l);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += av * b(l, j);
        }
    return c;
}

namespace {

double minkowski(std::span<const double> a, std::span<const double> b, double p) {
    double s = 0.0;
    if (p == 1.0) {
        for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
        return s;
    }
    if (p == 2.0) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            s += d * d;
        }
        return std::sqrt(s);
    }
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), p);
    return std::pow(s, 1.0 / p);
}

} // namespace

double predict_knn_scan(const KnnModel& m, std::span<const double> x) {
    const std::size_t n = m.features.rows();
    std::vector<std::pair<double, std::size_t>> all(n);
    for (std::size_t i = 0; i < n; ++i)
        all[i] = {minkowski(m.features.row(i), x, m.cfg.minkowski_p), i};
    std::sort(all.begin(), all.end());
    all.resize(m.cfg.k);

    double zero_sum = 0.0;
    std::size_t zero_count = 0;
    for (const auto& [d, idx] : all)
        if (d == 0.0) {
            zero_sum += m.targets[idx];
            ++zero_count;
        }
    if (zero_count > 0) return zero_sum / double(zero_count);
    double num = 0.0, den = 0.0;
    for (const auto& [d, idx] : all) {
        num += m.targets[idx] / d;
        den += 1.0 / d;
    }
    return num / den;
}

std::vector<double> predict_knn_scan(const KnnModel& m, const Matrix& queries) {
    std::vector<double> out(queries.rows());
    for (std::size_t i = 0; i < queries.rows(); ++i)
        out[i] = predict_knn_scan(m, queries.row(i));
    return out;
}

CategoryMetric estimate_metric(const BatchPredictFn& f, const Dataset& data,
                               std::size_t feature, std::size_t complement_count,
                               std::uint64_t seed) {
    const std::size_t m = data.schema().features[feature].cardinality;
    Rng rng(seed);
    std::vector<std::size_t> complement_rows;
    if (complement_count <= data.size()) {
        complement_rows = rng.sample_without_replacement(data.size(), complement_count);
    } else {
        complement_rows.resize(complement_count);
        for (auto& r : complement_rows) r = static_cast<std::size_t>(rng.below(data.size()));
    }
    const std::size_t k = complement_rows.size();
    const std::size_t nf = data.feature_count();

    Matrix outputs(m, k);
    std::vector<std::int32_t> xs(k * nf);
    std::vector<double> out(k);
    for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t i = 0; i < k; ++i) {
            std::memcpy(xs.data() + i * nf, data.x(complement_rows[i]).data(),
                        nf * sizeof(std::int32_t));
            xs[i * nf + feature] = static_cast<std::int32_t>(p);
        }
        f(xs, k, out);
        for (std::size_t i = 0; i < k; ++i) outputs(p, i) = out[i];
    }

    CategoryMetric cm;
    cm.feature = feature;
    cm.complement_count = k;
    cm.seed = seed;
    cm.dist = Matrix(m, m);
    for (std::size_t p = 0; p < m; ++p)
        for (std::size_t q = p + 1; q < m; ++q) {
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i) s += std::abs(outputs(p, i) - outputs(q, i));
            cm.dist(p, q) = s / double(k);
            cm.dist(q, p) = cm.dist(p, q);
        }
    return cm;
}

std::optional<SplitChoice> best_split(const TreeData& data, std::span<const std::size_t> rows,
                                      std::span<const std::size_t> candidate_features,
                                      std::size_t min_samples_leaf) {
    if (rows.size() < 2 || candidate_features.empty()) return std::nullopt;
    std::vector<std::size_t> feats(candidate_features.begin(), candidate_features.end());
    std::sort(feats.begin(), feats.end());
    feats.erase(std::unique(feats.begin(), feats.end()), feats.end());

    const auto sse_of = [&](const std::vector<double>& ys) {
        double mean = 0.0;
        for (const double y : ys) mean += y;
        mean /= double(ys.size());
        double s = 0.0;
        for (const double y : ys) s += (y - mean) * (y - mean);
        return s;
    };

    std::vector<double> parent_y;
    for (const std::size_t r : rows) parent_y.push_back(data.targets[r]);
    const double sse_parent = sse_of(parent_y);

    std::optional<SplitChoice> best;
    for (const std::size_t j : feats) {
        std::vector<double> values;
        for (const std::size_t r : rows) values.push_back(data.columns[j][r]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
            const double s = 0.5 * (values[v] + values[v + 1]);
            std::vector<double> ly, ry;
            for (const std::size_t r : rows)
                (data.columns[j][r] <= s ? ly : ry).push_back(data.targets[r]);
            if (ly.size() < min_samples_leaf || ry.size() < min_samples_leaf) continue;
            const double sse = sse_of(ly) + sse_of(ry);
            if (!best || sse < best->sse_after ||
                (sse == best->sse_after &&
                 (j < best->feature || (j == best->feature && s < best->point))))
                best = SplitChoice{j, s, sse};
        }
    }
    if (!best) return std::nullopt;
    if (sse_parent - best->sse_after <= 1e-12 * (1.0 + sse_parent)) return std::nullopt;
    return best;
}

double mardia_skewness_pairwise(const Matrix& data) {
    const std::size_t n = data.rows(), p = data.cols();
    std::vector<double> mean(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) mean[j] += data(i, j);
    for (double& m : mean) m /= double(n);

    Matrix cov(p, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b)
                cov(a, b) += (data(i, a) - mean[a]) * (data(i, b) - mean[b]);
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) cov(a, b) /= double(n);

    // Gauss-Jordan inverse.
    Matrix inv = Matrix::identity(p);
    Matrix w = cov;
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::abs(w(r, c)) > std::abs(w(piv, c))) piv = r;
        if (std::abs(w(piv, c)) < 1e-300)
            throw std::invalid_argument("mardia_skewness_pairwise: singular covariance");
        if (piv != c)
            for (std::size_t k = 0; k < p; ++k) {
                std::swap(w(piv, k), w(c, k));
                std::swap(inv(piv, k), inv(c, k));
            }
        const double d = w(c, c);
        for (std::size_t k = 0; k < p; ++k) {
            w(c, k) /= d;
            inv(c, k) /= d;
        }
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c) continue;
            const double factor = w(r, c);
            for (std::size_t k = 0; k < p; ++k) {
                w(r, k) -= factor * w(c, k);
                inv(r, k) -= factor * inv(c, k);
            }
        }
    }

    double b1p = 0.0;
    std::vector<double> xi(p), sxj(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < p; ++a) xi[a] = data(i, a) - mean[a];
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t a = 0; a < p; ++a) {
                double s = 0.0;
                for (std::size_t b = 0; b < p; ++b) s += inv(a, b) * (data(j, b) - mean[b]);
                sxj[a] = s;
            }
            double dotv = 0.0;
            for (std::size_t a = 0; a < p; ++a) dotv += xi[a] * sxj[a];
            b1p += dotv * dotv * dotv;
        }
    }
    b1p /= double(n) * double(n);
    return double(n) * b1p / 6.0;
}

} // namespace ee::ref
