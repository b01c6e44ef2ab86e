#include "eetab/knn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ee {

KnnModel fit_knn(Matrix features, std::vector<double> targets, KnnConfig cfg) {
    if (features.rows() != targets.size())
        throw std::invalid_argument("fit_knn: feature/target count mismatch");
    if (cfg.k < 1) throw std::invalid_argument("fit_knn: k must be at least 1");
    if (cfg.k > targets.size()) throw std::invalid_argument("fit_knn: k exceeds training rows");
    if (!(cfg.minkowski_p > 0.0)) throw std::invalid_argument("fit_knn: p must be positive");
    return {std::move(features), std::move(targets), cfg};
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

double weighted_prediction(const KnnModel& m,
                           std::span<const std::pair<double, std::size_t>> nearest) {
    // Zero-distance rule first.
    double zero_sum = 0.0;
    std::size_t zero_count = 0;
    for (const auto& [d, idx] : nearest)
        if (d == 0.0) {
            zero_sum += m.targets[idx];
            ++zero_count;
        }
    if (zero_count > 0) return zero_sum / double(zero_count);

    double num = 0.0, den = 0.0;
    for (const auto& [d, idx] : nearest) {
        num += m.targets[idx] / d;
        den += 1.0 / d;
    }
    return num / den;
}

} // namespace

double predict_knn(const KnnModel& m, std::span<const double> x) {
    if (x.size() != m.features.cols()) throw std::invalid_argument("predict_knn: width mismatch");
    const std::size_t n = m.features.rows(), k = m.cfg.k;

    // Bounded max-heap over (distance, row index); lexicographic order keeps
    // the lowest-index rows on ties at the k-th distance.
    std::vector<std::pair<double, std::size_t>> heap;
    heap.reserve(k);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = minkowski(m.features.row(i), x, m.cfg.minkowski_p);
        const std::pair<double, std::size_t> cand{d, i};
        if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
        }
    }
    // Canonical neighbor order so the weighted sum does not depend on how the
    // selection was done.
    std::sort(heap.begin(), heap.end());
    return weighted_prediction(m, heap);
}

std::vector<double> predict_knn(const KnnModel& m, const Matrix& queries) {
    std::vector<double> out(queries.rows());
#pragma omp parallel for schedule(dynamic, 16)
    for (long long i = 0; i < static_cast<long long>(queries.rows()); ++i)
        out[static_cast<std::size_t>(i)] = predict_knn(m, queries.row(static_cast<std::size_t>(i)));
    return out;
}

} // namespace ee
