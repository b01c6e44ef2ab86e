#include "oracles.hpp"

#include "eetab/eigen_sym.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

std::optional<ee::SplitChoice> brute_force_split(const ee::TreeData& data,
                                                 std::span<const std::size_t> rows,
                                                 std::span<const std::size_t> features,
                                                 std::size_t min_samples_leaf) {
    const auto sse_of = [](const std::vector<double>& ys) {
        if (ys.empty()) return 0.0;
        double mean = 0.0;
        for (const double y : ys) mean += y;
        mean /= double(ys.size());
        double s = 0.0;
        for (const double y : ys) s += (y - mean) * (y - mean);
        return s;
    };

    std::vector<double> parent;
    for (const std::size_t r : rows) parent.push_back(data.targets[r]);
    const double sse_parent = sse_of(parent);

    std::vector<std::size_t> feats(features.begin(), features.end());
    std::sort(feats.begin(), feats.end());
    feats.erase(std::unique(feats.begin(), feats.end()), feats.end());

    std::optional<ee::SplitChoice> best;
    for (const std::size_t j : feats) {
        std::vector<double> values;
        for (const std::size_t r : rows) values.push_back(data.columns[j][r]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
            const double point = 0.5 * (values[v] + values[v + 1]);
            std::vector<double> ly, ry;
            for (const std::size_t r : rows)
                (data.columns[j][r] <= point ? ly : ry).push_back(data.targets[r]);
            if (ly.size() < min_samples_leaf || ry.size() < min_samples_leaf) continue;
            const double sse = sse_of(ly) + sse_of(ry);
            if (!best || sse < best->sse_after ||
                (sse == best->sse_after &&
                 (j < best->feature || (j == best->feature && point < best->point))))
                best = ee::SplitChoice{j, point, sse};
        }
    }
    if (!best) return std::nullopt;
    if (sse_parent - best->sse_after <= 1e-12 * (1.0 + sse_parent)) return std::nullopt;
    return best;
}

double char_poly_min_eigenvalue(const ee::Matrix& a) {
    const std::size_t n = a.rows();
    if (n == 0 || n > 6 || a.cols() != n)
        throw std::invalid_argument("char_poly_min_eigenvalue: need square n <= 6");

    // Faddeev-LeVerrier: p(x) = x^n + c[n-1] x^(n-1) + ... + c[0].
    std::vector<double> c(n + 1, 0.0);
    c[n] = 1.0;
    ee::Matrix m = ee::Matrix::identity(n);
    for (std::size_t k = 1; k <= n; ++k) {
        m = ee::matmul(a, m);
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i) tr += m(i, i);
        c[n - k] = -tr / double(k);
        for (std::size_t i = 0; i < n; ++i) m(i, i) += c[n - k];
    }

    const auto p_of = [&](double x) {
        double v = 0.0;
        for (std::size_t k = n + 1; k-- > 0;) v = v * x + c[k];
        return v;
    };

    // Gershgorin bracket, then scan upward to the first sign change.
    double lo = a(0, 0), hi = a(0, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double radius = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) radius += std::abs(a(i, j));
        lo = std::min(lo, a(i, i) - radius);
        hi = std::max(hi, a(i, i) + radius);
    }
    const double pad = 1e-6 * (1.0 + hi - lo);
    lo -= pad;
    hi += pad;

    const std::size_t grid = 400000;
    double x0 = lo, p0 = p_of(lo);
    for (std::size_t g = 1; g <= grid; ++g) {
        const double x1 = lo + (hi - lo) * double(g) / double(grid);
        const double p1 = p_of(x1);
        if (p0 == 0.0) return x0;
        if ((p0 < 0.0) != (p1 < 0.0)) {
            double a0 = x0, b0 = x1, pa = p0;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (a0 + b0);
                const double pm = p_of(mid);
                if ((pa < 0.0) == (pm < 0.0)) {
                    a0 = mid;
                    pa = pm;
                } else {
                    b0 = mid;
                }
            }
            return 0.5 * (a0 + b0);
        }
        x0 = x1;
        p0 = p1;
    }
    throw std::runtime_error("char_poly_min_eigenvalue: no sign change found");
}

namespace {

void node_sse_map(const ee::TreeNode* node, const ee::TreeData& data,
                  const std::vector<std::size_t>& rows,
                  std::vector<std::pair<const ee::TreeNode*, double>>& out) {
    double sum = 0.0, sq = 0.0;
    for (const std::size_t r : rows) {
        sum += data.targets[r];
        sq += data.targets[r] * data.targets[r];
    }
    const double sse =
        rows.empty() ? 0.0 : std::max(0.0, sq - sum * sum / double(rows.size()));
    out.emplace_back(node, sse);
    if (node->is_leaf()) return;
    std::vector<std::size_t> l, r;
    for (const std::size_t row : rows)
        (data.columns[std::size_t(node->split_feature)][row] <= node->split_point ? l : r)
            .push_back(row);
    node_sse_map(node->left.get(), data, l, out);
    node_sse_map(node->right.get(), data, r, out);
}

double sse_lookup(const std::vector<std::pair<const ee::TreeNode*, double>>& m,
                  const ee::TreeNode* node) {
    for (const auto& [n, s] : m)
        if (n == node) return s;
    throw std::logic_error("sse_lookup: node not found");
}

// Every pruned subtree rooted here, as (sse, leaves).
std::vector<std::pair<double, std::size_t>> subtree_options(
    const ee::TreeNode* node, const std::vector<std::pair<const ee::TreeNode*, double>>& sse) {
    std::vector<std::pair<double, std::size_t>> options;
    options.emplace_back(sse_lookup(sse, node), 1); // collapsed to a leaf
    if (!node->is_leaf()) {
        const auto lopt = subtree_options(node->left.get(), sse);
        const auto ropt = subtree_options(node->right.get(), sse);
        for (const auto& l : lopt)
            for (const auto& r : ropt)
                options.emplace_back(l.first + r.first, l.second + r.second);
    }
    return options;
}

} // namespace

double min_cost_complexity_by_enumeration(const ee::TreeNode& tree, double alpha,
                                          const ee::TreeData& data) {
    std::vector<std::pair<const ee::TreeNode*, double>> sse;
    std::vector<std::size_t> rows(data.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    node_sse_map(&tree, data, rows, sse);

    double best = 1e300;
    for (const auto& [s, leaves] : subtree_options(&tree, sse))
        best = std::min(best, s + alpha * double(leaves));
    return best;
}

double procrustes_correlation(const ee::Matrix& x, const ee::Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw std::invalid_argument("procrustes_correlation: shape mismatch");
    const std::size_t n = x.rows(), d = x.cols();

    const auto center = [&](const ee::Matrix& m) {
        ee::Matrix c = m;
        for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += m(i, j);
            mean /= double(n);
            for (std::size_t i = 0; i < n; ++i) c(i, j) -= mean;
        }
        return c;
    };
    const ee::Matrix cx = center(x), cy = center(y);

    ee::Matrix m(d, d); // cx^T cy
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) m(a, b) += cx(i, a) * cy(i, b);

    // Sum of singular values of m via eig(m^T m).
    const ee::Matrix mtm = ee::matmul(ee::transpose(m), m);
    const ee::SymEigen e = ee::sym_eigen(mtm);
    double trace_sigma = 0.0;
    for (const double v : e.values) trace_sigma += std::sqrt(std::max(0.0, v));

    return trace_sigma / (ee::frobenius_norm(cx) * ee::frobenius_norm(cy));
}

} // namespace oracle
