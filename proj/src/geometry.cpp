#include "eetab/geometry.hpp"
#include "eetab/eigen_sym.hpp"
#include "eetab/pca.hpp"
#include "eetab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ee {

CategoryMetric estimate_metric(const BatchPredictFn& f, const Dataset& data, std::size_t feature,
                               std::size_t complement_count, std::uint64_t seed) {
    if (feature >= data.feature_count()) throw std::invalid_argument("estimate_metric: feature");
    const std::size_t m = data.schema().features[feature].cardinality;
    if (m < 2) throw std::invalid_argument("estimate_metric: feature needs at least 2 values");
    if (complement_count < 1) throw std::invalid_argument("estimate_metric: K must be >= 1");
    if (data.size() == 0) throw std::invalid_argument("estimate_metric: empty data");

    // One shared set of complement rows for every pair; this is what makes
    // the triangle inequality hold for the estimate.
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
    std::vector<std::int32_t> base(k * nf);
    for (std::size_t i = 0; i < k; ++i)
        std::memcpy(base.data() + i * nf, data.x(complement_rows[i]).data(),
                    nf * sizeof(std::int32_t));

    // outputs(p, k): model output with feature := p on complement row k
    Matrix outputs(m, k);
    std::vector<std::int32_t> xs = base;
    std::vector<double> out(k);
    for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t i = 0; i < k; ++i)
            xs[i * nf + feature] = static_cast<std::int32_t>(p);
        f(xs, k, out);
        std::memcpy(outputs.data() + p * k, out.data(), k * sizeof(double));
    }

    CategoryMetric cm;
    cm.feature = feature;
    cm.complement_count = k;
    cm.seed = seed;
    cm.dist = Matrix(m, m);
#pragma omp parallel for schedule(dynamic)
    for (long long pi = 0; pi < static_cast<long long>(m); ++pi) {
        const auto p = static_cast<std::size_t>(pi);
        for (std::size_t q = p + 1; q < m; ++q) {
            const double* op = outputs.data() + p * k;
            const double* oq = outputs.data() + q * k;
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i) s += std::abs(op[i] - oq[i]);
            const double d = s / double(k);
            cm.dist(p, q) = d;
            cm.dist(q, p) = d;
        }
    }
    return cm;
}

MergeResult merge_indiscernible(const CategoryMetric& metric, double tol) {
    const std::size_t m = metric.dist.rows();
    std::vector<std::size_t> parent(m);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const std::function<std::size_t(std::size_t)> find = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t p = 0; p < m; ++p)
        for (std::size_t q = p + 1; q < m; ++q)
            if (metric.dist(p, q) <= tol) {
                const auto rp = find(p), rq = find(q);
                if (rp != rq) parent[std::max(rp, rq)] = std::min(rp, rq);
            }

    // Component representatives keep their relative order.
    std::vector<std::size_t> reps;
    std::vector<std::size_t> new_index(m);
    for (std::size_t p = 0; p < m; ++p)
        if (find(p) == p) {
            new_index[p] = reps.size();
            reps.push_back(p);
        }
    MergeResult res;
    res.merge_map.resize(m);
    for (std::size_t p = 0; p < m; ++p) res.merge_map[p] = new_index[find(p)];

    res.metric.feature = metric.feature;
    res.metric.complement_count = metric.complement_count;
    res.metric.seed = metric.seed;
    res.metric.dist = Matrix(reps.size(), reps.size());
    for (std::size_t a = 0; a < reps.size(); ++a)
        for (std::size_t b = 0; b < reps.size(); ++b)
            res.metric.dist(a, b) = metric.dist(reps[a], reps[b]);
    return res;
}

SchoenbergCheck schoenberg_check(const CategoryMetric& metric, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("schoenberg_check: lambda must be positive");
    const std::size_t m = metric.dist.rows();
    SchoenbergCheck c;
    c.lambda = lambda;
    c.kernel = Matrix(m, m);
    for (std::size_t p = 0; p < m; ++p)
        for (std::size_t q = 0; q < m; ++q)
            c.kernel(p, q) = std::exp(-lambda * metric.dist(p, q));
    c.min_eigenvalue = min_eigenvalue(c.kernel);
    c.is_positive_definite = c.min_eigenvalue > 1e-10 * double(m);
    return c;
}

namespace {

// Unrank a pair index in [0, m*(m-1)/2) to (p, q) with p < q.
std::pair<std::size_t, std::size_t> unrank_pair(std::size_t idx, std::size_t m) {
    // Row p owns (m-1-p) pairs.
    std::size_t p = 0, remaining = idx;
    while (remaining >= m - 1 - p) {
        remaining -= m - 1 - p;
        ++p;
    }
    return {p, p + 1 + remaining};
}

} // namespace

std::vector<ScatterPoint> embedding_metric_scatter(const EmbeddingMatrix& emb,
                                                   const CategoryMetric& metric,
                                                   std::size_t pairs, std::uint64_t seed) {
    const std::size_t m = metric.dist.rows();
    if (emb.w.rows() != m)
        throw std::invalid_argument("embedding_metric_scatter: shape mismatch");
    const std::size_t total = m * (m - 1) / 2;
    const std::size_t take = std::min(pairs, total); // clipped when over-requested

    Rng rng(seed);
    const auto chosen = rng.sample_without_replacement(total, take);
    std::vector<ScatterPoint> out(take);
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(take); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const auto [p, q] = unrank_pair(chosen[i], m);
        double d2 = 0.0;
        for (std::size_t b = 0; b < emb.w.cols(); ++b) {
            const double d = emb.w(p, b) - emb.w(q, b);
            d2 += d * d;
        }
        out[i] = {p, q, std::sqrt(d2), metric.dist(p, q)};
    }
    return out;
}

std::vector<std::pair<double, double>> sales_along_direction(
    const Matrix& embeddings, std::span<const double> direction,
    std::span<const double> per_category_mean_sales) {
    if (direction.size() != embeddings.cols())
        throw std::invalid_argument("sales_along_direction: direction width mismatch");
    if (per_category_mean_sales.size() != embeddings.rows())
        throw std::invalid_argument("sales_along_direction: sales per category mismatch");
    const double norm = norm2(direction);
    if (!(norm > 0.0)) throw std::invalid_argument("sales_along_direction: zero direction");

    std::vector<std::pair<double, double>> out(embeddings.rows());
    for (std::size_t a = 0; a < embeddings.rows(); ++a) {
        double proj = 0.0;
        for (std::size_t b = 0; b < embeddings.cols(); ++b)
            proj += embeddings(a, b) * direction[b] / norm;
        out[a] = {proj, per_category_mean_sales[a]};
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PcComponentDensity> pc_density_report(const Matrix& embeddings, std::size_t top_k,
                                                  std::size_t bins) {
    if (top_k > embeddings.cols())
        throw std::invalid_argument("pc_density_report: top_k exceeds embedding dimension");
    if (bins < 1) throw std::invalid_argument("pc_density_report: need at least one bin");
    const PcaResult p = pca(embeddings);
    const Matrix proj = p.project(embeddings, top_k);
    const std::size_t n = embeddings.rows();

    std::vector<PcComponentDensity> out;
    for (std::size_t c = 0; c < top_k; ++c) {
        PcComponentDensity d;
        d.component = c;
        d.projections.resize(n);
        for (std::size_t i = 0; i < n; ++i) d.projections[i] = proj(i, c);

        double mu = 0.0;
        for (const double v : d.projections) mu += v;
        mu /= double(n);
        double var = 0.0;
        for (const double v : d.projections) var += (v - mu) * (v - mu);
        d.mu = mu;
        d.sigma = std::sqrt(var / double(n));

        const auto [lo_it, hi_it] =
            std::minmax_element(d.projections.begin(), d.projections.end());
        double lo = *lo_it, hi = *hi_it;
        if (hi <= lo) hi = lo + 1.0;
        d.bin_edges.resize(bins + 1);
        for (std::size_t b = 0; b <= bins; ++b)
            d.bin_edges[b] = lo + (hi - lo) * double(b) / double(bins);
        d.bin_mass.assign(bins, 0.0);
        for (const double v : d.projections) {
            auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * double(bins));
            if (b >= bins) b = bins - 1;
            d.bin_mass[b] += 1.0 / double(n);
        }

        d.k2 = dagostino_k2(d.projections);
        out.push_back(std::move(d));
    }
    return out;
}

namespace {

// First canonical correlation between centered X (n x p) and Y (n x q).
double first_canonical_correlation(const Matrix& x, const Matrix& y) {
    const std::size_t n = x.rows(), p = x.cols(), q = y.cols();

    const auto centered = [](const Matrix& m) {
        Matrix c = m;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < m.rows(); ++i) mean += m(i, j);
            mean /= double(m.rows());
            for (std::size_t i = 0; i < m.rows(); ++i) c(i, j) -= mean;
        }
        return c;
    };
    const Matrix cx = centered(x), cy = centered(y);

    const auto cross = [&](const Matrix& a, const Matrix& b) {
        Matrix s(a.cols(), b.cols());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t u = 0; u < a.cols(); ++u)
                for (std::size_t v = 0; v < b.cols(); ++v) s(u, v) += a(i, u) * b(i, v);
        for (std::size_t u = 0; u < s.rows(); ++u)
            for (std::size_t v = 0; v < s.cols(); ++v) s(u, v) /= double(n);
        return s;
    };
    Matrix sxx = cross(cx, cx), syy = cross(cy, cy), sxy = cross(cx, cy);

    // Small ridge keeps degenerate coordinates out of the whitening.
    const auto inv_sqrt = [](Matrix& s) {
        double tr = 0.0;
        for (std::size_t i = 0; i < s.rows(); ++i) tr += s(i, i);
        const double ridge = 1e-10 * std::max(tr / double(s.rows()), 1e-30);
        for (std::size_t i = 0; i < s.rows(); ++i) s(i, i) += ridge;
        const SymEigen e = sym_eigen(s);
        Matrix r(s.rows(), s.cols());
        for (std::size_t i = 0; i < s.rows(); ++i)
            for (std::size_t j = 0; j < s.cols(); ++j) {
                double acc = 0.0;
                for (std::size_t a = 0; a < s.rows(); ++a)
                    acc += e.vectors(i, a) * e.vectors(j, a) / std::sqrt(e.values[a]);
                r(i, j) = acc;
            }
        return r;
    };
    const Matrix wx = inv_sqrt(sxx), wy = inv_sqrt(syy);

    const Matrix m = matmul(matmul(wx, sxy), wy); // p x q
    const Matrix mmt = matmul(m, transpose(m));   // p x p symmetric
    const SymEigen e = sym_eigen(mmt);
    const double top = std::max(0.0, e.values.front());
    return std::min(1.0, std::sqrt(top));
}

} // namespace

CrossCorrelationReport cross_subspace_correlation(const std::vector<EmbeddingMatrix>& embs,
                                                  const Dataset& data) {
    if (embs.size() < 2)
        throw std::invalid_argument("cross_subspace_correlation: need at least 2 features");
    const std::size_t n = data.size();

    // Embedded coordinates per feature over the dataset rows.
    std::vector<Matrix> coords;
    for (std::size_t f = 0; f < embs.size(); ++f) {
        const auto& e = embs[f];
        Matrix c(n, e.w.cols());
        for (std::size_t i = 0; i < n; ++i) {
            const auto v = static_cast<std::size_t>(data.value(i, e.feature));
            for (std::size_t b = 0; b < e.w.cols(); ++b) c(i, b) = e.w(v, b);
        }
        coords.push_back(std::move(c));
    }

    CrossCorrelationReport rep;
    for (std::size_t a = 0; a < embs.size(); ++a)
        for (std::size_t b = a + 1; b < embs.size(); ++b) {
            const double cc = first_canonical_correlation(coords[a], coords[b]);
            rep.pairs.push_back({embs[a].feature, embs[b].feature, cc});
            rep.max_abs = std::max(rep.max_abs, cc);
        }
    return rep;
}

void write_svg_scatter(const std::vector<std::pair<double, double>>& points,
                       const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_svg_scatter: cannot open " + path);
    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    if (!points.empty()) {
        xlo = xhi = points[0].first;
        ylo = yhi = points[0].second;
        for (const auto& [x, y] : points) {
            xlo = std::min(xlo, x);
            xhi = std::max(xhi, x);
            ylo = std::min(ylo, y);
            yhi = std::max(yhi, y);
        }
    }
    if (xhi <= xlo) xhi = xlo + 1;
    if (yhi <= ylo) yhi = ylo + 1;
    const double w = 640, h = 480, pad = 20;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\">\n";
    for (const auto& [x, y] : points) {
        const double px = pad + (x - xlo) / (xhi - xlo) * (w - 2 * pad);
        const double py = h - pad - (y - ylo) / (yhi - ylo) * (h - 2 * pad);
        os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2\" fill=\"steelblue\"/>\n";
    }
    os << "</svg>\n";
    if (!os) throw std::runtime_error("write_svg_scatter: write failed for " + path);
}

} // namespace ee
