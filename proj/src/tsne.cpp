#include "eetab/tsne.hpp"
#include "eetab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ee {

namespace {

Matrix squared_distances(const Matrix& x) {
    const std::size_t n = x.rows(), d = x.cols();
    Matrix d2(n, n);
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = x(i, k) - x(j, k);
                s += diff * diff;
            }
            d2(i, j) = s;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) d2(i, j) = d2(j, i);
    return d2;
}

// Conditional affinities p_{j|i} with the bandwidth of row i tuned so the
// entropy matches log(perplexity).
void gaussian_affinities(const Matrix& d2, double perplexity, Matrix& p) {
    const std::size_t n = d2.rows();
    const double target_entropy = std::log(perplexity);
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double beta = 1.0, beta_lo = 0.0, beta_hi = INFINITY;
        for (int iter = 0; iter < 64; ++iter) {
            double sum = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = std::exp(-beta * d2(i, j));
                sum += w;
                weighted += w * d2(i, j);
            }
            // H = log(sum) + beta * E[d2]
            const double entropy = std::log(sum) + beta * weighted / sum;
            const double diff = entropy - target_entropy;
            if (std::abs(diff) < 1e-7) break;
            if (diff > 0.0) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = beta_lo == 0.0 ? beta / 2.0 : 0.5 * (beta + beta_lo);
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            p(i, j) = std::exp(-beta * d2(i, j));
            sum += p(i, j);
        }
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) p(i, j) /= sum;
        p(i, i) = 0.0;
    }
}

} // namespace

TsneResult tsne(const Matrix& points, const TsneConfig& cfg) {
    const std::size_t n = points.rows();
    if (n < 4) throw std::invalid_argument("tsne: need at least 4 points");
    if (!(cfg.perplexity > 0.0) || cfg.perplexity >= double(n - 1) / 3.0)
        throw std::invalid_argument("tsne: perplexity must be in (0, (n-1)/3)");

    const Matrix d2 = squared_distances(points);
    Matrix cond(n, n);
    gaussian_affinities(d2, cfg.perplexity, cond);

    // Symmetrize; floor keeps the KL terms finite.
    Matrix p(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) p(i, j) = std::max((cond(i, j) + cond(j, i)) / (2.0 * double(n)), 1e-12);

    Rng rng(cfg.seed);
    Matrix y(n, 2), velocity(n, 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k) y(i, k) = 1e-4 * rng.normal();

    TsneResult res;
    Matrix num(n, n), grad(n, 2);
    std::vector<double> row_q_sum(n), row_kl(n);

    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerating = iter < cfg.exaggeration_iters;
        const double p_scale = exaggerating ? cfg.early_exaggeration : 1.0;
        const double momentum =
            iter < cfg.exaggeration_iters ? cfg.momentum_initial : cfg.momentum_final;
        if (iter == cfg.exaggeration_iters && iter > 0) {
            // Drop the exaggeration-phase velocity: the objective just
            // changed, carrying it over overshoots the plain-P descent.
            std::fill(velocity.data(), velocity.data() + velocity.size(), 0.0);
        }

        // Student-t numerators and the normalization, accumulated per row so
        // the total is independent of the thread count.
#pragma omp parallel for schedule(static)
        for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            double rs = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    num(i, j) = 0.0;
                    continue;
                }
                const double dy0 = y(i, 0) - y(j, 0);
                const double dy1 = y(i, 1) - y(j, 1);
                num(i, j) = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                rs += num(i, j);
            }
            row_q_sum[i] = rs;
        }
        double sum_q = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum_q += row_q_sum[i];
        sum_q = std::max(sum_q, 1e-300);

#pragma omp parallel for schedule(static)
        for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            double g0 = 0.0, g1 = 0.0, kl_i = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = std::max(num(i, j) / sum_q, 1e-12);
                const double mult = (p_scale * p(i, j) - q) * num(i, j);
                g0 += mult * (y(i, 0) - y(j, 0));
                g1 += mult * (y(i, 1) - y(j, 1));
                kl_i += p(i, j) * std::log(p(i, j) / q);
            }
            grad(i, 0) = 4.0 * g0;
            grad(i, 1) = 4.0 * g1;
            row_kl[i] = kl_i;
        }
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i) kl += row_kl[i];
        res.kl_trace.push_back(kl);

        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            velocity(i, 0) = momentum * velocity(i, 0) - cfg.learning_rate * grad(i, 0);
            velocity(i, 1) = momentum * velocity(i, 1) - cfg.learning_rate * grad(i, 1);
            y(i, 0) += velocity(i, 0);
            y(i, 1) += velocity(i, 1);
            mean0 += y(i, 0);
            mean1 += y(i, 1);
        }
        mean0 /= double(n);
        mean1 /= double(n);
        for (std::size_t i = 0; i < n; ++i) {
            y(i, 0) -= mean0;
            y(i, 1) -= mean1;
        }
    }

    res.y = std::move(y);
    return res;
}

} // namespace ee
