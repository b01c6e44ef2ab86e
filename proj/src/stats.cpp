#include "eetab/stats.hpp"
#include "eetab/eigen_sym.hpp"

#include <cmath>
#include <stdexcept>

namespace ee {

namespace {

// Regularized incomplete gamma Q(a, x), series + continued fraction split.
double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // 1 - P(a,x) via the series for P.
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-16) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction for Q.
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

} // namespace

double chi2_sf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    return gamma_q(dof / 2.0, x / 2.0);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

NormalityReport dagostino_k2(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 20) throw std::invalid_argument("dagostino_k2: need at least 20 samples");
    const double dn = static_cast<double>(n);

    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= dn;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : samples) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= dn;
    m3 /= dn;
    m4 /= dn;
    if (m2 <= 0.0) throw std::invalid_argument("dagostino_k2: constant input");

    // Skewness Z (D'Agostino 1970).
    const double g1 = m3 / std::pow(m2, 1.5);
    double y = g1 * std::sqrt((dn + 1.0) * (dn + 3.0) / (6.0 * (dn - 2.0)));
    const double beta2 = 3.0 * (dn * dn + 27.0 * dn - 70.0) * (dn + 1.0) * (dn + 3.0) /
                         ((dn - 2.0) * (dn + 5.0) * (dn + 7.0) * (dn + 9.0));
    const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
    const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
    const double alpha = std::sqrt(2.0 / (w2 - 1.0));
    if (y == 0.0) y = 1.0; // z1 limit at zero skewness
    const double ya = y / alpha;
    const double z1 = delta * std::log(ya + std::sqrt(ya * ya + 1.0));

    // Kurtosis Z (Anscombe-Glynn 1983).
    const double b2 = m4 / (m2 * m2);
    const double eb2 = 3.0 * (dn - 1.0) / (dn + 1.0);
    const double vb2 = 24.0 * dn * (dn - 2.0) * (dn - 3.0) /
                       ((dn + 1.0) * (dn + 1.0) * (dn + 3.0) * (dn + 5.0));
    const double x = (b2 - eb2) / std::sqrt(vb2);
    const double sqrtbeta1 = 6.0 * (dn * dn - 5.0 * dn + 2.0) / ((dn + 7.0) * (dn + 9.0)) *
                             std::sqrt(6.0 * (dn + 3.0) * (dn + 5.0) /
                                       (dn * (dn - 2.0) * (dn - 3.0)));
    const double a = 6.0 + 8.0 / sqrtbeta1 *
                               (2.0 / sqrtbeta1 + std::sqrt(1.0 + 4.0 / (sqrtbeta1 * sqrtbeta1)));
    const double term1 = 1.0 - 2.0 / (9.0 * a);
    const double denom = 1.0 + x * std::sqrt(2.0 / (a - 4.0));
    if (denom == 0.0) throw std::domain_error("dagostino_k2: degenerate kurtosis transform");
    const double term2 =
        std::copysign(std::cbrt((1.0 - 2.0 / a) / std::abs(denom)), denom);
    const double z2 = (term1 - term2) / std::sqrt(2.0 / (9.0 * a));

    NormalityReport r;
    r.test = NormalityTest::dagostino_k2;
    r.statistic = z1 * z1 + z2 * z2;
    r.p_value = chi2_sf(r.statistic, 2.0);
    return r;
}

std::pair<NormalityReport, NormalityReport> mardia(const Matrix& data) {
    const std::size_t n = data.rows(), p = data.cols();
    if (p < 2 || n <= p) throw std::invalid_argument("mardia: need rows > cols >= 2");
    const double dn = static_cast<double>(n), dp = static_cast<double>(p);

    std::vector<double> mean(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) mean[j] += data(i, j);
    for (double& m : mean) m /= dn;

    // MLE covariance (divisor n), per Mardia's original statistics.
    Matrix cov(p, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < p; ++a) {
            const double xa = data(i, a) - mean[a];
            for (std::size_t b = a; b < p; ++b) cov(a, b) += xa * (data(i, b) - mean[b]);
        }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = a; b < p; ++b) {
            cov(a, b) /= dn;
            cov(b, a) = cov(a, b);
        }

    const SymEigen e = sym_eigen(cov);
    if (e.values.back() <= 1e-12 * std::max(e.values.front(), 1e-300))
        throw std::invalid_argument(
            "mardia: singular covariance; reduce the dimension (e.g. project with PCA) first");

    // Whitened coordinates y_i = S^{-1/2} (x_i - mean).
    Matrix y(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < p; ++a) {
                double proj = 0.0;
                for (std::size_t b = 0; b < p; ++b)
                    proj += e.vectors(b, a) * (data(i, b) - mean[b]);
                s += e.vectors(j, a) * proj / std::sqrt(e.values[a]);
            }
            y(i, j) = s;
        }

    // b1p = (1/n^2) sum_ij (y_i . y_j)^3 = (1/n^2) ||T||^2 with
    // T_abc = sum_i y_ia y_ib y_ic.
    double t_norm2 = 0.0;
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b)
            for (std::size_t c = 0; c < p; ++c) {
                double t = 0.0;
                for (std::size_t i = 0; i < n; ++i) t += y(i, a) * y(i, b) * y(i, c);
                t_norm2 += t * t;
            }
    const double b1p = t_norm2 / (dn * dn);

    double b2p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < p; ++j) q += y(i, j) * y(i, j);
        b2p += q * q;
    }
    b2p /= dn;

    NormalityReport skew;
    skew.test = NormalityTest::mardia_skew;
    skew.statistic = dn * b1p / 6.0;
    skew.p_value = chi2_sf(skew.statistic, dp * (dp + 1.0) * (dp + 2.0) / 6.0);

    NormalityReport kurt;
    kurt.test = NormalityTest::mardia_kurtosis;
    kurt.statistic = (b2p - dp * (dp + 2.0)) / std::sqrt(8.0 * dp * (dp + 2.0) / dn);
    kurt.p_value = normal_two_sided_p(kurt.statistic);

    return {skew, kurt};
}

} // namespace ee
