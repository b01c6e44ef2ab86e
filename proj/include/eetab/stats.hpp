#pragma once

#include "eetab/matrix.hpp"

#include <span>
#include <utility>

namespace ee {

enum class NormalityTest { dagostino_k2, mardia_skew, mardia_kurtosis };

struct NormalityReport {
    double statistic = 0.0;
    double p_value = 1.0;
    NormalityTest test = NormalityTest::dagostino_k2;
};

// Upper tail of the chi-square distribution with `dof` degrees of freedom.
double chi2_sf(double x, double dof);

// Two-sided standard normal p-value for |z|.
double normal_two_sided_p(double z);

// D'Agostino's K^2 omnibus normality test: K^2 = Z1(skew)^2 + Z2(kurt)^2 with
// the standard transformed statistics, p-value from chi2(2).
// Requires length >= 20 and non-constant input.
NormalityReport dagostino_k2(std::span<const double> samples);

// Mardia's multivariate skewness and kurtosis tests. Rows of `data` are
// observations. Requires rows > cols >= 2 and an invertible covariance.
std::pair<NormalityReport, NormalityReport> mardia(const Matrix& data);

} // namespace ee
