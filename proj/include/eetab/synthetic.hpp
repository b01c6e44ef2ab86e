#pragma once

#include "eetab/dataset.hpp"
#include "eetab/matrix.hpp"

#include <cstdint>
#include <vector>

namespace ee {

// Desk-scale stand-in for the competition data: every store carries a latent
// vector, log-sales are additive calendar/promo effects plus a store term and
// gaussian noise on the log scale.
struct SyntheticConfig {
    std::size_t stores = 100;
    std::size_t latent_dim = 2;
    std::size_t states = 12;
    double store_effect = 0.3;  // scale of each latent coordinate's effect
    double dow_effect = 0.25;
    double month_effect = 0.2;
    double promo_effect = 0.15;
    double promo_rate = 0.4;
    double noise_sigma = 0.15; // log scale
    std::size_t rows = 50000;
    std::int32_t start_date = 15706; // 2013-01-01
    std::size_t n_days = 730;
    double base_log_sales = 8.0;
    std::uint64_t seed = 0;
};

struct SyntheticTruth {
    SyntheticConfig cfg;
    Matrix store_latent;            // stores x latent_dim, N(0,1) entries
    std::vector<double> dow_coef;   // indexed by ISO dow - 1
    std::vector<double> month_coef; // indexed by month - 1
    double promo_coef = 0.0;
    double bayes_mape_floor = 0.0;

    // Noise-free log-sales for a dataset row, reconstructed from its labels
    // and date (independent of dictionary code order).
    double expected_log_sales(const Dataset& d, std::size_t row) const;
};

std::pair<Dataset, SyntheticTruth> generate_synthetic(const SyntheticConfig& cfg);

// Minimum achievable MAPE under multiplicative lognormal noise:
// E|1 - e^(eps - sigma^2/2)| with eps ~ N(0, sigma^2), by seeded simulation.
double bayes_mape_floor(double sigma, std::uint64_t seed, std::size_t draws = 1000000);

} // namespace ee
