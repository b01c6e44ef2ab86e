#include "eetab/synthetic.hpp"
#include "eetab/csv.hpp"
#include "eetab/rng.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ee {

namespace {

// Latent coordinate j couples to the week cycle through its own harmonic;
// the j = 0 basis is constant, so that coordinate shifts the store's level.
double latent_basis(std::size_t j, unsigned iso_dow) {
    if (j == 0) return 1.0;
    return std::cos(2.0 * std::numbers::pi * double(j) * double(iso_dow - 1) / 7.0);
}

double dow_pattern(unsigned iso_dow) {
    return std::sin(2.0 * std::numbers::pi * double(iso_dow - 1) / 7.0);
}

double month_pattern(unsigned month) {
    return std::cos(2.0 * std::numbers::pi * double(month - 1) / 12.0);
}

} // namespace

double bayes_mape_floor(double sigma, std::uint64_t seed, std::size_t draws) {
    if (sigma < 0.0) throw std::invalid_argument("bayes_mape_floor: sigma must be >= 0");
    if (sigma == 0.0) return 0.0;
    Rng rng(seed);
    double s = 0.0;
    const double shift = -0.5 * sigma * sigma;
    for (std::size_t i = 0; i < draws; ++i)
        s += std::abs(1.0 - std::exp(sigma * rng.normal() + shift));
    return s / double(draws);
}

std::pair<Dataset, SyntheticTruth> generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.stores == 0 || cfg.rows == 0 || cfg.n_days == 0 || cfg.latent_dim == 0 ||
        cfg.states == 0)
        throw std::invalid_argument("generate_synthetic: counts must be positive");
    if (cfg.noise_sigma < 0.0)
        throw std::invalid_argument("generate_synthetic: sigma must be >= 0");

    SyntheticTruth truth;
    truth.cfg = cfg;
    Rng rng(cfg.seed);

    truth.store_latent = Matrix(cfg.stores, cfg.latent_dim);
    for (std::size_t s = 0; s < cfg.stores; ++s)
        for (std::size_t j = 0; j < cfg.latent_dim; ++j)
            truth.store_latent(s, j) = rng.normal();

    truth.dow_coef.resize(7);
    for (unsigned d = 1; d <= 7; ++d) truth.dow_coef[d - 1] = cfg.dow_effect * dow_pattern(d);
    truth.month_coef.resize(12);
    for (unsigned m = 1; m <= 12; ++m)
        truth.month_coef[m - 1] = cfg.month_effect * month_pattern(m);
    truth.promo_coef = cfg.promo_effect;
    truth.bayes_mape_floor = bayes_mape_floor(cfg.noise_sigma, cfg.seed ^ 0x9E3779B9ULL);

    std::vector<RawRecord> records(cfg.rows);
    for (std::size_t i = 0; i < cfg.rows; ++i) {
        const auto store = static_cast<std::size_t>(rng.below(cfg.stores));
        const auto day_offset = static_cast<std::int32_t>(rng.below(cfg.n_days));
        const bool promo = rng.uniform() < cfg.promo_rate;
        const std::int32_t date = cfg.start_date + day_offset;

        const std::chrono::sys_days sd{std::chrono::days{date}};
        const std::chrono::year_month_day ymd{sd};
        const unsigned dow = std::chrono::weekday{sd}.iso_encoding();
        const unsigned month = unsigned(ymd.month());

        double log_sales = cfg.base_log_sales + truth.dow_coef[dow - 1] +
                           truth.month_coef[month - 1] + (promo ? truth.promo_coef : 0.0);
        for (std::size_t j = 0; j < cfg.latent_dim; ++j)
            log_sales +=
                cfg.store_effect * truth.store_latent(store, j) * latent_basis(j, dow);
        log_sales += cfg.noise_sigma * rng.normal();

        auto& r = records[i];
        r.store = std::to_string(store + 1);
        r.date = date;
        r.sales = std::max(1.0, std::exp(log_sales));
        r.promo = promo ? "1" : "0";
        r.state = "S" + std::to_string(store % cfg.states + 1);
    }

    return {build_dataset(records, true, true), std::move(truth)};
}

double SyntheticTruth::expected_log_sales(const Dataset& d, std::size_t row) const {
    const auto& schema = d.schema();
    const auto store_f = schema.feature_index("store");
    const auto promo_f = schema.feature_index("promo");
    if (!store_f || !promo_f)
        throw std::invalid_argument("expected_log_sales: dataset lacks synthetic schema");

    const auto& store_label =
        schema.features[*store_f].labels[std::size_t(d.value(row, *store_f))];
    const auto store = static_cast<std::size_t>(std::stoull(store_label) - 1);
    const bool promo = schema.features[*promo_f].labels[std::size_t(d.value(row, *promo_f))] == "1";

    const std::chrono::sys_days sd{std::chrono::days{d.date(row)}};
    const std::chrono::year_month_day ymd{sd};
    const unsigned dow = std::chrono::weekday{sd}.iso_encoding();
    const unsigned month = unsigned(ymd.month());

    double log_sales = cfg.base_log_sales + dow_coef[dow - 1] + month_coef[month - 1] +
                       (promo ? promo_coef : 0.0);
    for (std::size_t j = 0; j < cfg.latent_dim; ++j)
        log_sales += cfg.store_effect * store_latent(store, j) * latent_basis(j, dow);
    return log_sales;
}

} // namespace ee
