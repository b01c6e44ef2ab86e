#pragma once

#include "eetab/dataset.hpp"

#include <string>

namespace ee {

// Maps schema roles to CSV column names. store/date/sales are required;
// promo/state are ingested only when non-empty.
struct ColumnMap {
    std::string store = "Store";
    std::string date = "Date";
    std::string sales = "Sales";
    std::string promo = "Promo";
    std::string state = "State";
};

// Reads a header-line CSV, drops rows with Sales <= 0, derives day_of_week /
// day / month / year from the ISO date column and builds value dictionaries
// from sorted raw labels over the full file. Dates are ISO-8601 (YYYY-MM-DD).
Dataset ingest_csv(const std::string& path, const ColumnMap& map = {});

// One pre-ingestion record; the synthetic generator and the CSV reader share
// the same derivation and dictionary construction through build_dataset.
struct RawRecord {
    std::string store;
    std::int32_t date = 0; // days since 1970-01-01
    double sales = 0.0;
    std::string promo; // used when with_promo
    std::string state; // used when with_state
};

Dataset build_dataset(const std::vector<RawRecord>& records, bool with_promo, bool with_state);

// Columnar binary cache with a versioned header.
void save_cache(const Dataset& d, const std::string& path);
Dataset load_cache(const std::string& path);

// Writes the role columns (store, date, sales, and promo/state when present)
// back out as a CSV that ingest_csv accepts.
void write_csv(const Dataset& d, const std::string& path);

std::string iso_date(std::int32_t days_since_epoch);
std::int32_t parse_iso_date(const std::string& s); // throws on malformed dates

} // namespace ee
