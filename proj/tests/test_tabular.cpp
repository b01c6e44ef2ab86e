#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eetab/csv.hpp"
#include "eetab/dataset.hpp"
#include "eetab/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace ee;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    os << content;
}

// Minimal single-feature dataset with synthetic dates, for split tests.
Dataset tiny_dataset(std::size_t rows, std::size_t distinct_dates) {
    FeatureSchema schema;
    schema.features.push_back({"f", FeatureKind::categorical, 2, 1, {"a", "b"}});
    std::vector<std::int32_t> xs(rows);
    std::vector<double> ys(rows);
    std::vector<std::int32_t> dates(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        xs[i] = static_cast<std::int32_t>(i % 2);
        ys[i] = 1.0 + double(i % 97);
        dates[i] = static_cast<std::int32_t>(16000 + i % distinct_dates);
    }
    return Dataset(std::move(schema), std::move(xs), std::move(ys), std::move(dates));
}

} // namespace

TEST_CASE("ingest derives calendar features and drops closed-store rows") {
    const auto path = temp_path("eetab_ingest_basic.csv");
    write_file(path,
               "Store,Date,Sales,Promo,State\n"
               "1,2015-07-31,5263,1,HE\n"
               "2,2015-07-30,4000,0,BY\n"
               "3,2015-07-29,0,0,HE\n" // closed store, dropped
               "1,2015-07-28,3100,0,BY\n");
    const auto d = ingest_csv(path);

    CHECK(d.size() == 3);
    const auto& schema = d.schema();
    REQUIRE(schema.feature_count() == 7);
    CHECK(schema.features[0].name == "store");
    CHECK(schema.features[1].name == "day_of_week");
    CHECK(schema.features[2].name == "day");
    CHECK(schema.features[3].name == "month");
    CHECK(schema.features[4].name == "year");
    CHECK(schema.features[5].name == "promo");
    CHECK(schema.features[6].name == "state");

    // 2015-07-31 is a Friday (ISO weekday 5)
    const auto& dow = schema.features[1];
    CHECK(dow.labels[std::size_t(d.value(0, 1))] == "5");
    CHECK(schema.features[2].labels[std::size_t(d.value(0, 2))] == "31");
    CHECK(schema.features[3].labels[std::size_t(d.value(0, 3))] == "7");
    CHECK(schema.features[4].labels[std::size_t(d.value(0, 4))] == "2015");
    CHECK(schema.features[5].labels[std::size_t(d.value(0, 5))] == "1");
    CHECK(schema.features[6].labels[std::size_t(d.value(0, 6))] == "HE");
    CHECK(d.target(0) == 5263.0);

    // store 3 only had the dropped row, so it is absent from the dictionary
    CHECK(schema.features[0].cardinality == 2);
}

TEST_CASE("ingest builds a dense store dictionary at full cardinality") {
    const auto path = temp_path("eetab_ingest_1115.csv");
    std::string csv = "Store,Date,Sales,Promo,State\n";
    char buf[96];
    for (int s = 1; s <= 1115; ++s) {
        std::snprintf(buf, sizeof buf, "%d,2014-%02d-%02d,%d,0,S%d\n", s, (s % 12) + 1,
                      (s % 28) + 1, 1000 + s, s % 12);
        csv += buf;
    }
    write_file(path, csv);
    const auto d = ingest_csv(path);
    CHECK(d.schema().features[0].cardinality == 1115);
    CHECK(d.schema().features[0].embedding_dim == 10);
    // numeric labels sort numerically, so codes follow store ids
    CHECK(d.schema().features[0].labels[0] == "1");
    CHECK(d.schema().features[0].labels[1] == "2");
    CHECK(d.schema().features[0].labels[1114] == "1115");
}

TEST_CASE("ingest error paths") {
    const auto missing_col = temp_path("eetab_missing_col.csv");
    write_file(missing_col, "Store,Sales\n1,10\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(ingest_csv(missing_col)),
                         doctest::Contains("Date"), std::runtime_error);

    const auto bad_date = temp_path("eetab_bad_date.csv");
    write_file(bad_date, "Store,Date,Sales,Promo,State\n1,2015-13-40,10,0,HE\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(ingest_csv(bad_date)), doctest::Contains("row 2"),
                         std::runtime_error);

    const auto bad_sales = temp_path("eetab_bad_sales.csv");
    write_file(bad_sales, "Store,Date,Sales,Promo,State\n1,2015-01-01,abc,0,HE\n");
    CHECK_THROWS(static_cast<void>(ingest_csv(bad_sales)));

    const auto all_closed = temp_path("eetab_all_closed.csv");
    write_file(all_closed, "Store,Date,Sales,Promo,State\n1,2015-01-01,0,0,HE\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(ingest_csv(all_closed)),
                         doctest::Contains("no usable rows"), std::runtime_error);

    const auto missing_value = temp_path("eetab_missing_value.csv");
    write_file(missing_value, "Store,Date,Sales,Promo,State\n1,2015-01-01,10,,HE\n");
    CHECK_THROWS(static_cast<void>(ingest_csv(missing_value)));
}

TEST_CASE("temporal split keeps whole days together") {
    const auto d = tiny_dataset(100, 20);
    const auto [train, test] = split(d, SplitMode::temporal, 0.10, 1);
    REQUIRE(train.size() > 0);
    REQUIRE(test.size() > 0);
    std::int32_t max_train = INT32_MIN, min_test = INT32_MAX;
    for (std::size_t i = 0; i < train.size(); ++i) max_train = std::max(max_train, train.date(i));
    for (std::size_t i = 0; i < test.size(); ++i) min_test = std::min(min_test, test.date(i));
    CHECK(max_train < min_test);
    CHECK(train.size() + test.size() == d.size());
    // 20 distinct days at 10% -> 18 train days
    std::set<std::int32_t> train_days;
    for (std::size_t i = 0; i < train.size(); ++i) train_days.insert(train.date(i));
    CHECK(train_days.size() == 18);
}

TEST_CASE("split determinism and shuffled sizes") {
    const auto d = tiny_dataset(1017210, 912);
    const auto [tr1, te1] = split(d, SplitMode::shuffled, 0.10, 99);
    const auto [tr2, te2] = split(d, SplitMode::shuffled, 0.10, 99);
    CHECK(te1.size() == 101721);
    CHECK(tr1.size() == 915489);
    REQUIRE(te1.size() == te2.size());
    bool identical = true;
    for (std::size_t i = 0; i < te1.size() && identical; ++i)
        identical = te1.target(i) == te2.target(i) && te1.date(i) == te2.date(i);
    CHECK(identical);

    const auto [tr3, te3] = split(d, SplitMode::shuffled, 0.10, 100);
    bool same_as_other_seed = tr3.size() == tr1.size();
    for (std::size_t i = 0; i < 1000 && same_as_other_seed; ++i)
        same_as_other_seed = tr3.target(i) == tr1.target(i);
    CHECK_FALSE(same_as_other_seed);

    CHECK_THROWS(split(tiny_dataset(1, 1), SplitMode::shuffled, 0.5, 0));
    CHECK_THROWS(split(d, SplitMode::shuffled, 0.0, 0));
    CHECK_THROWS(split(d, SplitMode::shuffled, 1.0, 0));
}

TEST_CASE("sparsify samples distinct rows deterministically") {
    const auto d = tiny_dataset(5000, 100);

    const auto all = sparsify(d, 5000, 3);
    CHECK(all.size() == 5000);
    double sum_orig = 0.0, sum_perm = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        sum_orig += d.target(i);
        sum_perm += all.target(i);
    }
    CHECK(sum_orig == doctest::Approx(sum_perm).epsilon(1e-12));

    const auto a = sparsify(d, 200, 7);
    const auto b = sparsify(d, 200, 7);
    CHECK(a.size() == 200);
    bool identical = true;
    for (std::size_t i = 0; i < a.size() && identical; ++i)
        identical = a.target(i) == b.target(i) && a.date(i) == b.date(i);
    CHECK(identical);

    CHECK_THROWS(sparsify(d, 5001, 0));
}

TEST_CASE("sparsify matches the paper-scale row counts") {
    const auto d = tiny_dataset(915489, 912);
    const auto s = sparsify(d, 200000, 11);
    CHECK(s.size() == 200000);
}

TEST_CASE("target transform") {
    TargetTransform t{41551.0};
    CHECK(t.transform(41551.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.transform(1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(t.inverse(t.transform(5263.0)) - 5263.0) < 1e-8 * 5263.0);
    CHECK(t.transform(2.0 * 41551.0) > 1.0); // test rows may exceed the training max
    CHECK_THROWS(t.transform(0.0));
    CHECK_THROWS(t.transform(-5.0));

    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        const double s = std::exp(rng.uniform(std::log(1.0 + 1e-9), std::log(10.0 * 41551.0)));
        CHECK(std::abs(t.inverse(t.transform(s)) - s) < 1e-8 * s);
    }

    // sale_max comes from the training portion only
    const auto d = tiny_dataset(50, 5);
    const auto fitted = fit_target_transform(d);
    double mx = 0.0;
    for (const double y : d.targets()) mx = std::max(mx, y);
    CHECK(fitted.sale_max == mx);
}

TEST_CASE("mape") {
    const std::vector<double> a{100.0}, p{90.0};
    CHECK(mape(p, a) == doctest::Approx(0.10).epsilon(1e-12));

    const std::vector<double> a2{100.0, 200.0}, p2{110.0, 180.0};
    CHECK(mape(p2, a2) == doctest::Approx(0.10).epsilon(1e-12));

    CHECK(mape(a, a) == 0.0);

    // scale invariance
    Rng rng(3);
    std::vector<double> actual(50), pred(50), actual_c(50), pred_c(50);
    for (std::size_t i = 0; i < 50; ++i) {
        actual[i] = rng.uniform(1.0, 100.0);
        pred[i] = rng.uniform(1.0, 100.0);
        actual_c[i] = 3.7 * actual[i];
        pred_c[i] = 3.7 * pred[i];
    }
    CHECK(mape(pred, actual) == doctest::Approx(mape(pred_c, actual_c)).epsilon(1e-12));

    const std::vector<double> short_v{1.0};
    CHECK_THROWS(static_cast<void>(mape(short_v, a2)));
    const std::vector<double> empty;
    CHECK_THROWS(static_cast<void>(mape(empty, empty)));
    const std::vector<double> zero_actual{0.0};
    CHECK_THROWS(static_cast<void>(mape(short_v, zero_actual)));
}

TEST_CASE("one hot") {
    CHECK(one_hot(2, 4) == std::vector<double>{0.0, 0.0, 1.0, 0.0});
    CHECK(one_hot(0, 1) == std::vector<double>{1.0});
    CHECK_THROWS(static_cast<void>(one_hot(4, 4)));

    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        const std::size_t m = 1 + std::size_t(rng.below(40));
        const std::size_t v = std::size_t(rng.below(m));
        const auto u = one_hot(v, m);
        std::size_t nonzero = 0;
        for (std::size_t j = 0; j < m; ++j)
            if (u[j] != 0.0) {
                ++nonzero;
                CHECK(u[j] == 1.0);
                CHECK(j == v);
            }
        CHECK(nonzero == 1);
    }
}

TEST_CASE("dataset cache round trip") {
    const auto path = temp_path("eetab_cache_rt.csv");
    write_file(path,
               "Store,Date,Sales,Promo,State\n"
               "7,2014-02-14,123.5,1,BW\n"
               "2,2014-02-15,88,0,BY\n"
               "7,2014-02-16,99.25,1,BW\n");
    const auto d = ingest_csv(path);
    const auto cache = temp_path("eetab_cache_rt.bin");
    save_cache(d, cache);
    const auto r = load_cache(cache);
    REQUIRE(r.size() == d.size());
    REQUIRE(r.feature_count() == d.feature_count());
    for (std::size_t f = 0; f < d.feature_count(); ++f) {
        CHECK(r.schema().features[f].name == d.schema().features[f].name);
        CHECK(r.schema().features[f].labels == d.schema().features[f].labels);
        CHECK(r.schema().features[f].embedding_dim == d.schema().features[f].embedding_dim);
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(r.target(i) == d.target(i));
        CHECK(r.date(i) == d.date(i));
        for (std::size_t f = 0; f < d.feature_count(); ++f)
            CHECK(r.value(i, f) == d.value(i, f));
    }

    CHECK_THROWS(static_cast<void>(load_cache(path))); // not a cache file
}

TEST_CASE("csv write / ingest round trip") {
    const auto path = temp_path("eetab_csv_rt.csv");
    write_file(path,
               "Store,Date,Sales,Promo,State\n"
               "1,2015-07-31,5263,1,HE\n"
               "10,2015-07-30,4000,0,BY\n");
    const auto d = ingest_csv(path);
    const auto path2 = temp_path("eetab_csv_rt2.csv");
    write_csv(d, path2);
    const auto r = ingest_csv(path2);
    REQUIRE(r.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(r.target(i) == d.target(i));
        CHECK(r.date(i) == d.date(i));
    }
}

TEST_CASE("schema invariants") {
    FeatureSchema bad;
    bad.features.push_back({"x", FeatureKind::categorical, 5, 5, {}}); // D > m-1
    CHECK_THROWS(bad.validate());

    FeatureSchema ok;
    ok.features.push_back({"x", FeatureKind::categorical, 5, 4, {}});
    CHECK_NOTHROW(ok.validate());

    // dataset constructor rejects out-of-range values and nonpositive targets
    FeatureSchema s;
    s.features.push_back({"f", FeatureKind::categorical, 2, 1, {"a", "b"}});
    CHECK_THROWS(Dataset(s, {5}, {1.0}, {0}));
    CHECK_THROWS(Dataset(s, {0}, {0.0}, {0}));
    CHECK_THROWS(Dataset(s, {0}, {1.0}, {0, 1}));
}
