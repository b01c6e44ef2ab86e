#include "eetab/dataset.hpp"
#include "eetab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ee {

std::optional<std::size_t> FeatureSpec::index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return i;
    return std::nullopt;
}

std::size_t FeatureSchema::total_embedding_dim() const {
    std::size_t s = 0;
    for (const auto& f : features) s += f.embedding_dim;
    return s;
}

std::size_t FeatureSchema::total_cardinality() const {
    std::size_t s = 0;
    for (const auto& f : features) s += f.cardinality;
    return s;
}

std::optional<std::size_t> FeatureSchema::feature_index(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return i;
    return std::nullopt;
}

void FeatureSchema::validate() const {
    for (const auto& f : features) {
        if (f.cardinality == 0) throw std::invalid_argument("schema: zero cardinality: " + f.name);
        if (f.embedding_dim < 1) throw std::invalid_argument("schema: embedding_dim < 1: " + f.name);
        if (f.cardinality >= 2 && f.embedding_dim > f.cardinality - 1)
            throw std::invalid_argument("schema: embedding_dim exceeds m-1 for " + f.name);
        if (!f.labels.empty() && f.labels.size() != f.cardinality)
            throw std::invalid_argument("schema: label dictionary not dense for " + f.name);
    }
}

Dataset::Dataset(FeatureSchema schema, std::vector<std::int32_t> xs, std::vector<double> ys,
                 std::vector<std::int32_t> dates)
    : schema_(std::move(schema)), xs_(std::move(xs)), ys_(std::move(ys)), dates_(std::move(dates)) {
    const std::size_t nf = schema_.feature_count();
    if (nf == 0) throw std::invalid_argument("dataset: empty schema");
    if (xs_.size() != ys_.size() * nf) throw std::invalid_argument("dataset: row shape mismatch");
    if (dates_.size() != ys_.size()) throw std::invalid_argument("dataset: date column mismatch");
    for (std::size_t i = 0; i < ys_.size(); ++i) {
        if (!(ys_[i] > 0.0)) throw std::invalid_argument("dataset: nonpositive target");
        for (std::size_t j = 0; j < nf; ++j) {
            const auto v = xs_[i * nf + j];
            if (v < 0 || static_cast<std::size_t>(v) >= schema_.features[j].cardinality)
                throw std::invalid_argument("dataset: feature value out of range: " +
                                            schema_.features[j].name);
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    const std::size_t nf = schema_.feature_count();
    std::vector<std::int32_t> xs;
    xs.reserve(rows.size() * nf);
    std::vector<double> ys;
    ys.reserve(rows.size());
    std::vector<std::int32_t> dates;
    dates.reserve(rows.size());
    for (std::size_t r : rows) {
        if (r >= size()) throw std::out_of_range("dataset subset: row index");
        const auto xr = x(r);
        xs.insert(xs.end(), xr.begin(), xr.end());
        ys.push_back(ys_[r]);
        dates.push_back(dates_[r]);
    }
    return Dataset(schema_, std::move(xs), std::move(ys), std::move(dates));
}

double TargetTransform::transform(double sales) const {
    if (!(sales > 0.0)) throw std::domain_error("transform_target: sales must be positive");
    return std::log(sales) / std::log(sale_max);
}

double TargetTransform::inverse(double v) const { return std::exp(v * std::log(sale_max)); }

TargetTransform fit_target_transform(const Dataset& train) {
    if (train.size() == 0) throw std::invalid_argument("target transform: empty training set");
    double mx = 0.0;
    for (double y : train.targets()) mx = std::max(mx, y);
    if (!(mx > 1.0)) throw std::invalid_argument("target transform: sale_max must exceed 1");
    return {mx};
}

std::pair<Dataset, Dataset> split(const Dataset& d, SplitMode mode, double test_fraction,
                                  std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split: test_fraction must be in (0,1)");
    if (d.size() < 2) throw std::invalid_argument("split: dataset too small");

    std::vector<std::size_t> train_rows, test_rows;
    if (mode == SplitMode::shuffled) {
        const std::size_t n_test = std::max<std::size_t>(
            1, std::min(d.size() - 1,
                        static_cast<std::size_t>(std::llround(test_fraction * double(d.size())))));
        Rng rng(seed);
        const auto perm = rng.permutation(d.size());
        train_rows.assign(perm.begin(), perm.end() - n_test);
        test_rows.assign(perm.end() - n_test, perm.end());
    } else {
        std::set<std::int32_t> dates;
        for (std::size_t i = 0; i < d.size(); ++i) dates.insert(d.date(i));
        if (dates.size() < 2) throw std::invalid_argument("split: need at least 2 distinct days");
        // First ~(1-f) of the distinct days train; whole days stay together.
        std::size_t n_train_days = static_cast<std::size_t>(
            std::llround((1.0 - test_fraction) * double(dates.size())));
        n_train_days = std::clamp<std::size_t>(n_train_days, 1, dates.size() - 1);
        auto it = dates.begin();
        std::advance(it, n_train_days - 1);
        const std::int32_t boundary = *it; // last training day
        for (std::size_t i = 0; i < d.size(); ++i)
            (d.date(i) <= boundary ? train_rows : test_rows).push_back(i);
    }
    return {d.subset(train_rows), d.subset(test_rows)};
}

Dataset sparsify(const Dataset& train, std::size_t n, std::uint64_t seed) {
    if (n > train.size()) throw std::invalid_argument("sparsify: n exceeds dataset size");
    Rng rng(seed);
    const auto rows = rng.sample_without_replacement(train.size(), n);
    return train.subset(rows);
}

double mape(std::span<const double> pred, std::span<const double> actual) {
    if (pred.size() != actual.size()) throw std::invalid_argument("mape: length mismatch");
    if (pred.empty()) throw std::invalid_argument("mape: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!(actual[i] > 0.0)) throw std::domain_error("mape: actual must be positive");
        s += std::abs(actual[i] - pred[i]) / actual[i];
    }
    return s / static_cast<double>(pred.size());
}

std::vector<double> one_hot(std::size_t value, std::size_t cardinality) {
    if (value >= cardinality) throw std::out_of_range("one_hot: value out of range");
    std::vector<double> v(cardinality, 0.0);
    v[value] = 1.0;
    return v;
}

} // namespace ee
