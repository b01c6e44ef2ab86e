#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ee {

enum class FeatureKind { categorical, binary };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::categorical;
    std::size_t cardinality = 0;    // m_i
    std::size_t embedding_dim = 0;  // D_i, 1 <= D_i <= m_i - 1 for m_i >= 2
    std::vector<std::string> labels; // index -> raw label, dense in [0, m_i)

    std::optional<std::size_t> index_of(const std::string& label) const;
};

struct FeatureSchema {
    std::vector<FeatureSpec> features;

    std::size_t feature_count() const { return features.size(); }
    std::size_t total_embedding_dim() const;
    std::size_t total_cardinality() const;
    std::optional<std::size_t> feature_index(const std::string& name) const;

    // Throws if a dimension bound or dictionary invariant is violated.
    void validate() const;
};

struct SampleView {
    std::span<const std::int32_t> x;
    double y;
};

// Immutable after construction; columnar storage, safe to share across threads.
class Dataset {
public:
    Dataset() = default;
    Dataset(FeatureSchema schema, std::vector<std::int32_t> xs, std::vector<double> ys,
            std::vector<std::int32_t> dates);

    const FeatureSchema& schema() const { return schema_; }
    std::size_t size() const { return ys_.size(); }
    std::size_t feature_count() const { return schema_.feature_count(); }

    SampleView sample(std::size_t i) const {
        return {{xs_.data() + i * schema_.feature_count(), schema_.feature_count()}, ys_[i]};
    }
    std::span<const std::int32_t> x(std::size_t i) const {
        return {xs_.data() + i * schema_.feature_count(), schema_.feature_count()};
    }
    std::int32_t value(std::size_t row, std::size_t feature) const {
        return xs_[row * schema_.feature_count() + feature];
    }
    double target(std::size_t i) const { return ys_[i]; }
    std::int32_t date(std::size_t i) const { return dates_[i]; } // days since 1970-01-01
    std::span<const double> targets() const { return ys_; }

    Dataset subset(std::span<const std::size_t> rows) const;

private:
    FeatureSchema schema_;
    std::vector<std::int32_t> xs_; // row-major, size = rows * features
    std::vector<double> ys_;
    std::vector<std::int32_t> dates_;
};

enum class SplitMode { temporal, shuffled };

struct TargetTransform {
    double sale_max = 0.0; // max Sales over the training portion

    double transform(double sales) const;
    double inverse(double v) const;
};

TargetTransform fit_target_transform(const Dataset& train);

struct EvalReport {
    std::string method;
    double mape = 0.0;
    bool with_embeddings = false;
    SplitMode split_mode = SplitMode::shuffled;
    std::int64_t seed = 0;
    double runtime_sec = 0.0;
};

// Temporal mode splits at a date boundary (whole days stay together, first
// ~(1-f) of the distinct days train); shuffled mode applies a seeded
// permutation before the cut.
std::pair<Dataset, Dataset> split(const Dataset& d, SplitMode mode, double test_fraction,
                                  std::uint64_t seed);

// n distinct rows sampled without replacement, seeded.
Dataset sparsify(const Dataset& train, std::size_t n, std::uint64_t seed);

double mape(std::span<const double> pred, std::span<const double> actual);

std::vector<double> one_hot(std::size_t value, std::size_t cardinality);

} // namespace ee
