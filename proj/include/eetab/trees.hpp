#pragma once

#include "eetab/rng.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ee {

// Feature-major training view: columns[j][i] is feature j of sample i.
struct TreeData {
    std::vector<std::vector<double>> columns;
    std::vector<double> targets;

    std::size_t size() const { return targets.size(); }
    std::size_t feature_count() const { return columns.size(); }
};

struct TreeNode {
    // Internal: split_feature >= 0, route x[j] <= split_point left, else right.
    int split_feature = -1;
    double split_point = 0.0;
    std::unique_ptr<TreeNode> left, right;
    // Leaf: value = mean target of the training region, count = |R_m|.
    double value = 0.0;
    std::size_t count = 0;

    bool is_leaf() const { return split_feature < 0; }
    std::size_t leaf_count() const;
    std::size_t node_count() const;
};

struct TreeConfig {
    std::size_t max_depth = SIZE_MAX;
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    std::size_t features_per_split = 0; // 0 = all
    std::optional<double> prune_alpha;
};

struct SplitChoice {
    std::size_t feature = 0;
    double point = 0.0;
    double sse_after = 0.0;
};

// Exact minimizer of the two-leaf SSE over all candidate features and all
// midpoints between consecutive distinct sorted values. Ties break toward the
// lowest feature index, then the lowest split point. Returns nullopt when no
// split reduces the SSE or every split violates min_samples_leaf.
std::optional<SplitChoice> best_split(const TreeData& data, std::span<const std::size_t> rows,
                                      std::span<const std::size_t> candidate_features,
                                      std::size_t min_samples_leaf = 1);

std::unique_ptr<TreeNode> grow_tree(const TreeData& data, std::span<const std::size_t> rows,
                                    const TreeConfig& cfg, Rng& rng);
std::unique_ptr<TreeNode> grow_tree(const TreeData& data, const TreeConfig& cfg, Rng& rng);

// Weakest-link cost-complexity pruning of C_alpha = SSE + alpha * |leaves|.
// alpha = 0 leaves the tree unchanged.
std::unique_ptr<TreeNode> prune(std::unique_ptr<TreeNode> tree, double alpha,
                                const TreeData& data);

double predict_tree(const TreeNode& t, std::span<const double> x);

struct Forest {
    std::vector<std::unique_ptr<TreeNode>> trees;
    std::size_t bootstrap_n = 0;
    std::uint64_t seed = 0;
};

// N trees, each grown on a seeded bootstrap (n draws with replacement,
// n = |data|) with per-node feature subsampling per cfg. Trees are independent
// and fitted in parallel from per-tree substreams.
Forest fit_random_forest(const TreeData& data, const TreeConfig& cfg, std::size_t n_trees,
                         std::uint64_t seed, bool bootstrap = true);

double predict_forest(const Forest& f, std::span<const double> x);

struct BoostConfig {
    TreeConfig tree{10, 2, 1, 0, std::nullopt}; // depth-10 trees
    std::size_t rounds = 3000;
    double shrinkage = 0.02;      // eta
    double row_subsample = 0.7;   // fraction per round, without replacement
    double col_subsample = 0.7;   // fraction of features per tree
};

struct BoostModel {
    double base_score = 0.0;
    double shrinkage = 1.0;
    std::vector<std::unique_ptr<TreeNode>> trees;
};

// First-order gradient boosting on squared loss: every round fits a tree to
// the residuals y - f_{n-1}(x) of the current model.
BoostModel fit_gbt(const TreeData& data, const BoostConfig& cfg, std::uint64_t seed);

double predict_gbt(const BoostModel& m, std::span<const double> x);

// Versioned text dump, one node per line (depth-first preorder).
std::string dump_tree(const TreeNode& t);
std::unique_ptr<TreeNode> parse_tree(const std::string& text);

} // namespace ee
