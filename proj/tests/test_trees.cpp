#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eetab/trees.hpp"
#include "oracles.hpp"

#include <cmath>
#include <numeric>

using namespace ee;

namespace {

TreeData make_tree_data(std::size_t n, std::size_t features, std::uint64_t seed) {
    Rng rng(seed);
    TreeData d;
    d.columns.assign(features, std::vector<double>(n));
    d.targets.resize(n);
    for (std::size_t j = 0; j < features; ++j)
        for (std::size_t i = 0; i < n; ++i) d.columns[j][i] = rng.uniform(-3.0, 3.0);
    for (std::size_t i = 0; i < n; ++i) d.targets[i] = rng.uniform(0.0, 10.0);
    return d;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

void check_leaf_counts(const TreeNode& t, std::size_t min_leaf) {
    if (t.is_leaf()) {
        CHECK(t.count >= min_leaf);
        return;
    }
    check_leaf_counts(*t.left, min_leaf);
    check_leaf_counts(*t.right, min_leaf);
}

double tree_sse(const TreeNode& t, const TreeData& d) {
    double sse = 0.0;
    std::vector<double> x(d.feature_count());
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.feature_count(); ++j) x[j] = d.columns[j][i];
        const double r = d.targets[i] - predict_tree(t, x);
        sse += r * r;
    }
    return sse;
}

void check_leaf_means(const TreeNode& t, const TreeData& d,
                      const std::vector<std::size_t>& rows) {
    double mean = 0.0;
    for (const auto r : rows) mean += d.targets[r];
    mean /= double(rows.size());
    if (t.is_leaf()) {
        CHECK(std::abs(t.value - mean) < 1e-12 * (1.0 + std::abs(mean)));
        CHECK(t.count == rows.size());
        return;
    }
    std::vector<std::size_t> l, r;
    for (const auto row : rows)
        (d.columns[std::size_t(t.split_feature)][row] <= t.split_point ? l : r).push_back(row);
    check_leaf_means(*t.left, d, l);
    check_leaf_means(*t.right, d, r);
}

} // namespace

TEST_CASE("best_split: perfectly separable example") {
    TreeData d;
    d.columns = {{1.0, 2.0, 3.0, 4.0}};
    d.targets = {0.0, 0.0, 10.0, 10.0};
    const auto rows = iota_rows(4);
    const std::vector<std::size_t> feats{0};
    const auto s = best_split(d, rows, feats);
    REQUIRE(s.has_value());
    CHECK(s->feature == 0);
    CHECK(s->point == 2.5);
    CHECK(s->sse_after == 0.0);
}

TEST_CASE("best_split: constant targets produce no split") {
    TreeData d;
    d.columns = {{1.0, 2.0, 3.0, 4.0}};
    d.targets = {5.0, 5.0, 5.0, 5.0};
    const auto rows = iota_rows(4);
    const std::vector<std::size_t> feats{0};
    CHECK_FALSE(best_split(d, rows, feats).has_value());

    CHECK_THROWS(static_cast<void>(best_split(d, {}, feats)));
}

TEST_CASE("best_split equals exhaustive enumeration on random instances") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto d = make_tree_data(50, 3, seed + 100);
        const auto rows = iota_rows(50);
        const std::vector<std::size_t> feats{0, 1, 2};
        const auto got = best_split(d, rows, feats);
        const auto want = oracle::brute_force_split(d, rows, feats);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(got->feature == want->feature);
            CHECK(got->point == want->point);
            CHECK(std::abs(got->sse_after - want->sse_after) < 1e-12 * (1.0 + want->sse_after));
        }
    }
}

TEST_CASE("best_split honors min_samples_leaf") {
    const auto d = make_tree_data(20, 2, 7);
    const auto rows = iota_rows(20);
    const std::vector<std::size_t> feats{0, 1};
    const auto s = best_split(d, rows, feats, 8);
    if (s) {
        std::size_t left = 0;
        for (std::size_t i = 0; i < 20; ++i)
            if (d.columns[s->feature][i] <= s->point) ++left;
        CHECK(left >= 8);
        CHECK(20 - left >= 8);
    }
    const auto o = oracle::brute_force_split(d, rows, feats, 8);
    CHECK(s.has_value() == o.has_value());
}

TEST_CASE("grow_tree: depth zero gives the global mean") {
    const auto d = make_tree_data(30, 2, 9);
    Rng rng(1);
    const TreeConfig cfg{0, 2, 1, 0, std::nullopt};
    const auto t = grow_tree(d, cfg, rng);
    REQUIRE(t->is_leaf());
    double mean = 0.0;
    for (const double y : d.targets) mean += y;
    mean /= double(d.size());
    CHECK(t->value == doctest::Approx(mean).epsilon(1e-12));
    CHECK(t->count == 30);
}

TEST_CASE("grow_tree: unlimited depth memorizes distinct rows") {
    const auto d = make_tree_data(60, 2, 11);
    Rng rng(2);
    const TreeConfig cfg; // unlimited
    const auto t = grow_tree(d, cfg, rng);
    CHECK(tree_sse(*t, d) < 1e-18);

    std::vector<double> x(2);
    for (std::size_t i = 0; i < d.size(); ++i) {
        x[0] = d.columns[0][i];
        x[1] = d.columns[1][i];
        CHECK(predict_tree(*t, x) == doctest::Approx(d.targets[i]).epsilon(1e-12));
    }
}

TEST_CASE("grow_tree: leaf values are region means and min leaf holds") {
    const auto d = make_tree_data(200, 3, 13);
    Rng rng(3);
    const TreeConfig cfg{6, 2, 5, 0, std::nullopt};
    const auto t = grow_tree(d, cfg, rng);
    check_leaf_counts(*t, 5);
    check_leaf_means(*t, d, iota_rows(200));
}

TEST_CASE("predict_tree: boundary routes left") {
    TreeNode root;
    root.split_feature = 0;
    root.split_point = 2.5;
    root.left = std::make_unique<TreeNode>();
    root.left->value = -1.0;
    root.right = std::make_unique<TreeNode>();
    root.right->value = 1.0;
    const std::vector<double> at_boundary{2.5};
    CHECK(predict_tree(root, at_boundary) == -1.0);
    const std::vector<double> above{2.5000001};
    CHECK(predict_tree(root, above) == 1.0);

    TreeNode leaf;
    leaf.value = 7.5;
    const std::vector<double> anything{123.0};
    CHECK(predict_tree(leaf, anything) == 7.5);
}

TEST_CASE("prune: alpha 0 is the identity, huge alpha collapses to a leaf") {
    const auto d = make_tree_data(80, 3, 17);
    Rng rng(4);
    auto t = grow_tree(d, TreeConfig{5, 2, 1, 0, std::nullopt}, rng);
    const auto before = dump_tree(*t);
    t = prune(std::move(t), 0.0, d);
    CHECK(dump_tree(*t) == before);

    t = prune(std::move(t), 1e18, d);
    CHECK(t->is_leaf());
}

TEST_CASE("prune attains the enumeration minimum of the cost-complexity measure") {
    std::size_t tested = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto d = make_tree_data(40, 2, 200 + seed);
        Rng rng(seed);
        // small trees: <= 15 nodes
        const auto grown = grow_tree(d, TreeConfig{3, 4, 2, 0, std::nullopt}, rng);
        if (grown->node_count() > 15) continue;
        ++tested;
        for (const double alpha : {0.01, 0.1, 1.0}) {
            auto copy = parse_tree(dump_tree(*grown));
            const auto pruned = prune(std::move(copy), alpha, d);
            const double got = tree_sse(*pruned, d) + alpha * double(pruned->leaf_count());
            const double want = oracle::min_cost_complexity_by_enumeration(*grown, alpha, d);
            CHECK(got == doctest::Approx(want).epsilon(1e-9));
        }
    }
    CHECK(tested > 0);
}

TEST_CASE("random forest: single tree without bootstrap equals a grown tree") {
    const auto d = make_tree_data(100, 3, 19);
    const TreeConfig cfg{4, 2, 1, 0, std::nullopt};
    const auto f = fit_random_forest(d, cfg, 1, 77, false);
    Rng rng = Rng(77).child(0);
    const auto t = grow_tree(d, cfg, rng);
    CHECK(dump_tree(*f.trees[0]) == dump_tree(*t));
}

TEST_CASE("random forest determinism and prediction identities") {
    const auto d = make_tree_data(150, 3, 23);
    const TreeConfig cfg{6, 2, 1, 2, std::nullopt}; // per-node feature subsets of 2
    const auto f1 = fit_random_forest(d, cfg, 20, 5);
    const auto f2 = fit_random_forest(d, cfg, 20, 5);
    REQUIRE(f1.trees.size() == 20);
    for (std::size_t t = 0; t < 20; ++t)
        CHECK(dump_tree(*f1.trees[t]) == dump_tree(*f2.trees[t]));

    const std::vector<double> x{0.1, -0.4, 1.7};
    double s = 0.0;
    for (const auto& t : f1.trees) s += predict_tree(*t, x);
    CHECK(std::abs(predict_forest(f1, x) - s / 20.0) < 1e-12);

    // order invariance: the mean does not depend on tree order
    Forest reversed;
    reversed.bootstrap_n = f1.bootstrap_n;
    for (std::size_t t = 20; t-- > 0;)
        reversed.trees.push_back(parse_tree(dump_tree(*f1.trees[t])));
    CHECK(predict_forest(reversed, x) == doctest::Approx(predict_forest(f1, x)).epsilon(1e-12));

    // two handmade trees predicting 2 and 4 average to 3
    Forest two;
    two.trees.push_back(std::make_unique<TreeNode>());
    two.trees.push_back(std::make_unique<TreeNode>());
    two.trees[0]->value = 2.0;
    two.trees[1]->value = 4.0;
    CHECK(predict_forest(two, x) == 3.0);
}

TEST_CASE("benchmark-shape forest configuration") {
    // depth-35 / 200-tree regime at desk scale: verify the shape knobs
    const auto d = make_tree_data(120, 3, 29);
    const TreeConfig cfg{35, 2, 1, 0, std::nullopt};
    const auto f = fit_random_forest(d, cfg, 200, 3);
    CHECK(f.trees.size() == 200);
    CHECK(f.bootstrap_n == d.size());
}

TEST_CASE("gbt: single depth-zero round predicts the global mean") {
    const auto d = make_tree_data(50, 2, 31);
    BoostConfig cfg;
    cfg.rounds = 1;
    cfg.shrinkage = 1.0;
    cfg.row_subsample = 1.0;
    cfg.col_subsample = 1.0;
    cfg.tree.max_depth = 0;
    const auto m = fit_gbt(d, cfg, 1);
    double mean = 0.0;
    for (const double y : d.targets) mean += y;
    mean /= double(d.size());
    const std::vector<double> x{0.0, 0.0};
    // base plus a depth-0 tree fitted to zero-mean residuals
    CHECK(predict_gbt(m, x) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("gbt: full-depth boosting drives residuals to zero") {
    const auto d = make_tree_data(100, 2, 37);
    BoostConfig cfg;
    cfg.rounds = 3;
    cfg.shrinkage = 1.0;
    cfg.row_subsample = 1.0;
    cfg.col_subsample = 1.0;
    cfg.tree = TreeConfig{}; // unlimited depth
    const auto m = fit_gbt(d, cfg, 2);
    std::vector<double> x(2);
    double max_res = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        x[0] = d.columns[0][i];
        x[1] = d.columns[1][i];
        max_res = std::max(max_res, std::abs(d.targets[i] - predict_gbt(m, x)));
    }
    CHECK(max_res < 1e-9);
}

TEST_CASE("gbt: prediction identities and monotone training SSE") {
    const auto d = make_tree_data(120, 3, 41);
    BoostConfig cfg;
    cfg.rounds = 20;
    cfg.shrinkage = 0.5;
    cfg.row_subsample = 1.0;
    cfg.col_subsample = 1.0;
    cfg.tree.max_depth = 3;
    const auto m = fit_gbt(d, cfg, 3);

    // explicit loop-sum oracle
    const std::vector<double> x{0.3, 0.4, -0.1};
    double want = m.base_score;
    for (const auto& t : m.trees) want += m.shrinkage * predict_tree(*t, x);
    CHECK(std::abs(predict_gbt(m, x) - want) < 1e-12);

    // zero rounds -> base score
    BoostModel base_only;
    base_only.base_score = 4.2;
    CHECK(predict_gbt(base_only, x) == 4.2);

    // training SSE is nonincreasing in rounds with subsampling off
    std::vector<double> xs(3);
    double prev = 1e300;
    for (std::size_t upto = 0; upto <= m.trees.size(); ++upto) {
        double sse = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            for (std::size_t j = 0; j < 3; ++j) xs[j] = d.columns[j][i];
            double pred = m.base_score;
            for (std::size_t k = 0; k < upto; ++k)
                pred += m.shrinkage * predict_tree(*m.trees[k], xs);
            const double r = d.targets[i] - pred;
            sse += r * r;
        }
        CHECK(sse <= prev * (1.0 + 1e-12));
        prev = sse;
    }

    // reference-regime knobs are the defaults
    BoostConfig table;
    CHECK(table.rounds == 3000);
    CHECK(table.shrinkage == 0.02);
    CHECK(table.tree.max_depth == 10);
    CHECK(table.row_subsample == 0.7);
    CHECK(table.col_subsample == 0.7);

    // determinism with subsampling on
    BoostConfig sub = cfg;
    sub.rounds = 5;
    sub.row_subsample = 0.7;
    sub.col_subsample = 0.7;
    const auto m1 = fit_gbt(d, sub, 9);
    const auto m2 = fit_gbt(d, sub, 9);
    for (std::size_t t = 0; t < m1.trees.size(); ++t)
        CHECK(dump_tree(*m1.trees[t]) == dump_tree(*m2.trees[t]));
}

TEST_CASE("tree dump / parse round trip") {
    const auto d = make_tree_data(60, 2, 43);
    Rng rng(5);
    const auto t = grow_tree(d, TreeConfig{4, 2, 1, 0, std::nullopt}, rng);
    const auto text = dump_tree(*t);
    CHECK(text.rfind("tree v1\n", 0) == 0);
    const auto parsed = parse_tree(text);
    CHECK(dump_tree(*parsed) == text);

    std::vector<double> x(2);
    for (std::size_t i = 0; i < d.size(); ++i) {
        x[0] = d.columns[0][i];
        x[1] = d.columns[1][i];
        CHECK(predict_tree(*parsed, x) == predict_tree(*t, x));
    }

    CHECK_THROWS(static_cast<void>(parse_tree("bogus v9\n")));
}
