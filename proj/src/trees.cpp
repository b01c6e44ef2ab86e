#include "eetab/trees.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ee {

namespace {

using Columns = std::span<const std::vector<double>>;

// A split must reduce the SSE by more than this slack to be accepted;
// keeps exactly-constant targets from splitting on rounding noise.
double reduction_slack(double sse_parent) { return 1e-12 * (1.0 + sse_parent); }

struct FeatureBest {
    bool found = false;
    double point = 0.0;
    double sse = 0.0;
};

FeatureBest scan_feature(const std::vector<double>& col, std::span<const double> targets,
                         std::span<const std::size_t> rows, std::size_t min_leaf,
                         std::vector<std::pair<double, double>>& scratch) {
    const std::size_t n = rows.size();
    scratch.clear();
    scratch.reserve(n);
    for (const std::size_t r : rows) scratch.emplace_back(col[r], targets[r]);
    std::sort(scratch.begin(), scratch.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    double total_sum = 0.0, total_sq = 0.0;
    for (const auto& [v, y] : scratch) {
        total_sum += y;
        total_sq += y * y;
    }

    FeatureBest best;
    double lsum = 0.0, lsq = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        lsum += scratch[k - 1].second;
        lsq += scratch[k - 1].second * scratch[k - 1].second;
        if (scratch[k - 1].first == scratch[k].first) continue; // no boundary here
        if (k < min_leaf || n - k < min_leaf) continue;
        const double rsum = total_sum - lsum, rsq = total_sq - lsq;
        const double sse_l = std::max(0.0, lsq - lsum * lsum / double(k));
        const double sse_r = std::max(0.0, rsq - rsum * rsum / double(n - k));
        const double sse = sse_l + sse_r;
        const double point = 0.5 * (scratch[k - 1].first + scratch[k].first);
        if (!best.found || sse < best.sse || (sse == best.sse && point < best.point)) {
            best.found = true;
            best.sse = sse;
            best.point = point;
        }
    }
    return best;
}

std::optional<SplitChoice> best_split_core(Columns columns, std::span<const double> targets,
                                           std::span<const std::size_t> rows,
                                           std::span<const std::size_t> candidate_features,
                                           std::size_t min_leaf) {
    if (rows.size() < 2) return std::nullopt;
    if (candidate_features.empty()) return std::nullopt;

    std::vector<std::size_t> feats(candidate_features.begin(), candidate_features.end());
    std::sort(feats.begin(), feats.end());
    feats.erase(std::unique(feats.begin(), feats.end()), feats.end());

    double psum = 0.0, psq = 0.0;
    for (const std::size_t r : rows) {
        psum += targets[r];
        psq += targets[r] * targets[r];
    }
    const double sse_parent = std::max(0.0, psq - psum * psum / double(rows.size()));

    std::vector<FeatureBest> per_feature(feats.size());
#pragma omp parallel
    {
        std::vector<std::pair<double, double>> scratch;
#pragma omp for schedule(dynamic)
        for (long long fi = 0; fi < static_cast<long long>(feats.size()); ++fi)
            per_feature[static_cast<std::size_t>(fi)] = scan_feature(
                columns[feats[static_cast<std::size_t>(fi)]], targets, rows, min_leaf, scratch);
    }

    // Reduce in ascending feature order: strict < keeps the lowest index on ties.
    std::optional<SplitChoice> best;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const auto& fb = per_feature[i];
        if (!fb.found) continue;
        if (!best || fb.sse < best->sse_after) best = SplitChoice{feats[i], fb.point, fb.sse};
    }
    if (!best) return std::nullopt;
    if (sse_parent - best->sse_after <= reduction_slack(sse_parent)) return std::nullopt;
    return best;
}

std::unique_ptr<TreeNode> grow_core(Columns columns, std::span<const double> targets,
                                    std::vector<std::size_t>& rows,
                                    std::span<const std::size_t> base_features,
                                    const TreeConfig& cfg, Rng& rng, std::size_t depth) {
    auto node = std::make_unique<TreeNode>();
    node->count = rows.size();
    double sum = 0.0;
    for (const std::size_t r : rows) sum += targets[r];
    node->value = sum / double(rows.size());

    if (depth >= cfg.max_depth || rows.size() < cfg.min_samples_split ||
        rows.size() < 2 * cfg.min_samples_leaf)
        return node;

    std::vector<std::size_t> picked;
    std::span<const std::size_t> candidates = base_features;
    if (cfg.features_per_split > 0 && cfg.features_per_split < base_features.size()) {
        const auto sel = rng.sample_without_replacement(base_features.size(),
                                                        cfg.features_per_split);
        picked.reserve(sel.size());
        for (const std::size_t i : sel) picked.push_back(base_features[i]);
        candidates = picked;
    }

    const auto choice =
        best_split_core(columns, targets, rows, candidates, cfg.min_samples_leaf);
    if (!choice) return node;

    node->split_feature = static_cast<int>(choice->feature);
    node->split_point = choice->point;
    std::vector<std::size_t> left_rows, right_rows;
    left_rows.reserve(rows.size());
    for (const std::size_t r : rows)
        (columns[choice->feature][r] <= choice->point ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    node->left = grow_core(columns, targets, left_rows, base_features, cfg, rng, depth + 1);
    node->right = grow_core(columns, targets, right_rows, base_features, cfg, rng, depth + 1);
    return node;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

std::vector<std::size_t> all_features(std::size_t n) { return all_rows(n); }

} // namespace

std::size_t TreeNode::leaf_count() const {
    if (is_leaf()) return 1;
    return left->leaf_count() + right->leaf_count();
}

std::size_t TreeNode::node_count() const {
    if (is_leaf()) return 1;
    return 1 + left->node_count() + right->node_count();
}

std::optional<SplitChoice> best_split(const TreeData& data, std::span<const std::size_t> rows,
                                      std::span<const std::size_t> candidate_features,
                                      std::size_t min_samples_leaf) {
    if (rows.empty()) throw std::invalid_argument("best_split: empty input");
    return best_split_core(data.columns, data.targets, rows, candidate_features,
                           min_samples_leaf);
}

std::unique_ptr<TreeNode> grow_tree(const TreeData& data, std::span<const std::size_t> rows,
                                    const TreeConfig& cfg, Rng& rng) {
    if (rows.empty()) throw std::invalid_argument("grow_tree: empty input");
    std::vector<std::size_t> r(rows.begin(), rows.end());
    const auto feats = all_features(data.feature_count());
    return grow_core(data.columns, data.targets, r, feats, cfg, rng, 0);
}

std::unique_ptr<TreeNode> grow_tree(const TreeData& data, const TreeConfig& cfg, Rng& rng) {
    auto rows = all_rows(data.size());
    return grow_tree(data, rows, cfg, rng);
}

double predict_tree(const TreeNode& t, std::span<const double> x) {
    const TreeNode* node = &t;
    while (!node->is_leaf()) {
        if (static_cast<std::size_t>(node->split_feature) >= x.size())
            throw std::invalid_argument("predict_tree: sample missing split feature");
        node = x[std::size_t(node->split_feature)] <= node->split_point ? node->left.get()
                                                                        : node->right.get();
    }
    return node->value;
}

namespace {

struct PruneInfo {
    TreeNode* node;
    double sse_as_leaf = 0.0;   // SSE if this node were collapsed
    double sse_subtree = 0.0;   // current SSE of the leaves below
    std::size_t leaves = 0;
};

struct NodeStats {
    double sse = 0.0;
    double mean = 0.0;
};

void route_sse(TreeNode* node, Columns columns, std::span<const double> targets,
               const std::vector<std::size_t>& rows,
               std::unordered_map<const TreeNode*, NodeStats>& stats_of) {
    double sum = 0.0, sq = 0.0;
    for (const std::size_t r : rows) {
        sum += targets[r];
        sq += targets[r] * targets[r];
    }
    NodeStats st;
    st.mean = rows.empty() ? 0.0 : sum / double(rows.size());
    st.sse = rows.empty() ? 0.0 : std::max(0.0, sq - sum * sum / double(rows.size()));
    stats_of[node] = st;
    if (node->is_leaf()) return;
    std::vector<std::size_t> l, r;
    for (const std::size_t row : rows)
        (columns[std::size_t(node->split_feature)][row] <= node->split_point ? l : r)
            .push_back(row);
    route_sse(node->left.get(), columns, targets, l, stats_of);
    route_sse(node->right.get(), columns, targets, r, stats_of);
}

// Preorder internal-node stats for the current (partially pruned) tree.
std::pair<double, std::size_t> collect(
    TreeNode* node, const std::unordered_map<const TreeNode*, NodeStats>& stats_of,
    std::vector<PruneInfo>& infos) {
    const double own_sse = stats_of.at(node).sse;
    if (node->is_leaf()) return {own_sse, 1};
    const std::size_t slot = infos.size();
    infos.push_back({node, own_sse, 0.0, 0});
    const auto l = collect(node->left.get(), stats_of, infos);
    const auto r = collect(node->right.get(), stats_of, infos);
    infos[slot].sse_subtree = l.first + r.first;
    infos[slot].leaves = l.second + r.second;
    return {l.first + r.first, l.second + r.second};
}

} // namespace

std::unique_ptr<TreeNode> prune(std::unique_ptr<TreeNode> tree, double alpha,
                                const TreeData& data) {
    if (!tree || tree->is_leaf() || alpha <= 0.0) return tree;

    // Per-node statistics with the training samples routed through the tree.
    std::unordered_map<const TreeNode*, NodeStats> stats_of;
    auto rows = all_rows(data.size());
    route_sse(tree.get(), data.columns, data.targets, rows, stats_of);

    // Weakest-link: repeatedly collapse the internal node with the smallest
    // per-leaf SSE increase while that lowers C_alpha. Collapsing node t
    // changes C_alpha by (leaves-1) * (g - alpha), so only g < alpha helps.
    while (!tree->is_leaf()) {
        std::vector<PruneInfo> infos;
        collect(tree.get(), stats_of, infos);

        const PruneInfo* weakest = nullptr;
        double weakest_g = 0.0;
        for (const auto& info : infos) {
            const double g =
                (info.sse_as_leaf - info.sse_subtree) / double(info.leaves - 1);
            if (!weakest || g < weakest_g) {
                weakest = &info;
                weakest_g = g;
            }
        }
        if (!weakest || weakest_g >= alpha) break;
        weakest->node->left.reset();
        weakest->node->right.reset();
        weakest->node->split_feature = -1;
        weakest->node->value = stats_of.at(weakest->node).mean;
    }
    return tree;
}

Forest fit_random_forest(const TreeData& data, const TreeConfig& cfg, std::size_t n_trees,
                         std::uint64_t seed, bool bootstrap) {
    if (n_trees < 1) throw std::invalid_argument("fit_random_forest: need at least one tree");
    if (data.size() == 0) throw std::invalid_argument("fit_random_forest: empty data");
    Forest f;
    f.bootstrap_n = data.size();
    f.seed = seed;
    f.trees.resize(n_trees);
    const Rng base(seed);
#pragma omp parallel for schedule(dynamic)
    for (long long ti = 0; ti < static_cast<long long>(n_trees); ++ti) {
        const auto t = static_cast<std::size_t>(ti);
        Rng rng = base.child(t);
        std::vector<std::size_t> rows;
        if (bootstrap) {
            rows.resize(data.size());
            for (auto& r : rows) r = static_cast<std::size_t>(rng.below(data.size()));
        } else {
            rows = all_rows(data.size());
        }
        const auto feats = all_features(data.feature_count());
        f.trees[t] = grow_core(data.columns, data.targets, rows, feats, cfg, rng, 0);
    }
    return f;
}

double predict_forest(const Forest& f, std::span<const double> x) {
    double s = 0.0;
    for (const auto& t : f.trees) s += predict_tree(*t, x);
    return s / double(f.trees.size());
}

BoostModel fit_gbt(const TreeData& data, const BoostConfig& cfg, std::uint64_t seed) {
    if (cfg.rounds < 1) throw std::invalid_argument("fit_gbt: need at least one round");
    if (!(cfg.shrinkage > 0.0 && cfg.shrinkage <= 1.0))
        throw std::invalid_argument("fit_gbt: shrinkage must be in (0,1]");
    const std::size_t n = data.size(), nf = data.feature_count();
    if (n == 0) throw std::invalid_argument("fit_gbt: empty data");

    BoostModel model;
    model.shrinkage = cfg.shrinkage;
    double sum = 0.0;
    for (const double y : data.targets) sum += y;
    model.base_score = sum / double(n);

    std::vector<double> current(n, model.base_score);
    std::vector<double> residuals(n);
    const Rng base(seed);

    for (std::size_t round = 0; round < cfg.rounds; ++round) {
        Rng rng = base.child(round);

        for (std::size_t i = 0; i < n; ++i) residuals[i] = data.targets[i] - current[i];

        std::vector<std::size_t> rows;
        if (cfg.row_subsample < 1.0) {
            const auto k = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(cfg.row_subsample * double(n))));
            rows = rng.sample_without_replacement(n, k);
        } else {
            rows = all_rows(n);
        }

        std::vector<std::size_t> feats;
        if (cfg.col_subsample < 1.0) {
            const auto k = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(cfg.col_subsample * double(nf))));
            auto sel = rng.sample_without_replacement(nf, k);
            std::sort(sel.begin(), sel.end());
            feats = std::move(sel);
        } else {
            feats = all_features(nf);
        }

        auto tree = grow_core(data.columns, residuals, rows, feats, cfg.tree, rng, 0);

#pragma omp parallel
        {
            std::vector<double> x(nf);
#pragma omp for schedule(static)
            for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
                const auto i = static_cast<std::size_t>(ii);
                for (std::size_t j = 0; j < nf; ++j) x[j] = data.columns[j][i];
                current[i] += cfg.shrinkage * predict_tree(*tree, x);
            }
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

double predict_gbt(const BoostModel& m, std::span<const double> x) {
    double s = m.base_score;
    for (const auto& t : m.trees) s += m.shrinkage * predict_tree(*t, x);
    return s;
}

namespace {

void dump_node(const TreeNode& t, std::size_t& id, std::ostringstream& os) {
    const std::size_t my_id = id++;
    char buf[64];
    if (t.is_leaf()) {
        std::snprintf(buf, sizeof buf, "%.17g", t.value);
        os << my_id << " leaf " << buf << " " << t.count << "\n";
    } else {
        std::snprintf(buf, sizeof buf, "%.17g", t.split_point);
        os << my_id << " internal " << t.split_feature << " " << buf << " " << t.count << "\n";
        dump_node(*t.left, id, os);
        dump_node(*t.right, id, os);
    }
}

std::unique_ptr<TreeNode> parse_node(std::istringstream& is) {
    std::size_t id = 0;
    std::string kind;
    if (!(is >> id >> kind)) throw std::runtime_error("parse_tree: truncated dump");
    auto node = std::make_unique<TreeNode>();
    if (kind == "leaf") {
        is >> node->value >> node->count;
    } else if (kind == "internal") {
        is >> node->split_feature >> node->split_point >> node->count;
        node->left = parse_node(is);
        node->right = parse_node(is);
    } else {
        throw std::runtime_error("parse_tree: unknown node kind '" + kind + "'");
    }
    if (!is) throw std::runtime_error("parse_tree: malformed dump");
    return node;
}

} // namespace

std::string dump_tree(const TreeNode& t) {
    std::ostringstream os;
    os << "tree v1\n";
    std::size_t id = 0;
    dump_node(t, id, os);
    return os.str();
}

std::unique_ptr<TreeNode> parse_tree(const std::string& text) {
    std::istringstream is(text);
    std::string header, version;
    is >> header >> version;
    if (header != "tree" || version != "v1")
        throw std::runtime_error("parse_tree: unsupported dump header");
    return parse_node(is);
}

} // namespace ee
