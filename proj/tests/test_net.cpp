#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eetab/net.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>

using namespace ee;

namespace {

FeatureSchema make_schema(std::vector<std::pair<std::size_t, std::size_t>> dims) {
    FeatureSchema s;
    std::size_t i = 0;
    for (const auto& [m, d] : dims) {
        FeatureSpec f;
        f.name = "f" + std::to_string(i++);
        f.cardinality = m;
        f.embedding_dim = d;
        for (std::size_t a = 0; a < m; ++a) f.labels.push_back("v" + std::to_string(a));
        s.features.push_back(std::move(f));
    }
    return s;
}

Dataset make_dataset(const FeatureSchema& schema, std::size_t rows, std::uint64_t seed,
                     double y_lo = 100.0, double y_hi = 10000.0) {
    Rng rng(seed);
    const std::size_t nf = schema.feature_count();
    std::vector<std::int32_t> xs(rows * nf);
    std::vector<double> ys(rows);
    std::vector<std::int32_t> dates(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t f = 0; f < nf; ++f)
            xs[i * nf + f] =
                static_cast<std::int32_t>(rng.below(schema.features[f].cardinality));
        ys[i] = rng.uniform(y_lo, y_hi);
        dates[i] = static_cast<std::int32_t>(16000 + i);
    }
    return Dataset(schema, std::move(xs), std::move(ys), std::move(dates));
}

void zero_params(Network& n) {
    for (auto& v : n.param_views())
        for (auto& p : v) p = 0.0;
}

std::vector<std::int32_t> gather_rows(const Dataset& d) {
    std::vector<std::int32_t> xs(d.size() * d.feature_count());
    for (std::size_t i = 0; i < d.size(); ++i)
        std::memcpy(xs.data() + i * d.feature_count(), d.x(i).data(),
                    d.feature_count() * sizeof(std::int32_t));
    return xs;
}

bool params_equal(const Network& a, const Network& b) {
    const auto va = a.param_views(), vb = b.param_views();
    if (va.size() != vb.size()) return false;
    for (std::size_t t = 0; t < va.size(); ++t) {
        if (va[t].size() != vb[t].size()) return false;
        for (std::size_t j = 0; j < va[t].size(); ++j)
            if (va[t][j] != vb[t][j]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("embed_lookup") {
    EmbeddingMatrix e{0, Matrix::identity(3)};
    CHECK(embed_lookup(e, 1) == std::vector<double>{0.0, 1.0, 0.0});

    Rng rng(4);
    EmbeddingMatrix r{0, Matrix(4, 2)};
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 2; ++b) r.w(a, b) = rng.normal();
    for (std::size_t cat = 0; cat < 4; ++cat) {
        const auto row = embed_lookup(r, std::int64_t(cat));
        // identical to one_hot(cat) * w
        for (std::size_t b = 0; b < 2; ++b) {
            double want = 0.0;
            for (std::size_t a = 0; a < 4; ++a) want += (a == cat ? 1.0 : 0.0) * r.w(a, b);
            CHECK(std::abs(row[b] - want) < 1e-12);
        }
        CHECK(row == std::vector<double>{r.w(cat, 0), r.w(cat, 1)});
    }

    CHECK_THROWS(embed_lookup(r, 4));
    CHECK_THROWS(embed_lookup(r, -1));
    const auto mean = embed_lookup(r, 99, true);
    for (std::size_t b = 0; b < 2; ++b) {
        double want = 0.0;
        for (std::size_t a = 0; a < 4; ++a) want += r.w(a, b);
        CHECK(mean[b] == doctest::Approx(want / 4.0).epsilon(1e-12));
    }
}

TEST_CASE("forward: zero weights give sigmoid(0)") {
    const auto schema = make_schema({{3, 2}, {4, 2}});
    Rng rng(1);
    Network n(schema, {InputMode::embed, 8, 4}, rng);
    zero_params(n);
    const std::int32_t x[2] = {1, 3};
    CHECK(forward(n, {x, 2}) == 0.5);
}

TEST_CASE("forward output lies strictly inside (0,1)") {
    const auto schema = make_schema({{5, 3}, {7, 4}});
    Rng rng(2);
    Network n(schema, {InputMode::embed, 16, 8}, rng);
    Rng xr(3);
    for (int i = 0; i < 200; ++i) {
        const std::int32_t x[2] = {std::int32_t(xr.below(5)), std::int32_t(xr.below(7))};
        const double p = forward(n, {x, 2});
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
}

TEST_CASE("forward matches a hand-computed toy network") {
    const auto schema = make_schema({{2, 1}, {2, 1}});
    Rng rng(0);
    Network n(schema, {InputMode::embed, 2, 0}, rng);
    n.emb[0](0, 0) = 0.3;
    n.emb[0](1, 0) = -0.2;
    n.emb[1](0, 0) = 0.5;
    n.emb[1](1, 0) = 0.1;
    n.hidden[0].w(0, 0) = 0.4;
    n.hidden[0].w(0, 1) = -0.6;
    n.hidden[0].w(1, 0) = 0.7;
    n.hidden[0].w(1, 1) = 0.2;
    n.hidden[0].b = {0.1, -0.05};
    n.out.w(0, 0) = 1.2;
    n.out.w(0, 1) = -0.8;
    n.out.b = {0.25};

    // x = (0, 0): e = (0.3, 0.5)
    // z1 = (0.4*0.3 - 0.6*0.5 + 0.1, 0.7*0.3 + 0.2*0.5 - 0.05) = (-0.08, 0.26)
    // h1 = (0, 0.26); zout = 1.2*0 - 0.8*0.26 + 0.25 = 0.042
    const double h1b = 0.7 * 0.3 + 0.2 * 0.5 - 0.05;
    const double zout = -0.8 * h1b + 0.25;
    const double expected = 1.0 / (1.0 + std::exp(-zout));
    const std::int32_t x[2] = {0, 0};
    CHECK(std::abs(forward(n, {x, 2}) - expected) < 1e-12);

    // x = (1, 1): e = (-0.2, 0.1)
    // z1 = (0.4*-0.2 - 0.6*0.1 + 0.1, 0.7*-0.2 + 0.2*0.1 - 0.05) = (-0.04, -0.17)
    const double expected2 = 1.0 / (1.0 + std::exp(-0.25));
    const std::int32_t x2[2] = {1, 1};
    CHECK(std::abs(forward(n, {x2, 2}) - expected2) < 1e-12);
}

TEST_CASE("backward: gradients vanish at the optimum and keep delta structure") {
    const auto schema = make_schema({{6, 3}, {4, 2}});
    Rng rng(5);
    Network n(schema, {InputMode::embed, 8, 4}, rng);

    const auto data = make_dataset(schema, 12, 6);
    const auto xs = gather_rows(data);
    ForwardCache cache;
    forward_batch(n, xs, data.size(), cache);

    // targets equal to the outputs: every gradient is exactly zero
    NetGrads g(n);
    backward_batch(n, xs, cache.pred, cache, g);
    for (const auto& v : std::as_const(g).views())
        for (const double gv : v) CHECK(gv == 0.0);
}

TEST_CASE("backward: embedding rows absent from the batch get exactly zero gradient") {
    const auto schema = make_schema({{6, 3}, {4, 2}});
    Rng rng(7);
    Network n(schema, {InputMode::embed, 8, 4}, rng);

    // every sample uses category 3 of feature 0
    std::vector<std::int32_t> xs;
    Rng xr(8);
    const std::size_t batch = 10;
    for (std::size_t i = 0; i < batch; ++i) {
        xs.push_back(3);
        xs.push_back(std::int32_t(xr.below(4)));
    }
    std::vector<double> targets(batch, 0.3);
    const auto g = backward(n, xs, targets);
    bool row3_nonzero = false;
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
            if (a == 3) {
                row3_nonzero = row3_nonzero || g.emb[0](a, b) != 0.0;
            } else {
                CHECK(g.emb[0](a, b) == 0.0);
            }
        }
    CHECK(row3_nonzero);
}

TEST_CASE("gradients match central finite differences") {
    const auto schema = make_schema({{6, 3}, {5, 2}, {3, 1}});
    Rng rng(11);
    Network n(schema, {InputMode::embed, 8, 4}, rng);
    const auto data = make_dataset(schema, 16, 12);
    const auto xs = gather_rows(data);
    std::vector<double> targets(data.size());
    Rng tr(13);
    for (auto& t : targets) t = tr.uniform(0.05, 0.95);

    const auto res = grad_check(n, xs, targets, 1e-5);
    CHECK(res.checked > 0);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("grad check on a linear-only network is much tighter") {
    const auto schema = make_schema({{4, 2}, {3, 2}});
    Rng rng(17);
    Network n(schema, {InputMode::embed, 0, 0}, rng); // embeddings -> sigmoid output
    const auto data = make_dataset(schema, 12, 18);
    const auto xs = gather_rows(data);
    std::vector<double> targets(data.size(), 0.4);
    const auto res = grad_check(n, xs, targets, 1e-5);
    CHECK(res.flagged == 0); // no ReLU, nothing to flag
    CHECK(res.max_rel_error < 1e-8);
}

TEST_CASE("grad check flags parameters at an exact ReLU kink") {
    const auto schema = make_schema({{3, 2}});
    Rng rng(19);
    Network n(schema, {InputMode::embed, 4, 0}, rng);
    // unit 0's pre-activation is exactly 0 for every input
    for (std::size_t j = 0; j < n.hidden[0].w.cols(); ++j) n.hidden[0].w(0, j) = 0.0;
    n.hidden[0].b[0] = 0.0;
    n.out.w(0, 0) = 0.7; // make the dead unit matter downstream

    std::vector<std::int32_t> xs{0, 1, 2};
    std::vector<double> targets{0.2, 0.8, 0.5};
    const auto res = grad_check(n, xs, targets, 1e-5);
    CHECK(res.flagged > 0);
    CHECK(res.max_rel_error < 1e-4); // flagged kink parameters are excluded
}

TEST_CASE("adam") {
    AdamState s(1);
    double p = 1.0;
    std::vector<std::span<double>> params{{&p, 1}};

    double g = 0.0;
    std::vector<std::span<const double>> grads{{&g, 1}};
    adam_step(s, params, grads);
    CHECK(p == 1.0); // zero gradient leaves parameters unchanged
    CHECK(s.t == 1);

    AdamState s2(1);
    p = 1.0;
    g = 0.5;
    adam_step(s2, params, grads);
    // first bias-corrected step has magnitude ~ lr
    CHECK(std::abs((1.0 - p) - s2.cfg.lr) < 1e-6 * s2.cfg.lr);

    AdamState s3(1);
    p = 1.0;
    double prev = p;
    for (int i = 0; i < 100; ++i) {
        adam_step(s3, params, grads);
        CHECK(p < prev); // constant positive gradient drifts monotonically down
        prev = p;
    }

    AdamState bad(2);
    CHECK_THROWS(adam_step(bad, params, grads));
}

TEST_CASE("train: loss decreases and is deterministic") {
    const auto schema = make_schema({{8, 4}, {5, 3}});
    auto data = make_dataset(schema, 256, 21);
    const auto transform = fit_target_transform(data);

    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 32;
    cfg.seed = 3;
    cfg.net.hidden1 = 16;
    cfg.net.hidden2 = 8;

    const auto r1 = train(cfg, data, transform);
    CHECK(r1.epoch_loss.back() < r1.initial_loss);

    const auto r2 = train(cfg, data, transform);
    CHECK(params_equal(r1.net, r2.net));
    CHECK(r1.epoch_loss == r2.epoch_loss);
}

TEST_CASE("train memorizes a small unique-category table") {
    const auto schema = make_schema({{50, 8}});
    FeatureSchema s = schema;
    std::vector<std::int32_t> xs(50);
    std::vector<double> ys(50);
    std::vector<std::int32_t> dates(50);
    Rng rng(23);
    for (std::size_t i = 0; i < 50; ++i) {
        xs[i] = static_cast<std::int32_t>(i); // every row its own category
        ys[i] = rng.uniform(500.0, 9000.0);
        dates[i] = static_cast<std::int32_t>(16000 + i);
    }
    const Dataset data(s, std::move(xs), std::move(ys), std::move(dates));
    const auto transform = fit_target_transform(data);

    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.batch_size = 16;
    cfg.seed = 1;
    cfg.adam.lr = 0.01;
    cfg.net.hidden1 = 32;
    cfg.net.hidden2 = 16;
    const auto r = train(cfg, data, transform);

    Ensemble e{{r.net}, transform};
    const auto pred = e.predict_sales(data);
    CHECK(mape(pred, data.targets()) < 0.02);
}

TEST_CASE("ensemble identities") {
    const auto schema = make_schema({{6, 3}, {4, 2}});
    auto data = make_dataset(schema, 128, 29);
    const auto test = make_dataset(schema, 32, 31);
    const auto transform = fit_target_transform(data);

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.seed = 5;
    cfg.ensemble_size = 1;
    cfg.net.hidden1 = 8;
    cfg.net.hidden2 = 4;

    const auto single = train(cfg, data, transform);
    const auto pred_single = Ensemble{{single.net}, transform}.predict_sales(test);
    const auto pred_ens = ensemble_train_predict(cfg, data, test, transform);
    CHECK(pred_single == pred_ens);

    // mean of identical members equals the single network
    Ensemble dup{{single.net, single.net, single.net}, transform};
    CHECK(dup.predict_sales(test) == pred_single);

    // distinct seeds produce member disagreement
    cfg.ensemble_size = 5;
    const auto ens = train_ensemble(cfg, data, transform);
    CHECK(ens.members.size() == 5);
    double spread = 0.0;
    for (const auto& m : ens.members) {
        const std::int32_t x[2] = {0, 0};
        spread += std::abs(forward(m, {x, 2}) - forward(ens.members[0], {x, 2}));
    }
    CHECK(spread > 0.0);
}

TEST_CASE("extract_embeddings shapes and the feature-table configuration") {
    // feature table: store 1115/10, dow 7/6, day 31/10, month 12/6,
    // year 3/2, promo 2/1, state 12/6
    const auto schema = make_schema(
        {{1115, 10}, {7, 6}, {31, 10}, {12, 6}, {3, 2}, {2, 1}, {12, 6}});
    Rng rng(37);
    Network n(schema, {InputMode::embed, 1000, 500}, rng);
    const auto embs = extract_embeddings(n);
    REQUIRE(embs.size() == 7);
    CHECK(embs[0].w.rows() == 1115);
    CHECK(embs[0].w.cols() == 10);
    CHECK(embs[6].w.rows() == 12);
    CHECK(embs[6].w.cols() == 6);

    // untrained network: extraction equals initialization
    CHECK(embs[0].w(0, 0) == n.emb[0](0, 0));

    Rng rng2(37);
    Network oh(schema, {InputMode::one_hot, 16, 8}, rng2);
    CHECK_THROWS(extract_embeddings(oh));
}

TEST_CASE("embed_dataset") {
    const auto schema = make_schema(
        {{1115, 10}, {7, 6}, {31, 10}, {12, 6}, {3, 2}, {2, 1}, {12, 6}});
    const auto data = make_dataset(schema, 20, 41);
    Rng rng(43);
    Network n(schema, {InputMode::embed, 8, 4}, rng);
    const auto embs = extract_embeddings(n);
    const auto em = embed_dataset(data, embs);
    CHECK(em.rows() == 20);
    CHECK(em.cols() == 41); // 10+6+10+6+2+1+6

    // identity embeddings reproduce the one-hot encoding
    const auto small = make_schema({{3, 2}, {4, 3}});
    const auto sdata = make_dataset(small, 10, 47);
    std::vector<EmbeddingMatrix> ident{{0, Matrix::identity(3)}, {1, Matrix::identity(4)}};
    ident[0].w = Matrix::identity(3);
    ident[1].w = Matrix::identity(4);
    const auto oh = embed_dataset(sdata, ident);
    for (std::size_t i = 0; i < sdata.size(); ++i) {
        for (std::size_t a = 0; a < 3; ++a)
            CHECK(oh(i, a) == (std::int32_t(a) == sdata.value(i, 0) ? 1.0 : 0.0));
        for (std::size_t a = 0; a < 4; ++a)
            CHECK(oh(i, 3 + a) == (std::int32_t(a) == sdata.value(i, 1) ? 1.0 : 0.0));
    }

    // equal rows for equal inputs
    const std::vector<std::size_t> both{0, 0};
    const auto dup = sdata.subset(both);
    const auto em2 = embed_dataset(dup, ident);
    for (std::size_t j = 0; j < em2.cols(); ++j) CHECK(em2(0, j) == em2(1, j));
}

TEST_CASE("one-hot equivalence with folded block-diagonal weights") {
    const auto schema = make_schema({{6, 3}, {4, 2}, {9, 5}, {3, 2}});
    Rng rng(53);
    Network n(schema, {InputMode::embed, 32, 16}, rng);
    const Network oh = to_one_hot_equivalent(n);

    Rng xr(59);
    double max_diff = 0.0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<std::int32_t> x(4);
        for (std::size_t f = 0; f < 4; ++f)
            x[f] = std::int32_t(xr.below(schema.features[f].cardinality));
        max_diff = std::max(max_diff, std::abs(forward(n, x) - forward(oh, x)));
    }
    CHECK(max_diff < 1e-10);
}

TEST_CASE("one_hot_extra_dense ablation mode") {
    const auto schema = make_schema({{6, 3}, {4, 2}});
    Rng rng(61);
    Network n(schema, {InputMode::one_hot_extra_dense, 8, 4}, rng);
    CHECK(n.extra.w.rows() == schema.total_embedding_dim());
    CHECK(n.extra.w.cols() == schema.total_cardinality());

    const auto data = make_dataset(schema, 64, 67);
    const auto transform = fit_target_transform(data);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.net = {InputMode::one_hot_extra_dense, 8, 4};
    const auto r = train(cfg, data, transform);
    CHECK(r.epoch_loss.back() < r.initial_loss);

    // gradient structure validated by finite differences as well
    const auto xs = gather_rows(data);
    std::vector<double> targets(data.size(), 0.5);
    Network n2(schema, {InputMode::one_hot_extra_dense, 6, 0}, rng);
    const auto res =
        grad_check(n2, {xs.data(), 8 * schema.feature_count()}, {targets.data(), 8}, 1e-5);
    CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("unseen categories") {
    const auto schema = make_schema({{4, 2}});
    Rng rng(71);
    Network n(schema, {InputMode::embed, 4, 0}, rng);
    const std::int32_t bad[1] = {7};
    CHECK_THROWS(forward(n, {bad, 1}));

    Network fallback = n;
    fallback.cfg.unseen_mean_fallback = true;
    const double p = forward(fallback, {bad, 1});
    CHECK(p > 0.0);
    CHECK(p < 1.0);
}

TEST_CASE("checkpoint round trip") {
    const auto schema = make_schema({{6, 3}, {4, 2}});
    Rng rng(73);
    Network n(schema, {InputMode::embed, 8, 4}, rng);
    const auto path =
        (std::filesystem::temp_directory_path() / "eetab_net_ckpt.bin").string();
    save_network(n, path);
    const auto r = load_network(path);
    CHECK(params_equal(n, r));
    CHECK(r.schema.features[1].labels == n.schema.features[1].labels);

    // ensembles carry the transform
    Ensemble e{{n}, TargetTransform{12345.0}};
    const auto epath =
        (std::filesystem::temp_directory_path() / "eetab_ens_ckpt.bin").string();
    save_ensemble(e, epath);
    const auto er = load_ensemble(epath);
    CHECK(er.transform.sale_max == 12345.0);
    CHECK(params_equal(er.members[0], n));
    CHECK_THROWS(load_ensemble(path)); // single-network file is not an ensemble
}

TEST_CASE("embedding export / import round trip") {
    const auto schema = make_schema({{6, 3}, {4, 2}});
    Rng rng(79);
    Network n(schema, {InputMode::embed, 8, 4}, rng);
    const auto dir =
        (std::filesystem::temp_directory_path() / "eetab_emb_export").string();
    const auto written = export_embeddings(n, dir);
    CHECK(written.size() == 3); // two feature CSVs + manifest

    const auto back = import_embeddings(n.schema, dir);
    REQUIRE(back.size() == 2);
    for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t a = 0; a < back[f].w.rows(); ++a)
            for (std::size_t b = 0; b < back[f].w.cols(); ++b)
                CHECK(std::abs(back[f].w(a, b) - n.emb[f](a, b)) <= 1e-15);
}
