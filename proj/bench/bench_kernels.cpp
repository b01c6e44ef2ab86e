// Times the OpenMP kernels against their serial references and reports the
// speedup plus the largest result difference (expected: 0 for the kernels
// with order-fixed reductions).

#include "eetab/benchmark.hpp"
#include "eetab/knn.hpp"
#include "eetab/matrix.hpp"
#include "eetab/parallel.hpp"
#include "eetab/rng.hpp"
#include "eetab/serial_ref.hpp"
#include "eetab/synthetic.hpp"
#include "eetab/trees.hpp"
#include "eetab/tsne.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <omp.h>

namespace {

double time_ms(const std::function<void()>& fn, int reps = 3) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms, double max_diff) {
    std::printf("%-28s serial %9.2f ms   omp %9.2f ms   speedup %5.2fx   max|diff| %.3g\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms, max_diff);
}

ee::Matrix random_matrix(std::size_t r, std::size_t c, ee::Rng& rng) {
    ee::Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

} // namespace

int main() {
    const int max_threads = omp_get_max_threads();
    std::printf("threads: %d\n\n", max_threads);
    ee::Rng rng(7);

    { // dense matmul
        const auto a = random_matrix(384, 384, rng);
        const auto b = random_matrix(384, 384, rng);
        ee::Matrix out_ref, out_omp;
        const double ts = time_ms([&] { out_ref = ee::ref::matmul(a, b); });
        const double tp = time_ms([&] { out_omp = ee::matmul(a, b); });
        report("matmul 384^3", ts, tp, ee::max_abs_diff(out_ref, out_omp));
    }

    { // knn batch prediction
        const auto train = random_matrix(4000, 32, rng);
        std::vector<double> targets(4000);
        for (auto& t : targets) t = rng.normal();
        const auto queries = random_matrix(400, 32, rng);
        const auto model = ee::fit_knn(train, targets, {10, 1.0});
        std::vector<double> ps, pp;
        const double ts = time_ms([&] { ps = ee::ref::predict_knn_scan(model, queries); });
        const double tp = time_ms([&] { pp = ee::predict_knn(model, queries); });
        double diff = 0.0;
        for (std::size_t i = 0; i < ps.size(); ++i) diff = std::max(diff, std::abs(ps[i] - pp[i]));
        report("knn 400x4000x32", ts, tp, diff);
    }

    { // category metric estimation
        ee::SyntheticConfig cfg;
        cfg.rows = 3000;
        cfg.stores = 60;
        cfg.seed = 3;
        const auto [data, truth] = ee::generate_synthetic(cfg);
        ee::TrainConfig tc;
        tc.epochs = 1;
        tc.ensemble_size = 1;
        tc.net.hidden1 = 32;
        tc.net.hidden2 = 16;
        const auto transform = ee::fit_target_transform(data);
        const auto ens = ee::train_ensemble(tc, data, transform);
        const auto f = ee::ensemble_predictor(ens);
        ee::CategoryMetric ms, mp;
        const double ts = time_ms([&] { ms = ee::ref::estimate_metric(f, data, 0, 400, 5); }, 1);
        const double tp = time_ms([&] { mp = ee::estimate_metric(f, data, 0, 400, 5); }, 1);
        report("metric m=60 K=400", ts, tp, ee::max_abs_diff(ms.dist, mp.dist));
    }

    { // forest fitting (per-tree parallelism)
        ee::SyntheticConfig cfg;
        cfg.rows = 8000;
        cfg.seed = 4;
        const auto [data, truth] = ee::generate_synthetic(cfg);
        std::vector<double> targets(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) targets[i] = std::log(data.target(i));
        ee::TreeData td;
        td.columns.resize(data.feature_count());
        for (std::size_t f = 0; f < data.feature_count(); ++f) {
            td.columns[f].resize(data.size());
            for (std::size_t i = 0; i < data.size(); ++i)
                td.columns[f][i] = double(data.value(i, f));
        }
        td.targets = std::move(targets);
        const ee::TreeConfig tcfg{12, 2, 1, 0, std::nullopt};
        ee::Forest fs, fp;
        ee::set_threads(1);
        const double ts = time_ms([&] { fs = ee::fit_random_forest(td, tcfg, 16, 9); }, 1);
        ee::set_threads(max_threads);
        const double tp = time_ms([&] { fp = ee::fit_random_forest(td, tcfg, 16, 9); }, 1);
        std::vector<double> x(td.feature_count(), 1.0);
        report("forest 16 trees n=8000", ts, tp,
               std::abs(ee::predict_forest(fs, x) - ee::predict_forest(fp, x)));
    }

    { // t-SNE gradient loop (thread count comparison on the same code path)
        const auto pts = random_matrix(300, 16, rng);
        ee::TsneConfig tc;
        tc.perplexity = 20;
        tc.iterations = 60;
        tc.exaggeration_iters = 30;
        tc.seed = 11;
        ee::TsneResult rs, rp;
        ee::set_threads(1);
        const double ts = time_ms([&] { rs = ee::tsne(pts, tc); }, 1);
        ee::set_threads(max_threads);
        const double tp = time_ms([&] { rp = ee::tsne(pts, tc); }, 1);
        report("tsne n=300 60 iters", ts, tp, ee::max_abs_diff(rs.y, rp.y));
    }

    { // network training (thread count comparison on the same code path)
        ee::SyntheticConfig cfg;
        cfg.rows = 6000;
        cfg.seed = 6;
        const auto [data, truth] = ee::generate_synthetic(cfg);
        const auto transform = ee::fit_target_transform(data);
        ee::TrainConfig tc;
        tc.epochs = 1;
        tc.ensemble_size = 1;
        tc.net.hidden1 = 128;
        tc.net.hidden2 = 64;
        ee::TrainResult rs, rp;
        ee::set_threads(1);
        const double ts = time_ms([&] { rs = ee::train(tc, data, transform); }, 1);
        ee::set_threads(max_threads);
        const double tp = time_ms([&] { rp = ee::train(tc, data, transform); }, 1);
        double diff = 0.0;
        const auto va = rs.net.param_views(), vb = rp.net.param_views();
        for (std::size_t t = 0; t < va.size(); ++t)
            for (std::size_t j = 0; j < va[t].size(); ++j)
                diff = std::max(diff, std::abs(va[t][j] - vb[t][j]));
        report("nn train 1 epoch n=6000", ts, tp, diff);
    }

    return 0;
}
