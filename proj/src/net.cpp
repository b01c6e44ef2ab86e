#include "eetab/net.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <utility>

namespace ee {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<std::size_t> onehot_offsets(const FeatureSchema& s) {
    std::vector<std::size_t> off(s.feature_count() + 1, 0);
    for (std::size_t f = 0; f < s.feature_count(); ++f)
        off[f + 1] = off[f] + s.features[f].cardinality;
    return off;
}

std::vector<std::size_t> embed_offsets(const FeatureSchema& s) {
    std::vector<std::size_t> off(s.feature_count() + 1, 0);
    for (std::size_t f = 0; f < s.feature_count(); ++f)
        off[f + 1] = off[f] + s.features[f].embedding_dim;
    return off;
}

void init_dense(DenseLayer& l, std::size_t out, std::size_t in, Rng& rng) {
    l.w = Matrix(out, in);
    l.b.assign(out, 0.0);
    const double bound = std::sqrt(6.0 / double(in + out));
    for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j) l.w(i, j) = rng.uniform(-bound, bound);
}

std::int32_t checked_category(const Network& n, std::size_t f, std::int32_t v) {
    const auto m = static_cast<std::int32_t>(n.schema.features[f].cardinality);
    if (v >= 0 && v < m) return v;
    if (!n.cfg.unseen_mean_fallback)
        throw std::out_of_range("unseen category " + std::to_string(v) + " for feature " +
                                n.schema.features[f].name);
    return -1; // caller substitutes the mean row
}

} // namespace

Network::Network(FeatureSchema schema_, NetworkConfig cfg_, Rng& rng)
    : schema(std::move(schema_)), cfg(cfg_) {
    schema.validate();
    const std::size_t total_d = schema.total_embedding_dim();
    const std::size_t total_m = schema.total_cardinality();

    if (cfg.mode == InputMode::embed) {
        for (const auto& f : schema.features) {
            Matrix w(f.cardinality, f.embedding_dim);
            for (std::size_t a = 0; a < f.cardinality; ++a)
                for (std::size_t b = 0; b < f.embedding_dim; ++b)
                    w(a, b) = rng.uniform(-0.05, 0.05);
            emb.push_back(std::move(w));
        }
    } else if (cfg.mode == InputMode::one_hot_extra_dense) {
        init_dense(extra, total_d, total_m, rng);
    }

    std::size_t cur = dense_input_dim();
    if (cfg.hidden1 > 0) {
        DenseLayer l;
        init_dense(l, cfg.hidden1, cur, rng);
        hidden.push_back(std::move(l));
        cur = cfg.hidden1;
    }
    if (cfg.hidden2 > 0) {
        if (cfg.hidden1 == 0) throw std::invalid_argument("network: hidden2 without hidden1");
        DenseLayer l;
        init_dense(l, cfg.hidden2, cur, rng);
        hidden.push_back(std::move(l));
        cur = cfg.hidden2;
    }
    init_dense(out, 1, cur, rng);
}

std::size_t Network::dense_input_dim() const {
    return cfg.mode == InputMode::one_hot ? schema.total_cardinality()
                                          : schema.total_embedding_dim();
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& view : param_views()) n += view.size();
    return n;
}

template <typename Net, typename Span>
static std::vector<Span> views_impl(Net& n) {
    std::vector<Span> v;
    for (auto& e : n.emb) v.push_back({e.data(), e.size()});
    if (n.cfg.mode == InputMode::one_hot_extra_dense) {
        v.push_back({n.extra.w.data(), n.extra.w.size()});
        v.push_back({n.extra.b.data(), n.extra.b.size()});
    }
    for (auto& l : n.hidden) {
        v.push_back({l.w.data(), l.w.size()});
        v.push_back({l.b.data(), l.b.size()});
    }
    v.push_back({n.out.w.data(), n.out.w.size()});
    v.push_back({n.out.b.data(), n.out.b.size()});
    return v;
}

std::vector<std::span<double>> Network::param_views() {
    return views_impl<Network, std::span<double>>(*this);
}
std::vector<std::span<const double>> Network::param_views() const {
    return views_impl<const Network, std::span<const double>>(*this);
}

std::vector<double> embed_lookup(const EmbeddingMatrix& e, std::int64_t category,
                                 bool mean_fallback) {
    const auto m = static_cast<std::int64_t>(e.w.rows());
    if (category >= 0 && category < m) {
        const auto r = e.w.row(static_cast<std::size_t>(category));
        return {r.begin(), r.end()};
    }
    if (!mean_fallback)
        throw std::out_of_range("embed_lookup: unseen category " + std::to_string(category));
    std::vector<double> mean(e.w.cols(), 0.0);
    for (std::size_t a = 0; a < e.w.rows(); ++a)
        for (std::size_t b = 0; b < e.w.cols(); ++b) mean[b] += e.w(a, b);
    for (double& v : mean) v /= double(e.w.rows());
    return mean;
}

void forward_batch(const Network& n, std::span<const std::int32_t> xs, std::size_t batch,
                   ForwardCache& c) {
    const std::size_t nf = n.schema.feature_count();
    if (xs.size() != batch * nf) throw std::invalid_argument("forward_batch: xs shape mismatch");
    const auto moff = onehot_offsets(n.schema);
    const auto doff = embed_offsets(n.schema);
    const std::size_t din = n.schema.total_embedding_dim();

    c.batch = batch;
    const bool sparse_first = n.cfg.mode != InputMode::embed;
    if (!sparse_first || n.cfg.mode == InputMode::one_hot_extra_dense) {
        if (c.in.rows() != batch || c.in.cols() != din) c.in = Matrix(batch, din);
    }
    if (n.cfg.mode == InputMode::one_hot_extra_dense &&
        (c.extra_z.rows() != batch || c.extra_z.cols() != din))
        c.extra_z = Matrix(batch, din);
    c.z.resize(n.hidden.size());
    c.h.resize(n.hidden.size());
    for (std::size_t l = 0; l < n.hidden.size(); ++l) {
        const std::size_t w = n.hidden[l].w.rows();
        if (c.z[l].rows() != batch || c.z[l].cols() != w) {
            c.z[l] = Matrix(batch, w);
            c.h[l] = Matrix(batch, w);
        }
    }
    c.zout.resize(batch);
    c.pred.resize(batch);

    const auto run_sample = [&](std::size_t s) {
        const std::int32_t* x = xs.data() + s * nf;

        if (n.cfg.mode == InputMode::embed) {
            double* row = c.in.data() + s * din;
            for (std::size_t f = 0; f < nf; ++f) {
                const std::int32_t v = checked_category(n, f, x[f]);
                const std::size_t d = n.schema.features[f].embedding_dim;
                if (v >= 0) {
                    const double* w = n.emb[f].data() + std::size_t(v) * d;
                    std::memcpy(row + doff[f], w, d * sizeof(double));
                } else {
                    for (std::size_t b = 0; b < d; ++b) {
                        double mean = 0.0;
                        for (std::size_t a = 0; a < n.emb[f].rows(); ++a) mean += n.emb[f](a, b);
                        row[doff[f] + b] = mean / double(n.emb[f].rows());
                    }
                }
            }
        } else if (n.cfg.mode == InputMode::one_hot_extra_dense) {
            double* ze = c.extra_z.data() + s * din;
            for (std::size_t o = 0; o < din; ++o) {
                double acc = n.extra.b[o];
                const double* wrow = n.extra.w.data() + o * n.extra.w.cols();
                for (std::size_t f = 0; f < nf; ++f) {
                    const std::int32_t v = checked_category(n, f, x[f]);
                    if (v >= 0) acc += wrow[moff[f] + std::size_t(v)];
                }
                ze[o] = acc;
            }
            double* row = c.in.data() + s * din;
            for (std::size_t o = 0; o < din; ++o) row[o] = ze[o] > 0.0 ? ze[o] : 0.0;
        } else {
            for (std::size_t f = 0; f < nf; ++f) checked_category(n, f, x[f]);
        }

        // Dense chain. In pure one-hot mode the first consumer gathers the
        // active columns instead of a dense dot.
        const double* cur = nullptr;
        std::size_t cur_dim = 0;
        if (n.cfg.mode != InputMode::one_hot) {
            cur = c.in.data() + s * din;
            cur_dim = din;
        }
        for (std::size_t l = 0; l < n.hidden.size(); ++l) {
            const auto& lay = n.hidden[l];
            double* z = c.z[l].data() + s * lay.w.rows();
            double* h = c.h[l].data() + s * lay.w.rows();
            for (std::size_t o = 0; o < lay.w.rows(); ++o) {
                const double* wrow = lay.w.data() + o * lay.w.cols();
                double acc = lay.b[o];
                if (l == 0 && n.cfg.mode == InputMode::one_hot) {
                    for (std::size_t f = 0; f < nf; ++f)
                        acc += wrow[moff[f] + std::size_t(x[f])];
                } else {
                    for (std::size_t i = 0; i < cur_dim; ++i) acc += wrow[i] * cur[i];
                }
                z[o] = acc;
                h[o] = acc > 0.0 ? acc : 0.0;
            }
            cur = h;
            cur_dim = lay.w.rows();
        }

        double acc = n.out.b[0];
        if (n.hidden.empty() && n.cfg.mode == InputMode::one_hot) {
            for (std::size_t f = 0; f < nf; ++f)
                acc += n.out.w.data()[moff[f] + std::size_t(x[f])];
        } else {
            const double* wrow = n.out.w.data();
            for (std::size_t i = 0; i < cur_dim; ++i) acc += wrow[i] * cur[i];
        }
        c.zout[s] = acc;
        c.pred[s] = sigmoid(acc);
    };

    // Each sample runs its whole chain on one thread, so the result is
    // independent of the thread count. Exceptions (unseen categories) must
    // not escape the parallel region; the first one is rethrown after it.
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (long long si = 0; si < static_cast<long long>(batch); ++si) {
        try {
            run_sample(static_cast<std::size_t>(si));
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

double forward(const Network& n, std::span<const std::int32_t> x) {
    ForwardCache c;
    forward_batch(n, x, 1, c);
    return c.pred[0];
}

NetGrads::NetGrads(const Network& n) {
    for (const auto& e : n.emb) emb.emplace_back(e.rows(), e.cols());
    if (n.cfg.mode == InputMode::one_hot_extra_dense) {
        extra.w = Matrix(n.extra.w.rows(), n.extra.w.cols());
        extra.b.assign(n.extra.b.size(), 0.0);
    }
    for (const auto& l : n.hidden) {
        DenseLayer g;
        g.w = Matrix(l.w.rows(), l.w.cols());
        g.b.assign(l.b.size(), 0.0);
        hidden.push_back(std::move(g));
    }
    out.w = Matrix(n.out.w.rows(), n.out.w.cols());
    out.b.assign(n.out.b.size(), 0.0);
}

void NetGrads::zero() {
    for (auto& e : emb) std::fill(e.data(), e.data() + e.size(), 0.0);
    std::fill(extra.w.data(), extra.w.data() + extra.w.size(), 0.0);
    std::fill(extra.b.begin(), extra.b.end(), 0.0);
    for (auto& l : hidden) {
        std::fill(l.w.data(), l.w.data() + l.w.size(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    std::fill(out.w.data(), out.w.data() + out.w.size(), 0.0);
    std::fill(out.b.begin(), out.b.end(), 0.0);
}

template <typename G, typename Span>
static std::vector<Span> grad_views_impl(G& g) {
    std::vector<Span> v;
    for (auto& e : g.emb) v.push_back({e.data(), e.size()});
    if (g.extra.w.size() > 0) {
        v.push_back({g.extra.w.data(), g.extra.w.size()});
        v.push_back({g.extra.b.data(), g.extra.b.size()});
    }
    for (auto& l : g.hidden) {
        v.push_back({l.w.data(), l.w.size()});
        v.push_back({l.b.data(), l.b.size()});
    }
    v.push_back({g.out.w.data(), g.out.w.size()});
    v.push_back({g.out.b.data(), g.out.b.size()});
    return v;
}

std::vector<std::span<double>> NetGrads::views() {
    return grad_views_impl<NetGrads, std::span<double>>(*this);
}
std::vector<std::span<const double>> NetGrads::views() const {
    return grad_views_impl<const NetGrads, std::span<const double>>(*this);
}

double backward_batch(const Network& n, std::span<const std::int32_t> xs,
                      std::span<const double> targets, const ForwardCache& c, NetGrads& g) {
    const std::size_t batch = c.batch;
    if (batch == 0) throw std::invalid_argument("backward_batch: empty batch");
    if (targets.size() != batch) throw std::invalid_argument("backward_batch: target mismatch");
    const std::size_t nf = n.schema.feature_count();
    const auto moff = onehot_offsets(n.schema);
    const auto doff = embed_offsets(n.schema);
    const std::size_t din = n.schema.total_embedding_dim();
    const double scale = 2.0 / double(batch);

    g.zero();

    double loss = 0.0;
    std::vector<double> dzout(batch);
    for (std::size_t s = 0; s < batch; ++s) {
        const double err = c.pred[s] - targets[s];
        loss += err * err;
        dzout[s] = scale * err * c.pred[s] * (1.0 - c.pred[s]);
    }
    loss /= double(batch);

    const std::size_t nl = n.hidden.size();
    // Per-layer deltas, one row per sample.
    std::vector<Matrix> dz(nl);
    for (std::size_t l = 0; l < nl; ++l) dz[l] = Matrix(batch, n.hidden[l].w.rows());
    Matrix din_mat; // gradient w.r.t. the dense input (embed / extra modes)
    const bool need_din = n.cfg.mode != InputMode::one_hot;
    if (need_din) din_mat = Matrix(batch, din);

    // Output layer gradients (single row) and last-layer delta.
    const std::size_t last_dim = n.hidden.empty() ? n.dense_input_dim() : n.hidden.back().w.rows();
    {
        double* gw = g.out.w.data();
        if (n.hidden.empty() && n.cfg.mode == InputMode::one_hot) {
            for (std::size_t s = 0; s < batch; ++s) {
                const std::int32_t* x = xs.data() + s * nf;
                for (std::size_t f = 0; f < nf; ++f)
                    gw[moff[f] + std::size_t(x[f])] += dzout[s];
            }
        } else {
            const Matrix& last = n.hidden.empty() ? c.in : c.h.back();
            for (std::size_t s = 0; s < batch; ++s) {
                const double* row = last.data() + s * last_dim;
                for (std::size_t i = 0; i < last_dim; ++i) gw[i] += dzout[s] * row[i];
            }
        }
        for (std::size_t s = 0; s < batch; ++s) g.out.b[0] += dzout[s];
    }

    // Deltas flowing backwards, per sample.
#pragma omp parallel for schedule(static)
    for (long long si = 0; si < static_cast<long long>(batch); ++si) {
        const auto s = static_cast<std::size_t>(si);
        if (!n.hidden.empty()) {
            // delta into the last hidden layer from the output neuron
            double* d = dz[nl - 1].data() + s * n.hidden[nl - 1].w.rows();
            const double* zrow = c.z[nl - 1].data() + s * n.hidden[nl - 1].w.rows();
            for (std::size_t o = 0; o < n.hidden[nl - 1].w.rows(); ++o)
                d[o] = zrow[o] > 0.0 ? dzout[s] * n.out.w.data()[o] : 0.0;
            for (std::size_t l = nl - 1; l > 0; --l) {
                const auto& lay = n.hidden[l];
                const std::size_t wprev = n.hidden[l - 1].w.rows();
                double* dprev = dz[l - 1].data() + s * wprev;
                const double* dcur = dz[l].data() + s * lay.w.rows();
                const double* zprev = c.z[l - 1].data() + s * wprev;
                for (std::size_t i = 0; i < wprev; ++i) dprev[i] = 0.0;
                for (std::size_t o = 0; o < lay.w.rows(); ++o) {
                    const double dv = dcur[o];
                    if (dv == 0.0) continue;
                    const double* wrow = lay.w.data() + o * lay.w.cols();
                    for (std::size_t i = 0; i < wprev; ++i) dprev[i] += dv * wrow[i];
                }
                for (std::size_t i = 0; i < wprev; ++i)
                    if (zprev[i] <= 0.0) dprev[i] = 0.0;
            }
        }
        if (need_din) {
            double* di = din_mat.data() + s * din;
            if (n.hidden.empty()) {
                for (std::size_t i = 0; i < din; ++i) di[i] = dzout[s] * n.out.w.data()[i];
            } else {
                const auto& lay = n.hidden[0];
                const double* d0 = dz[0].data() + s * lay.w.rows();
                for (std::size_t i = 0; i < din; ++i) di[i] = 0.0;
                for (std::size_t o = 0; o < lay.w.rows(); ++o) {
                    const double dv = d0[o];
                    if (dv == 0.0) continue;
                    const double* wrow = lay.w.data() + o * lay.w.cols();
                    for (std::size_t i = 0; i < din; ++i) di[i] += dv * wrow[i];
                }
            }
        }
    }

    // Weight gradients: each thread owns a block of output rows and sums over
    // samples in a fixed order.
    for (std::size_t l = 0; l < nl; ++l) {
        const auto& lay = n.hidden[l];
        auto& gl = g.hidden[l];
        const bool sparse = (l == 0 && n.cfg.mode == InputMode::one_hot);
        const Matrix& input = (l == 0) ? c.in : c.h[l - 1];
        const std::size_t idim = lay.w.cols();
#pragma omp parallel for schedule(static)
        for (long long oi = 0; oi < static_cast<long long>(lay.w.rows()); ++oi) {
            const auto o = static_cast<std::size_t>(oi);
            double* gw = gl.w.data() + o * idim;
            double gb = 0.0;
            for (std::size_t s = 0; s < batch; ++s) {
                const double dv = dz[l](s, o);
                gb += dv;
                if (dv == 0.0) continue;
                if (sparse) {
                    const std::int32_t* x = xs.data() + s * nf;
                    for (std::size_t f = 0; f < nf; ++f)
                        gw[moff[f] + std::size_t(x[f])] += dv;
                } else {
                    const double* row = input.data() + s * idim;
                    for (std::size_t i = 0; i < idim; ++i) gw[i] += dv * row[i];
                }
            }
            gl.b[o] = gb;
        }
    }

    if (n.cfg.mode == InputMode::embed) {
        // Only rows whose categories appear in the batch receive gradient.
#pragma omp parallel for schedule(static)
        for (long long fi = 0; fi < static_cast<long long>(nf); ++fi) {
            const auto f = static_cast<std::size_t>(fi);
            const std::size_t d = n.schema.features[f].embedding_dim;
            for (std::size_t s = 0; s < batch; ++s) {
                const std::int32_t v = xs[s * nf + f];
                double* grow = g.emb[f].data() + std::size_t(v) * d;
                const double* di = din_mat.data() + s * din + doff[f];
                for (std::size_t b = 0; b < d; ++b) grow[b] += di[b];
            }
        }
    } else if (n.cfg.mode == InputMode::one_hot_extra_dense) {
#pragma omp parallel for schedule(static)
        for (long long oi = 0; oi < static_cast<long long>(din); ++oi) {
            const auto o = static_cast<std::size_t>(oi);
            double* gw = g.extra.w.data() + o * g.extra.w.cols();
            double gb = 0.0;
            for (std::size_t s = 0; s < batch; ++s) {
                if (c.extra_z(s, o) <= 0.0) continue;
                const double dv = din_mat(s, o);
                gb += dv;
                if (dv == 0.0) continue;
                const std::int32_t* x = xs.data() + s * nf;
                for (std::size_t f = 0; f < nf; ++f) gw[moff[f] + std::size_t(x[f])] += dv;
            }
            g.extra.b[o] = gb;
        }
    }

    return loss;
}

NetGrads backward(const Network& n, std::span<const std::int32_t> xs,
                  std::span<const double> targets) {
    ForwardCache c;
    forward_batch(n, xs, targets.size(), c);
    NetGrads g(n);
    backward_batch(n, xs, targets, c, g);
    return g;
}

void adam_step(AdamState& s, std::vector<std::span<double>> params,
               std::vector<std::span<const double>> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: tensor count");
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size())
            throw std::invalid_argument("adam_step: shape mismatch");
        total += params[i].size();
    }
    if (total != s.m.size()) throw std::invalid_argument("adam_step: state size mismatch");

    s.t += 1;
    const double c1 = 1.0 - std::pow(s.cfg.beta1, double(s.t));
    const double c2 = 1.0 - std::pow(s.cfg.beta2, double(s.t));
    std::size_t off = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i].data();
        const double* gr = grads[i].data();
        double* m = s.m.data() + off;
        double* v = s.v.data() + off;
        const std::size_t len = params[i].size();
#pragma omp parallel for schedule(static)
        for (long long jj = 0; jj < static_cast<long long>(len); ++jj) {
            const auto j = static_cast<std::size_t>(jj);
            m[j] = s.cfg.beta1 * m[j] + (1.0 - s.cfg.beta1) * gr[j];
            v[j] = s.cfg.beta2 * v[j] + (1.0 - s.cfg.beta2) * gr[j] * gr[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] -= s.cfg.lr * mhat / (std::sqrt(vhat) + s.cfg.eps);
        }
        off += len;
    }
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const TargetTransform& transform) {
    if (data.size() == 0) throw std::invalid_argument("train: empty training set");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("train: bad config");

    Rng rng(cfg.seed);
    TrainResult res{Network(data.schema(), cfg.net, rng), 0.0, {}};
    Network& net = res.net;

    const std::size_t n = data.size(), nf = data.feature_count();
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = transform.transform(data.target(i));

    AdamState adam(net.param_count(), cfg.adam);
    NetGrads grads(net);
    ForwardCache cache;
    std::vector<std::int32_t> bx(cfg.batch_size * nf);
    std::vector<double> bt(cfg.batch_size);

    {
        ForwardCache c0;
        std::vector<std::int32_t> all(n * nf);
        for (std::size_t i = 0; i < n; ++i)
            std::memcpy(all.data() + i * nf, data.x(i).data(), nf * sizeof(std::int32_t));
        forward_batch(net, all, n, c0);
        double l0 = 0.0;
        for (std::size_t i = 0; i < n; ++i) l0 += (c0.pred[i] - t[i]) * (c0.pred[i] - t[i]);
        res.initial_loss = l0 / double(n);
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto perm = rng.permutation(n);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, n - start);
            for (std::size_t s = 0; s < b; ++s) {
                const std::size_t row = perm[start + s];
                std::memcpy(bx.data() + s * nf, data.x(row).data(), nf * sizeof(std::int32_t));
                bt[s] = t[row];
            }
            forward_batch(net, {bx.data(), b * nf}, b, cache);
            epoch_loss += backward_batch(net, {bx.data(), b * nf}, {bt.data(), b}, cache, grads);
            adam_step(adam, net.param_views(), std::as_const(grads).views());
            ++batches;
        }
        res.epoch_loss.push_back(epoch_loss / double(batches));
    }
    return res;
}

double Ensemble::predict_transformed(std::span<const std::int32_t> x) const {
    double s = 0.0;
    for (const auto& m : members) s += forward(m, x);
    return s / double(members.size());
}

std::vector<double> Ensemble::predict_sales(const Dataset& d) const {
    const std::size_t n = d.size(), nf = d.feature_count();
    std::vector<double> mean(n, 0.0);
    std::vector<std::int32_t> all(n * nf);
    for (std::size_t i = 0; i < n; ++i)
        std::memcpy(all.data() + i * nf, d.x(i).data(), nf * sizeof(std::int32_t));
    for (const auto& m : members) {
        ForwardCache c;
        forward_batch(m, all, n, c);
        for (std::size_t i = 0; i < n; ++i) mean[i] += c.pred[i];
    }
    std::vector<double> sales(n);
    for (std::size_t i = 0; i < n; ++i)
        sales[i] = transform.inverse(mean[i] / double(members.size()));
    return sales;
}

Ensemble train_ensemble(const TrainConfig& cfg, const Dataset& train_set,
                        const TargetTransform& transform) {
    if (cfg.ensemble_size < 1) throw std::invalid_argument("train_ensemble: ensemble_size < 1");
    Ensemble e;
    e.transform = transform;
    for (std::size_t k = 0; k < cfg.ensemble_size; ++k) {
        TrainConfig c = cfg;
        c.seed = cfg.seed + k;
        e.members.push_back(train(c, train_set, transform).net);
    }
    return e;
}

std::vector<double> ensemble_train_predict(const TrainConfig& cfg, const Dataset& train_set,
                                           const Dataset& test, const TargetTransform& transform) {
    return train_ensemble(cfg, train_set, transform).predict_sales(test);
}

std::vector<EmbeddingMatrix> extract_embeddings(const Network& n) {
    if (n.cfg.mode != InputMode::embed)
        throw std::logic_error("extract_embeddings: network is not in embed mode");
    std::vector<EmbeddingMatrix> out;
    for (std::size_t f = 0; f < n.emb.size(); ++f) out.push_back({f, n.emb[f]});
    return out;
}

Matrix embed_dataset(const Dataset& d, const std::vector<EmbeddingMatrix>& embs) {
    const auto& schema = d.schema();
    if (embs.size() != schema.feature_count())
        throw std::invalid_argument("embed_dataset: embedding count mismatch");
    std::size_t total_d = 0;
    for (std::size_t f = 0; f < embs.size(); ++f) {
        if (embs[f].w.rows() != schema.features[f].cardinality)
            throw std::invalid_argument("embed_dataset: cardinality mismatch for feature " +
                                        schema.features[f].name);
        total_d += embs[f].w.cols();
    }
    Matrix out(d.size(), total_d);
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(d.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* row = out.data() + i * total_d;
        std::size_t off = 0;
        for (std::size_t f = 0; f < embs.size(); ++f) {
            const std::size_t dd = embs[f].w.cols();
            const double* w = embs[f].w.data() + std::size_t(d.value(i, f)) * dd;
            std::memcpy(row + off, w, dd * sizeof(double));
            off += dd;
        }
    }
    return out;
}

Network to_one_hot_equivalent(const Network& n) {
    if (n.cfg.mode != InputMode::embed)
        throw std::logic_error("to_one_hot_equivalent: source must be in embed mode");
    if (n.hidden.empty())
        throw std::logic_error("to_one_hot_equivalent: needs at least one hidden layer");
    Network oh;
    oh.schema = n.schema;
    oh.cfg = n.cfg;
    oh.cfg.mode = InputMode::one_hot;
    oh.hidden = n.hidden;
    oh.out = n.out;

    // dense1' = dense1 * blockdiag(emb)^T over the one-hot input.
    const auto moff = onehot_offsets(n.schema);
    const auto doff = embed_offsets(n.schema);
    const std::size_t h1 = n.hidden[0].w.rows();
    Matrix w1(h1, n.schema.total_cardinality());
    for (std::size_t o = 0; o < h1; ++o)
        for (std::size_t f = 0; f < n.schema.feature_count(); ++f) {
            const auto& e = n.emb[f];
            for (std::size_t a = 0; a < e.rows(); ++a) {
                double acc = 0.0;
                for (std::size_t b = 0; b < e.cols(); ++b)
                    acc += n.hidden[0].w(o, doff[f] + b) * e(a, b);
                w1(o, moff[f] + a) = acc;
            }
        }
    oh.hidden[0].w = std::move(w1);
    return oh;
}

GradCheckResult grad_check(Network& n, std::span<const std::int32_t> xs,
                           std::span<const double> targets, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
    const std::size_t batch = targets.size();

    const auto loss_of = [&](ForwardCache& c) {
        forward_batch(n, xs, batch, c);
        double l = 0.0;
        for (std::size_t s = 0; s < batch; ++s)
            l += (c.pred[s] - targets[s]) * (c.pred[s] - targets[s]);
        return l / double(batch);
    };

    const auto masks_of = [&](const ForwardCache& c) {
        std::vector<bool> m;
        if (n.cfg.mode == InputMode::one_hot_extra_dense)
            for (std::size_t i = 0; i < c.extra_z.size(); ++i)
                m.push_back(c.extra_z.data()[i] > 0.0);
        for (const auto& z : c.z)
            for (std::size_t i = 0; i < z.size(); ++i) m.push_back(z.data()[i] > 0.0);
        return m;
    };

    ForwardCache cache;
    forward_batch(n, xs, batch, cache);
    NetGrads analytic(n);
    backward_batch(n, xs, targets, cache, analytic);

    GradCheckResult res;
    auto params = n.param_views();
    const auto grads = analytic.views();
    ForwardCache cp, cm;
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
        for (std::size_t j = 0; j < params[ti].size(); ++j) {
            double& p = params[ti][j];
            const double saved = p;
            p = saved + h;
            const double lp = loss_of(cp);
            p = saved - h;
            const double lm = loss_of(cm);
            p = saved;

            if (masks_of(cp) != masks_of(cm)) {
                ++res.flagged;
                continue;
            }
            const double fd = (lp - lm) / (2.0 * h);
            const double an = grads[ti][j];
            const double diff = std::abs(fd - an);
            const double denom = std::max(std::abs(fd), std::abs(an));
            const double rel = (diff < 1e-12 || denom < 1e-12) ? 0.0 : diff / denom;
            res.max_rel_error = std::max(res.max_rel_error, rel);
            ++res.checked;
        }
    }
    return res;
}

namespace {

nlohmann::json schema_to_json(const FeatureSchema& s) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& f : s.features)
        j.push_back({{"name", f.name},
                     {"kind", f.kind == FeatureKind::binary ? "binary" : "categorical"},
                     {"cardinality", f.cardinality},
                     {"embedding_dim", f.embedding_dim},
                     {"labels", f.labels}});
    return j;
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
    FeatureSchema s;
    for (const auto& jf : j) {
        FeatureSpec f;
        f.name = jf.at("name").get<std::string>();
        f.kind = jf.at("kind").get<std::string>() == "binary" ? FeatureKind::binary
                                                              : FeatureKind::categorical;
        f.cardinality = jf.at("cardinality").get<std::size_t>();
        f.embedding_dim = jf.at("embedding_dim").get<std::size_t>();
        f.labels = jf.at("labels").get<std::vector<std::string>>();
        s.features.push_back(std::move(f));
    }
    return s;
}

constexpr char kNetMagic[8] = {'E', 'E', 'N', 'E', 'T', '0', '0', '1'};
constexpr char kEnsMagic[8] = {'E', 'E', 'E', 'N', 'S', '0', '0', '1'};

void save_network_stream(const Network& n, std::ostream& os);
Network load_network_stream(std::istream& is, const std::string& path);

} // namespace

namespace {

void save_network_stream(const Network& n, std::ostream& os) {
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["mode"] = n.cfg.mode == InputMode::embed ? "embed"
                       : n.cfg.mode == InputMode::one_hot ? "one_hot"
                                                          : "one_hot_extra_dense";
    manifest["hidden1"] = n.cfg.hidden1;
    manifest["hidden2"] = n.cfg.hidden2;
    manifest["unseen_mean_fallback"] = n.cfg.unseen_mean_fallback;
    manifest["schema"] = schema_to_json(n.schema);
    nlohmann::json tensors = nlohmann::json::array();
    const auto views = n.param_views();
    for (const auto& v : views) tensors.push_back(v.size());
    manifest["tensor_sizes"] = tensors;
    const std::string m = manifest.dump();

    os.write(kNetMagic, sizeof kNetMagic);
    const std::uint64_t mlen = m.size();
    os.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
    os.write(m.data(), static_cast<std::streamsize>(m.size()));
    for (const auto& v : views)
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(v.size_bytes()));
}

Network load_network_stream(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kNetMagic, sizeof magic) != 0)
        throw std::runtime_error("load_network: bad magic / unsupported version in " + path);
    std::uint64_t mlen = 0;
    is.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
    std::string m(mlen, '\0');
    is.read(m.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw std::runtime_error("load_network: truncated manifest in " + path);
    const auto manifest = nlohmann::json::parse(m);

    NetworkConfig cfg;
    const std::string mode = manifest.at("mode").get<std::string>();
    cfg.mode = mode == "embed" ? InputMode::embed
               : mode == "one_hot" ? InputMode::one_hot
                                   : InputMode::one_hot_extra_dense;
    cfg.hidden1 = manifest.at("hidden1").get<std::size_t>();
    cfg.hidden2 = manifest.at("hidden2").get<std::size_t>();
    cfg.unseen_mean_fallback = manifest.at("unseen_mean_fallback").get<bool>();
    FeatureSchema schema = schema_from_json(manifest.at("schema"));

    Rng rng(0);
    Network n(std::move(schema), cfg, rng);
    const auto sizes = manifest.at("tensor_sizes").get<std::vector<std::size_t>>();
    auto views = n.param_views();
    if (sizes.size() != views.size())
        throw std::runtime_error("load_network: tensor manifest mismatch in " + path);
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (sizes[i] != views[i].size())
            throw std::runtime_error("load_network: tensor size mismatch in " + path);
        is.read(reinterpret_cast<char*>(views[i].data()),
                static_cast<std::streamsize>(views[i].size_bytes()));
    }
    if (!is) throw std::runtime_error("load_network: truncated payload in " + path);
    return n;
}

} // namespace

void save_network(const Network& n, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_network: cannot open " + path);
    save_network_stream(n, os);
    if (!os) throw std::runtime_error("save_network: write failed for " + path);
}

Network load_network(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_network: cannot open " + path);
    return load_network_stream(is, path);
}

void save_ensemble(const Ensemble& e, const std::string& path) {
    if (e.members.empty()) throw std::invalid_argument("save_ensemble: empty ensemble");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_ensemble: cannot open " + path);
    os.write(kEnsMagic, sizeof kEnsMagic);
    const std::uint64_t count = e.members.size();
    os.write(reinterpret_cast<const char*>(&count), sizeof count);
    os.write(reinterpret_cast<const char*>(&e.transform.sale_max), sizeof(double));
    for (const auto& m : e.members) save_network_stream(m, os);
    if (!os) throw std::runtime_error("save_ensemble: write failed for " + path);
}

Ensemble load_ensemble(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_ensemble: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is) throw std::runtime_error("load_ensemble: truncated file " + path);
    if (std::memcmp(magic, kEnsMagic, sizeof magic) != 0)
        throw std::runtime_error("load_ensemble: bad magic / unsupported version in " + path);
    Ensemble e;
    std::uint64_t count = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof count);
    is.read(reinterpret_cast<char*>(&e.transform.sale_max), sizeof(double));
    if (!is || count == 0) throw std::runtime_error("load_ensemble: bad header in " + path);
    for (std::uint64_t i = 0; i < count; ++i)
        e.members.push_back(load_network_stream(is, path));
    return e;
}

std::vector<std::string> export_embeddings(const Network& n, const std::string& directory) {
    const auto embs = extract_embeddings(n);
    std::filesystem::create_directories(directory);
    std::vector<std::string> written;
    nlohmann::json manifest = nlohmann::json::array();
    char buf[32];
    for (const auto& e : embs) {
        const auto& f = n.schema.features[e.feature];
        const std::string path = directory + "/" + f.name + ".csv";
        std::ofstream os(path);
        if (!os) throw std::runtime_error("export_embeddings: cannot open " + path);
        os << "category_label";
        for (std::size_t b = 0; b < e.w.cols(); ++b) os << ",e_" << b;
        os << "\n";
        for (std::size_t a = 0; a < e.w.rows(); ++a) {
            os << (a < f.labels.size() ? f.labels[a] : std::to_string(a));
            for (std::size_t b = 0; b < e.w.cols(); ++b) {
                std::snprintf(buf, sizeof buf, "%.17g", e.w(a, b));
                os << ',' << buf;
            }
            os << "\n";
        }
        if (!os) throw std::runtime_error("export_embeddings: write failed for " + path);
        manifest.push_back(
            {{"feature", f.name}, {"file", f.name + ".csv"}, {"rows", e.w.rows()},
             {"cols", e.w.cols()}});
        written.push_back(path);
    }
    const std::string mpath = directory + "/manifest.json";
    std::ofstream ms(mpath);
    ms << manifest.dump(2) << "\n";
    if (!ms) throw std::runtime_error("export_embeddings: write failed for " + mpath);
    written.push_back(mpath);
    return written;
}

std::vector<EmbeddingMatrix> import_embeddings(const FeatureSchema& schema,
                                               const std::string& directory) {
    std::vector<EmbeddingMatrix> out;
    for (std::size_t f = 0; f < schema.feature_count(); ++f) {
        const auto& spec = schema.features[f];
        const std::string path = directory + "/" + spec.name + ".csv";
        std::ifstream is(path);
        if (!is) throw std::runtime_error("import_embeddings: cannot open " + path);
        std::string line;
        if (!std::getline(is, line))
            throw std::runtime_error("import_embeddings: empty file " + path);
        EmbeddingMatrix e{f, Matrix(spec.cardinality, spec.embedding_dim)};
        std::size_t row = 0;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            if (row >= spec.cardinality)
                throw std::runtime_error("import_embeddings: too many rows in " + path);
            std::size_t pos = line.find(',');
            if (pos == std::string::npos)
                throw std::runtime_error("import_embeddings: malformed row in " + path);
            for (std::size_t b = 0; b < spec.embedding_dim; ++b) {
                const std::size_t next = line.find(',', pos + 1);
                e.w(row, b) = std::stod(line.substr(pos + 1, next - pos - 1));
                pos = next;
            }
            ++row;
        }
        if (row != spec.cardinality)
            throw std::runtime_error("import_embeddings: row count mismatch in " + path);
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace ee
