#pragma once

#include "eetab/dataset.hpp"
#include "eetab/matrix.hpp"
#include "eetab/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ee {

// The learned entity embedding of one categorical feature: row alpha is the
// embedding vector of category alpha.
struct EmbeddingMatrix {
    std::size_t feature = 0; // schema index
    Matrix w;                // m_i x D_i
};

enum class InputMode { embed, one_hot, one_hot_extra_dense };

struct DenseLayer {
    Matrix w;              // out x in, row-major
    std::vector<double> b; // out
};

struct NetworkConfig {
    InputMode mode = InputMode::embed;
    std::size_t hidden1 = 1000; // 0 = layer absent
    std::size_t hidden2 = 500;  // 0 = layer absent
    bool unseen_mean_fallback = false; // out-of-range category -> mean embedding row
};

// Embedding layers (or one-hot input), up to two dense ReLU layers, one
// sigmoid output neuron.
struct Network {
    FeatureSchema schema;
    NetworkConfig cfg;
    std::vector<Matrix> emb;        // embed mode: one m_i x D_i matrix per feature
    DenseLayer extra;               // one_hot_extra_dense: total_m -> total_D, ReLU
    std::vector<DenseLayer> hidden; // ReLU layers
    DenseLayer out;                 // 1 x last_width, sigmoid

    Network() = default;
    Network(FeatureSchema schema_, NetworkConfig cfg_, Rng& rng);

    std::size_t dense_input_dim() const; // width seen by the first hidden layer
    std::size_t param_count() const;

    // Flat parameter enumeration in a fixed order (embeddings by feature,
    // extra, hidden layers, output; weights before bias).
    std::vector<std::span<double>> param_views();
    std::vector<std::span<const double>> param_views() const;
};

// Row `category` of the embedding; with fallback enabled an out-of-range index
// maps to the mean of all rows, otherwise it throws.
std::vector<double> embed_lookup(const EmbeddingMatrix& e, std::int64_t category,
                                 bool mean_fallback = false);

// Single-sample prediction on the sigmoid scale, in (0,1).
double forward(const Network& n, std::span<const std::int32_t> x);

// Gradient buffers mirroring the trainable tensors.
struct NetGrads {
    std::vector<Matrix> emb;
    DenseLayer extra;
    std::vector<DenseLayer> hidden;
    DenseLayer out;

    explicit NetGrads(const Network& n);
    void zero();
    std::vector<std::span<double>> views();
    std::vector<std::span<const double>> views() const;
};

// Activations captured by a batch forward pass.
struct ForwardCache {
    std::size_t batch = 0;
    Matrix in;                 // B x dense_input (embed: gathered, extra: post-ReLU)
    Matrix extra_z;            // B x total_D pre-activation (extra mode)
    std::vector<Matrix> z, h;  // per hidden layer
    std::vector<double> zout;  // B, pre-sigmoid
    std::vector<double> pred;  // B, sigmoid outputs
};

// xs is row-major B x feature_count. Parallel over samples.
void forward_batch(const Network& n, std::span<const std::int32_t> xs, std::size_t batch,
                   ForwardCache& cache);

// Mean-squared-error gradients over the batch; returns the batch loss.
// Embedding rows for categories absent from the batch receive exactly zero.
double backward_batch(const Network& n, std::span<const std::int32_t> xs,
                      std::span<const double> targets, const ForwardCache& cache, NetGrads& g);

// Convenience wrapper matching the batch operation contract.
NetGrads backward(const Network& n, std::span<const std::int32_t> xs,
                  std::span<const double> targets);

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::uint64_t t = 0;
    std::vector<double> m, v; // flat, concatenated over param views

    explicit AdamState(std::size_t param_count, AdamConfig cfg_ = {})
        : cfg(cfg_), m(param_count, 0.0), v(param_count, 0.0) {}
};

// Standard Adam update with bias correction; increments s.t.
void adam_step(AdamState& s, std::vector<std::span<double>> params,
               std::vector<std::span<const double>> grads);

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    std::size_t ensemble_size = 5;
    AdamConfig adam;
    NetworkConfig net;
};

struct TrainResult {
    Network net;
    double initial_loss = 0.0;
    std::vector<double> epoch_loss; // mean batch loss per epoch
};

// Seeded init, per-epoch seeded shuffle, mini-batch Adam on the transformed
// target. Deterministic for fixed (cfg, data), independent of thread count.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const TargetTransform& transform);

struct Ensemble {
    std::vector<Network> members;
    TargetTransform transform;

    // Mean of the member sigmoid-scale outputs.
    double predict_transformed(std::span<const std::int32_t> x) const;
    // inverse_transform of the mean transformed prediction, per row.
    std::vector<double> predict_sales(const Dataset& d) const;
};

// Members are trained with seeds cfg.seed + 0 .. ensemble_size-1.
Ensemble train_ensemble(const TrainConfig& cfg, const Dataset& train,
                        const TargetTransform& transform);

std::vector<double> ensemble_train_predict(const TrainConfig& cfg, const Dataset& train,
                                           const Dataset& test, const TargetTransform& transform);

// Copies of the live weight matrices; throws unless the network is in embed mode.
std::vector<EmbeddingMatrix> extract_embeddings(const Network& n);

// Rows are the concatenated embed_lookup results in schema order.
Matrix embed_dataset(const Dataset& d, const std::vector<EmbeddingMatrix>& embs);

// Embed-mode forward is identical to one-hot forward once the block-diagonal
// embedding matrix is folded into the first dense layer.
Network to_one_hot_equivalent(const Network& n);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t flagged = 0; // parameters skipped because a ReLU changed state
};

// Central-difference check of every parameter gradient. Parameters whose
// +/-h perturbation flips any ReLU activation (a kink crossing) are flagged
// and excluded from the max.
GradCheckResult grad_check(Network& n, std::span<const std::int32_t> xs,
                           std::span<const double> targets, double h);

void save_network(const Network& n, const std::string& path);
Network load_network(const std::string& path);

// Ensemble checkpoint: member count, the target transform, then each member
// as an embedded network blob.
void save_ensemble(const Ensemble& e, const std::string& path);
Ensemble load_ensemble(const std::string& path);

// One CSV per feature (header: category_label,e_0..e_{D-1}) plus a JSON
// manifest listing shapes. Returns the written file paths.
std::vector<std::string> export_embeddings(const Network& n, const std::string& directory);
std::vector<EmbeddingMatrix> import_embeddings(const FeatureSchema& schema,
                                               const std::string& directory);

} // namespace ee
