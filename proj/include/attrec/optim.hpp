#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attrec/corpus.hpp"
#include "attrec/eval.hpp"
#include "attrec/model.hpp"

namespace attrec {

// Per-tensor sum of squared gradients for Adagrad.
struct AdagradState {
    Matrix item_short, item_long, users;
    Matrix query_weights, key_weights;
    void init(const ModelParams& params);
};

/// Adagrad update over a whole tensor:
///   accum += grad^2;  param -= lr * grad / (sqrt(accum) + eps)
/// Coordinates with zero gradient still pass through unchanged, so this is
/// only used for the dense projection weights.
void adagrad_step(Matrix& param, const Matrix& grad, Matrix& accum, double lr, double eps);

/// Row-sparse variant for the embedding tables: only the listed rows are
/// read or written, untouched rows keep their accumulator and value.
void adagrad_step_rows(Matrix& param, const Matrix& grad,
                       std::span<const std::uint32_t> rows, Matrix& accum, double lr,
                       double eps);

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 1000;
    std::uint64_t seed = 42;
    std::size_t window_len = 5;   // L: context items per instance
    std::size_t num_targets = 3;  // T: positives per instance, also negatives drawn
    std::size_t dim = 100;
    double omega = 0.3;
    double margin = 0.5;
    double lambda = 0.001;
    double learning_rate = 0.05;
    double adagrad_eps = 1e-8;
    Aggregation aggregation = Aggregation::Mean;
    bool clip_embedding_norms = false;  // unit-ball projection instead of embedding l2
    bool use_time_encoding = true;
    bool untied_projections = false;
    bool attention_enabled = true;
    bool negatives_exclude_history = false;  // negatives avoid the user's whole sequence
    std::size_t eval_threads = 1;
    bool check_invariants = false;  // per-epoch sanity sweeps, for tests
};

/// Range checks on every field. Returns one message per problem; empty
/// means the config is usable.
std::vector<std::string> validate(const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;    // 1-based
    double mean_loss = 0.0;   // epoch loss / instance count
    double val_hr = 0.0;      // validation hit ratio @50 after this epoch
    double val_mrr = 0.0;
};

struct TrainResult {
    ModelParams params;  // snapshot from the best validation epoch
    std::vector<EpochRecord> trace;
    std::size_t best_epoch = 0;
    double best_val_hr = -1.0;
};

/// Full training run: init, shuffled sliding-window batches with fresh
/// negatives each epoch, Adagrad updates (plus norm clipping when enabled),
/// validation after every epoch, and snapshot of the best epoch by
/// validation hit ratio (earlier epoch wins ties). Byte-reproducible for a
/// fixed config and corpus.
TrainResult train(const InteractionLog& log, const Split& split, const TrainConfig& config);

/// Tab-separated trace: '#' config header, a column comment, then one line
/// per epoch (epoch, mean loss, validation hr@50, validation mrr).
void write_trace(const TrainResult& result, const std::string& config_echo,
                 const std::filesystem::path& path);

}  // namespace attrec
