#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrec/attention.hpp"
#include "attrec/corpus.hpp"
#include "attrec/matrix.hpp"

namespace attrec {

// Full parameter set. Items get two separate tables on purpose: item_short
// feeds the attention block and the short-term half of the score, item_long
// pairs with the user table for the long-term half. They are never shared.
struct ModelParams {
    Matrix item_short;  // N x d
    Matrix item_long;   // N x d
    Matrix users;       // M x d
    AttentionParams attention;
    double omega = 0.3;         // weight on the long-term distance
    std::size_t window_len = 5; // context length the model was trained with
    bool attention_enabled = true;  // off = ablation, intent is the window mean

    std::size_t dim() const { return item_short.cols(); }
    std::size_t num_users() const { return users.rows(); }
    std::size_t num_items() const { return item_short.rows(); }
};

/// Fresh model with every table drawn uniformly from [-1/sqrt(dim), 1/sqrt(dim)].
/// Flags other than untied_projections keep their defaults; callers adjust
/// them afterwards.
ModelParams init_model(std::size_t num_users, std::size_t num_items, std::size_t dim,
                       bool untied_projections, Rng& rng);

/// Copies the given rows of a table into a dense window matrix.
Matrix gather_rows(const Matrix& table, std::span<const std::uint32_t> indices);

// Short-term intent for one context window plus the attention cache needed
// for the backward pass (absent when attention is disabled and the intent
// is just the window mean).
struct IntentState {
    std::vector<double> intent;
    std::optional<AttentionOutput> attention;
};

IntentState compute_intent(const ModelParams& params, std::span<const std::uint32_t> window);

/// Preference distance for (user, item) given the user's short-term intent.
/// Smaller means better:
///   omega * ||U_u - V_i||^2 + (1 - omega) * ||intent - X_i||^2
double score_item(const ModelParams& params, std::uint32_t user, std::uint32_t item,
                  std::span<const double> intent);

/// Pairwise margin hinge: sum over all (positive, negative) score pairs of
/// max(0, pos + margin - neg). Scores are distances, so positives should
/// come out below negatives by at least the margin.
double hinge_loss(std::span<const double> positive_scores,
                  std::span<const double> negative_scores, double margin);

// Gradient accumulator sized to the model. Embedding tables are mirrored
// densely but only touched rows are ever written or reset, with the touched
// lists kept in first-touch order so batch application stays deterministic.
struct GradBuffer {
    Matrix d_item_short, d_item_long, d_users;
    Matrix d_query_weights, d_key_weights;
    std::vector<std::uint32_t> touched_short, touched_long, touched_users;
    double loss_sum = 0.0;
    std::size_t instances = 0;

    void init(const ModelParams& params);
    void reset();

    std::span<double> short_row(std::uint32_t i);
    std::span<double> long_row(std::uint32_t i);
    std::span<double> user_row(std::uint32_t u);

private:
    std::vector<std::uint8_t> short_seen_, long_seen_, users_seen_;
};

// Per-instance loss/gradient options. regularize_embeddings is normally the
// complement of norm clipping: with clipping on, only the projection
// weights carry the quadratic penalty.
struct LossOptions {
    double margin = 0.5;
    double lambda = 0.0;
    bool regularize_embeddings = true;
};

/// Scores an instance's positives and sampled negatives, forms all hinge
/// pairs, and accumulates gradients for every touched parameter into `buf`.
/// Returns this instance's loss (hinge plus its regularization share) and
/// also adds it to buf.loss_sum. Pairs sitting exactly at the margin
/// boundary contribute zero gradient.
double accumulate_instance(const ModelParams& params, const TrainingInstance& instance,
                           std::span<const std::uint32_t> negatives, const LossOptions& opts,
                           GradBuffer& buf);

/// Projects every embedding row (both item tables and users) onto the unit
/// ball: rows with norm above 1 are rescaled to norm 1, shorter rows are
/// untouched. The projection weights are never clipped.
void clip_norms(ModelParams& params);

// Checkpoint payload: the parameters plus the effective configuration text
// the run was produced with.
struct Checkpoint {
    ModelParams params;
    std::string config_echo;
};

/// Binary checkpoint, native little-endian doubles. Loading restores
/// bit-identical parameters.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace attrec
