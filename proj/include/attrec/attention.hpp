#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attrec/matrix.hpp"

namespace attrec {

// How the attended window rows collapse into a single intent vector.
enum class Aggregation { Mean, Sum, Max, Min };

Aggregation aggregation_from_string(std::string_view name);
std::string_view to_string(Aggregation agg);

// Weights and switches for the short-term attention block. The query and
// key projections share one matrix unless untied_projections is set;
// key_weights stays empty in the tied case.
struct AttentionParams {
    Matrix query_weights;  // d x d
    Matrix key_weights;    // d x d, only when untied
    bool untied_projections = false;
    bool use_time_encoding = true;
    Aggregation aggregation = Aggregation::Mean;

    std::size_t dim() const { return query_weights.rows(); }
    const Matrix& key_matrix() const { return untied_projections ? key_weights : query_weights; }
};

// Forward results plus everything the backward pass needs. The value path
// uses the raw window embeddings, not the time-encoded projections, so both
// are cached.
struct AttentionOutput {
    Matrix affinity;            // L x L, row-stochastic, zero diagonal for L > 1
    Matrix attended;            // L x d
    std::vector<double> intent; // d

    Matrix input;      // raw window rows
    Matrix encoded;    // input + time encodings (equals input when disabled)
    Matrix query_pre;  // pre-ReLU projections
    Matrix key_pre;    // shares query_pre values when tied
    Matrix query_act;
    Matrix key_act;
    Matrix logits;     // scaled and diagonal-masked scores before softmax
};

// Gradients of a scalar objective with respect to the attention inputs.
// d_key_weights is empty in the tied case; d_query_weights then carries the
// combined query+key contribution.
struct AttentionGrads {
    Matrix d_input;
    Matrix d_query_weights;
    Matrix d_key_weights;
};

/// Fixed sinusoidal position code for window offset `step`:
/// sin(step / 10000^(2i/dim)) on even coordinates, cos on odd ones.
/// dim must be even.
std::vector<double> time_encoding(std::size_t step, std::size_t dim);

/// Self-attention over one window (rows oldest first). Queries and keys are
/// ReLU(encoded * W); scores are scaled by 1/sqrt(d) and the diagonal is
/// masked to -1e9 before the softmax so a position cannot attend to itself
/// (skipped for single-row windows, which would otherwise normalize an
/// all-masked row). Values are the raw window rows.
AttentionOutput attend(const Matrix& window, const AttentionParams& params);

/// Collapses attended rows columnwise into the intent vector.
std::vector<double> aggregate(const Matrix& attended, Aggregation agg);

/// Backpropagates d(objective)/d(intent) through aggregation, softmax
/// (including the masked diagonal, whose gradient is pinned to zero), the
/// ReLU projections, and the value path. Max/min aggregation credits the
/// first row attaining the extreme in each column.
AttentionGrads attend_backward(const AttentionOutput& out, std::span<const double> d_intent,
                               const AttentionParams& params);

}  // namespace attrec
