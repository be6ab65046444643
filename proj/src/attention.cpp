#include "attrec/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace attrec {
namespace {

// Additive mask applied to self-affinity logits before the softmax.
constexpr double kMaskValue = -1e9;

void relu_backward_inplace(Matrix& grad, const Matrix& pre) {
    for (std::size_t n = 0; n < grad.size(); ++n) {
        if (pre.data()[n] <= 0.0) grad.data()[n] = 0.0;
    }
}

}  // namespace

Aggregation aggregation_from_string(std::string_view name) {
    if (name == "mean") return Aggregation::Mean;
    if (name == "sum") return Aggregation::Sum;
    if (name == "max") return Aggregation::Max;
    if (name == "min") return Aggregation::Min;
    throw std::invalid_argument("unknown aggregation '" + std::string(name) +
                                "', expected mean, sum, max or min");
}

std::string_view to_string(Aggregation agg) {
    switch (agg) {
        case Aggregation::Mean: return "mean";
        case Aggregation::Sum: return "sum";
        case Aggregation::Max: return "max";
        case Aggregation::Min: return "min";
    }
    throw std::logic_error("to_string: bad aggregation value");
}

std::vector<double> time_encoding(std::size_t step, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw std::invalid_argument("time_encoding: dim must be positive and even, got " +
                                    std::to_string(dim));
    }
    std::vector<double> code(dim);
    for (std::size_t i = 0; 2 * i < dim; ++i) {
        const double angle =
            static_cast<double>(step) / std::pow(10000.0, 2.0 * static_cast<double>(i) / dim);
        code[2 * i] = std::sin(angle);
        code[2 * i + 1] = std::cos(angle);
    }
    return code;
}

AttentionOutput attend(const Matrix& window, const AttentionParams& params) {
    const std::size_t len = window.rows();
    const std::size_t dim = window.cols();
    if (len == 0 || dim == 0) {
        throw std::invalid_argument("attend: window must be non-empty");
    }
    if (params.query_weights.rows() != dim || params.query_weights.cols() != dim) {
        throw std::invalid_argument("attend: query weights are " +
                                    std::to_string(params.query_weights.rows()) + "x" +
                                    std::to_string(params.query_weights.cols()) +
                                    " but the window dim is " + std::to_string(dim));
    }
    if (params.untied_projections &&
        (params.key_weights.rows() != dim || params.key_weights.cols() != dim)) {
        throw std::invalid_argument("attend: key weights do not match the window dim");
    }

    AttentionOutput out;
    out.input = window;
    out.encoded = window;
    if (params.use_time_encoding) {
        // Position codes mark how recent each row is; they feed only the
        // query/key side, never the values.
        for (std::size_t t = 0; t < len; ++t) {
            auto code = time_encoding(t, dim);
            auto row = out.encoded.row(t);
            for (std::size_t c = 0; c < dim; ++c) row[c] += code[c];
        }
    }

    out.query_pre = matmul(out.encoded, params.query_weights);
    out.query_act = relu(out.query_pre);
    if (params.untied_projections) {
        out.key_pre = matmul(out.encoded, params.key_weights);
        out.key_act = relu(out.key_pre);
    } else {
        out.key_pre = out.query_pre;
        out.key_act = out.query_act;
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    out.logits = Matrix(len, len);
    for (std::size_t i = 0; i < len; ++i) {
        auto q = out.query_act.row(i);
        for (std::size_t j = 0; j < len; ++j) {
            auto k = out.key_act.row(j);
            double dot = 0.0;
            for (std::size_t c = 0; c < dim; ++c) dot += q[c] * k[c];
            out.logits(i, j) = dot * scale;
        }
    }
    if (len > 1) {
        // A single-row window keeps its one unmasked logit; masking it
        // would softmax a row of pure sentinels.
        for (std::size_t i = 0; i < len; ++i) out.logits(i, i) = kMaskValue;
    }

    out.affinity = row_softmax(out.logits);
    out.attended = matmul(out.affinity, out.input);
    out.intent = aggregate(out.attended, params.aggregation);
    return out;
}

std::vector<double> aggregate(const Matrix& attended, Aggregation agg) {
    if (attended.rows() == 0 || attended.cols() == 0) {
        throw std::invalid_argument("aggregate: empty input");
    }
    const std::size_t len = attended.rows();
    const std::size_t dim = attended.cols();
    std::vector<double> out(dim);
    switch (agg) {
        case Aggregation::Mean:
        case Aggregation::Sum:
            for (std::size_t t = 0; t < len; ++t) {
                auto row = attended.row(t);
                for (std::size_t c = 0; c < dim; ++c) out[c] += row[c];
            }
            if (agg == Aggregation::Mean) {
                for (double& v : out) v /= static_cast<double>(len);
            }
            break;
        case Aggregation::Max:
        case Aggregation::Min:
            for (std::size_t c = 0; c < dim; ++c) out[c] = attended(0, c);
            for (std::size_t t = 1; t < len; ++t) {
                auto row = attended.row(t);
                for (std::size_t c = 0; c < dim; ++c) {
                    if (agg == Aggregation::Max ? row[c] > out[c] : row[c] < out[c]) {
                        out[c] = row[c];
                    }
                }
            }
            break;
    }
    return out;
}

AttentionGrads attend_backward(const AttentionOutput& out, std::span<const double> d_intent,
                               const AttentionParams& params) {
    const std::size_t len = out.input.rows();
    const std::size_t dim = out.input.cols();
    if (d_intent.size() != dim) {
        throw std::invalid_argument("attend_backward: d_intent size does not match dim");
    }

    Matrix d_attended(len, dim);
    switch (params.aggregation) {
        case Aggregation::Mean:
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t c = 0; c < dim; ++c) {
                    d_attended(t, c) = d_intent[c] / static_cast<double>(len);
                }
            }
            break;
        case Aggregation::Sum:
            for (std::size_t t = 0; t < len; ++t) {
                for (std::size_t c = 0; c < dim; ++c) d_attended(t, c) = d_intent[c];
            }
            break;
        case Aggregation::Max:
        case Aggregation::Min:
            // Subgradient: all credit to the first row attaining the extreme.
            for (std::size_t c = 0; c < dim; ++c) {
                std::size_t pick = 0;
                for (std::size_t t = 1; t < len; ++t) {
                    const bool better = params.aggregation == Aggregation::Max
                                            ? out.attended(t, c) > out.attended(pick, c)
                                            : out.attended(t, c) < out.attended(pick, c);
                    if (better) pick = t;
                }
                d_attended(pick, c) = d_intent[c];
            }
            break;
    }

    // Value path: attended = affinity * input.
    Matrix d_affinity = matmul(d_attended, transpose(out.input));
    Matrix d_input = matmul(transpose(out.affinity), d_attended);

    // Softmax backward row by row; the masked diagonal stays at zero
    // gradient because its output never moves.
    Matrix d_logits(len, len);
    for (std::size_t i = 0; i < len; ++i) {
        double rowdot = 0.0;
        for (std::size_t k = 0; k < len; ++k) rowdot += d_affinity(i, k) * out.affinity(i, k);
        for (std::size_t j = 0; j < len; ++j) {
            d_logits(i, j) = out.affinity(i, j) * (d_affinity(i, j) - rowdot);
        }
    }
    if (len > 1) {
        for (std::size_t i = 0; i < len; ++i) d_logits(i, i) = 0.0;
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    Matrix d_query_act = matmul(d_logits, out.key_act);
    Matrix d_key_act = matmul(transpose(d_logits), out.query_act);
    for (std::size_t n = 0; n < d_query_act.size(); ++n) d_query_act.data()[n] *= scale;
    for (std::size_t n = 0; n < d_key_act.size(); ++n) d_key_act.data()[n] *= scale;

    AttentionGrads grads;
    const Matrix encoded_t = transpose(out.encoded);
    if (params.untied_projections) {
        relu_backward_inplace(d_query_act, out.query_pre);
        relu_backward_inplace(d_key_act, out.key_pre);
        grads.d_query_weights = matmul(encoded_t, d_query_act);
        grads.d_key_weights = matmul(encoded_t, d_key_act);
        Matrix d_encoded = matmul(d_query_act, transpose(params.query_weights));
        const Matrix d_enc_k = matmul(d_key_act, transpose(params.key_weights));
        for (std::size_t n = 0; n < d_encoded.size(); ++n) {
            d_encoded.data()[n] += d_enc_k.data()[n];
        }
        for (std::size_t n = 0; n < d_input.size(); ++n) {
            d_input.data()[n] += d_encoded.data()[n];
        }
    } else {
        // Tied projection: query and key gradients meet at the shared
        // pre-activation before hitting the one weight matrix.
        Matrix d_pre(len, dim);
        for (std::size_t n = 0; n < d_pre.size(); ++n) {
            d_pre.data()[n] = d_query_act.data()[n] + d_key_act.data()[n];
        }
        relu_backward_inplace(d_pre, out.query_pre);
        grads.d_query_weights = matmul(encoded_t, d_pre);
        const Matrix d_encoded = matmul(d_pre, transpose(params.query_weights));
        for (std::size_t n = 0; n < d_input.size(); ++n) {
            d_input.data()[n] += d_encoded.data()[n];
        }
    }
    // The position codes are constants, so d_encoded passes straight
    // through to the raw window rows.
    grads.d_input = std::move(d_input);
    return grads;
}

}  // namespace attrec
