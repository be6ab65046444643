#include "attrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace attrec {

ModelParams init_model(std::size_t num_users, std::size_t num_items, std::size_t dim,
                       bool untied_projections, Rng& rng) {
    if (num_users == 0 || num_items == 0 || dim == 0) {
        throw std::invalid_argument("init_model: users, items and dim must be positive");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    auto draw = [&](Matrix& mat, std::size_t r, std::size_t c) {
        mat = Matrix(r, c);
        for (std::size_t n = 0; n < mat.size(); ++n) {
            mat.data()[n] = rng.uniform(-bound, bound);
        }
    };
    ModelParams m;
    draw(m.item_short, num_items, dim);
    draw(m.item_long, num_items, dim);
    draw(m.users, num_users, dim);
    draw(m.attention.query_weights, dim, dim);
    m.attention.untied_projections = untied_projections;
    if (untied_projections) {
        draw(m.attention.key_weights, dim, dim);
    }
    return m;
}

Matrix gather_rows(const Matrix& table, std::span<const std::uint32_t> indices) {
    Matrix out(indices.size(), table.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= table.rows()) {
            throw std::out_of_range("gather_rows: index " + std::to_string(indices[r]) +
                                    " out of " + std::to_string(table.rows()));
        }
        auto src = table.row(indices[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

IntentState compute_intent(const ModelParams& params, std::span<const std::uint32_t> window) {
    if (window.empty()) {
        throw std::invalid_argument("compute_intent: window must be non-empty");
    }
    Matrix win = gather_rows(params.item_short, window);
    IntentState st;
    if (params.attention_enabled) {
        st.attention = attend(win, params.attention);
        st.intent = st.attention->intent;
    } else {
        st.intent = aggregate(win, Aggregation::Mean);
    }
    return st;
}

double score_item(const ModelParams& params, std::uint32_t user, std::uint32_t item,
                  std::span<const double> intent) {
    if (user >= params.num_users() || item >= params.num_items() ||
        intent.size() != params.dim()) {
        throw std::out_of_range("score_item: user/item/intent out of range");
    }
    auto u = params.users.row(user);
    auto v = params.item_long.row(item);
    auto x = params.item_short.row(item);
    double long_sq = 0.0;
    double short_sq = 0.0;
    for (std::size_t c = 0; c < intent.size(); ++c) {
        const double dl = u[c] - v[c];
        long_sq += dl * dl;
        const double ds = intent[c] - x[c];
        short_sq += ds * ds;
    }
    return params.omega * long_sq + (1.0 - params.omega) * short_sq;
}

double hinge_loss(std::span<const double> positive_scores,
                  std::span<const double> negative_scores, double margin) {
    if (positive_scores.empty() || negative_scores.empty()) {
        throw std::invalid_argument("hinge_loss: need at least one positive and one negative");
    }
    double loss = 0.0;
    for (double p : positive_scores) {
        for (double n : negative_scores) {
            const double v = p + margin - n;
            if (v > 0.0) loss += v;
        }
    }
    return loss;
}

void GradBuffer::init(const ModelParams& params) {
    d_item_short = Matrix(params.num_items(), params.dim());
    d_item_long = Matrix(params.num_items(), params.dim());
    d_users = Matrix(params.num_users(), params.dim());
    d_query_weights = Matrix(params.dim(), params.dim());
    d_key_weights = params.attention.untied_projections ? Matrix(params.dim(), params.dim())
                                                        : Matrix();
    short_seen_.assign(params.num_items(), 0);
    long_seen_.assign(params.num_items(), 0);
    users_seen_.assign(params.num_users(), 0);
    touched_short.clear();
    touched_long.clear();
    touched_users.clear();
    loss_sum = 0.0;
    instances = 0;
}

void GradBuffer::reset() {
    auto wipe = [](Matrix& mat, std::vector<std::uint32_t>& touched,
                   std::vector<std::uint8_t>& seen) {
        for (auto r : touched) {
            auto row = mat.row(r);
            std::fill(row.begin(), row.end(), 0.0);
            seen[r] = 0;
        }
        touched.clear();
    };
    wipe(d_item_short, touched_short, short_seen_);
    wipe(d_item_long, touched_long, long_seen_);
    wipe(d_users, touched_users, users_seen_);
    d_query_weights.fill(0.0);
    if (!d_key_weights.empty()) d_key_weights.fill(0.0);
    loss_sum = 0.0;
    instances = 0;
}

std::span<double> GradBuffer::short_row(std::uint32_t i) {
    if (!short_seen_[i]) {
        short_seen_[i] = 1;
        touched_short.push_back(i);
    }
    return d_item_short.row(i);
}

std::span<double> GradBuffer::long_row(std::uint32_t i) {
    if (!long_seen_[i]) {
        long_seen_[i] = 1;
        touched_long.push_back(i);
    }
    return d_item_long.row(i);
}

std::span<double> GradBuffer::user_row(std::uint32_t u) {
    if (!users_seen_[u]) {
        users_seen_[u] = 1;
        touched_users.push_back(u);
    }
    return d_users.row(u);
}

namespace {

// Small de-dup helper; instance row sets have at most a dozen entries, so
// linear scans beat hashing.
void push_unique(std::vector<std::uint32_t>& rows, std::uint32_t r) {
    if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
}

}  // namespace

double accumulate_instance(const ModelParams& params, const TrainingInstance& instance,
                           std::span<const std::uint32_t> negatives, const LossOptions& opts,
                           GradBuffer& buf) {
    if (instance.context.empty() || instance.positives.empty() || negatives.empty()) {
        throw std::invalid_argument(
            "accumulate_instance: context, positives and negatives must be non-empty");
    }
    const std::size_t dim = params.dim();

    IntentState st = compute_intent(params, instance.context);
    const std::vector<double>& intent = st.intent;

    std::vector<double> pos(instance.positives.size());
    std::vector<double> neg(negatives.size());
    for (std::size_t a = 0; a < pos.size(); ++a) {
        pos[a] = score_item(params, instance.user, instance.positives[a], intent);
    }
    for (std::size_t b = 0; b < neg.size(); ++b) {
        neg[b] = score_item(params, instance.user, negatives[b], intent);
    }

    // Every (positive, negative) pair: c counts how many active pairs pull
    // on each score. Pairs exactly at zero take the flat branch of the
    // hinge and contribute nothing.
    double loss = 0.0;
    std::vector<double> c_pos(pos.size(), 0.0);
    std::vector<double> c_neg(neg.size(), 0.0);
    bool any_active = false;
    for (std::size_t a = 0; a < pos.size(); ++a) {
        for (std::size_t b = 0; b < neg.size(); ++b) {
            const double v = pos[a] + opts.margin - neg[b];
            if (v > 0.0) {
                loss += v;
                c_pos[a] += 1.0;
                c_neg[b] -= 1.0;
                any_active = true;
            }
        }
    }

    std::vector<double> d_intent(dim, 0.0);
    if (any_active) {
        auto score_backward = [&](std::uint32_t item, double coef) {
            if (coef == 0.0) return;
            auto u = params.users.row(instance.user);
            auto v = params.item_long.row(item);
            auto x = params.item_short.row(item);
            auto du = buf.user_row(instance.user);
            auto dv = buf.long_row(item);
            auto dx = buf.short_row(item);
            const double cl = 2.0 * params.omega * coef;
            const double cs = 2.0 * (1.0 - params.omega) * coef;
            for (std::size_t c = 0; c < dim; ++c) {
                const double dl = u[c] - v[c];
                du[c] += cl * dl;
                dv[c] -= cl * dl;
                const double dsv = intent[c] - x[c];
                d_intent[c] += cs * dsv;
                dx[c] -= cs * dsv;
            }
        };
        for (std::size_t a = 0; a < pos.size(); ++a) {
            score_backward(instance.positives[a], c_pos[a]);
        }
        for (std::size_t b = 0; b < neg.size(); ++b) {
            score_backward(negatives[b], c_neg[b]);
        }

        if (params.attention_enabled) {
            AttentionGrads ag = attend_backward(*st.attention, d_intent, params.attention);
            for (std::size_t t = 0; t < instance.context.size(); ++t) {
                auto dst = buf.short_row(instance.context[t]);
                auto src = ag.d_input.row(t);
                for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
            }
            for (std::size_t n = 0; n < buf.d_query_weights.size(); ++n) {
                buf.d_query_weights.data()[n] += ag.d_query_weights.data()[n];
            }
            if (params.attention.untied_projections) {
                for (std::size_t n = 0; n < buf.d_key_weights.size(); ++n) {
                    buf.d_key_weights.data()[n] += ag.d_key_weights.data()[n];
                }
            }
        } else {
            const double inv = 1.0 / static_cast<double>(instance.context.size());
            for (std::uint32_t item : instance.context) {
                auto dst = buf.short_row(item);
                for (std::size_t c = 0; c < dim; ++c) dst[c] += d_intent[c] * inv;
            }
        }
    }

    if (opts.lambda > 0.0) {
        // The quadratic penalty covers exactly what this instance touched:
        // the projection weights always, the embedding rows only when the
        // trainer is not clipping norms instead.
        double reg_sq = 0.0;
        auto reg_matrix = [&](const Matrix& w, Matrix& dw) {
            for (std::size_t n = 0; n < w.size(); ++n) {
                const double v = w.data()[n];
                reg_sq += v * v;
                dw.data()[n] += 2.0 * opts.lambda * v;
            }
        };
        reg_matrix(params.attention.query_weights, buf.d_query_weights);
        if (params.attention.untied_projections) {
            reg_matrix(params.attention.key_weights, buf.d_key_weights);
        }
        if (opts.regularize_embeddings) {
            std::vector<std::uint32_t> short_rows;
            std::vector<std::uint32_t> long_rows;
            for (auto i : instance.context) push_unique(short_rows, i);
            for (auto i : instance.positives) {
                push_unique(short_rows, i);
                push_unique(long_rows, i);
            }
            for (auto i : negatives) {
                push_unique(short_rows, i);
                push_unique(long_rows, i);
            }
            auto reg_row = [&](std::span<const double> row, std::span<double> drow) {
                for (std::size_t c = 0; c < dim; ++c) {
                    reg_sq += row[c] * row[c];
                    drow[c] += 2.0 * opts.lambda * row[c];
                }
            };
            for (auto i : short_rows) reg_row(params.item_short.row(i), buf.short_row(i));
            for (auto i : long_rows) reg_row(params.item_long.row(i), buf.long_row(i));
            reg_row(params.users.row(instance.user), buf.user_row(instance.user));
        }
        loss += opts.lambda * reg_sq;
    }

    buf.loss_sum += loss;
    buf.instances += 1;
    return loss;
}

namespace {

void clip_rows(Matrix& mat) {
    for (std::size_t r = 0; r < mat.rows(); ++r) {
        auto row = mat.row(r);
        double sq = 0.0;
        for (double v : row) sq += v * v;
        if (sq > 1.0) {
            const double inv = 1.0 / std::sqrt(sq);
            for (double& v : row) v *= inv;
        }
    }
}

constexpr char kCheckpointMagic[8] = {'A', 'T', 'R', 'E', 'C', 'K', 'P', '1'};

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const std::filesystem::path& path) {
    if (!in.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) {
        throw std::runtime_error(path.string() + ": truncated checkpoint");
    }
}

void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, sizeof v); }

std::uint64_t read_u64(std::ifstream& in, const std::filesystem::path& path) {
    std::uint64_t v = 0;
    read_bytes(in, &v, sizeof v, path);
    return v;
}

void write_matrix(std::ofstream& out, const Matrix& m) {
    write_bytes(out, m.data(), m.size() * sizeof(double));
}

void read_matrix(std::ifstream& in, Matrix& m, std::size_t rows, std::size_t cols,
                 const std::filesystem::path& path) {
    m = Matrix(rows, cols);
    read_bytes(in, m.data(), m.size() * sizeof(double), path);
}

}  // namespace

void clip_norms(ModelParams& params) {
    clip_rows(params.item_short);
    clip_rows(params.item_long);
    clip_rows(params.users);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    const ModelParams& p = ckpt.params;
    write_bytes(out, kCheckpointMagic, sizeof kCheckpointMagic);
    write_u64(out, p.num_users());
    write_u64(out, p.num_items());
    write_u64(out, p.dim());
    write_u64(out, p.window_len);
    const std::uint8_t flags[4] = {
        static_cast<std::uint8_t>(p.attention.untied_projections),
        static_cast<std::uint8_t>(p.attention.use_time_encoding),
        static_cast<std::uint8_t>(p.attention_enabled),
        static_cast<std::uint8_t>(p.attention.aggregation),
    };
    write_bytes(out, flags, sizeof flags);
    write_bytes(out, &p.omega, sizeof p.omega);
    write_matrix(out, p.attention.query_weights);
    if (p.attention.untied_projections) write_matrix(out, p.attention.key_weights);
    write_matrix(out, p.item_short);
    write_matrix(out, p.item_long);
    write_matrix(out, p.users);
    write_u64(out, ckpt.config_echo.size());
    write_bytes(out, ckpt.config_echo.data(), ckpt.config_echo.size());
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    char magic[8];
    read_bytes(in, magic, sizeof magic, path);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw std::runtime_error(path.string() + ": not an attrec checkpoint");
    }
    const std::size_t num_users = read_u64(in, path);
    const std::size_t num_items = read_u64(in, path);
    const std::size_t dim = read_u64(in, path);
    const std::size_t window_len = read_u64(in, path);
    std::uint8_t flags[4];
    read_bytes(in, flags, sizeof flags, path);
    if (flags[3] > 3) {
        throw std::runtime_error(path.string() + ": bad aggregation tag");
    }

    Checkpoint ckpt;
    ModelParams& p = ckpt.params;
    p.window_len = window_len;
    p.attention.untied_projections = flags[0] != 0;
    p.attention.use_time_encoding = flags[1] != 0;
    p.attention_enabled = flags[2] != 0;
    p.attention.aggregation = static_cast<Aggregation>(flags[3]);
    read_bytes(in, &p.omega, sizeof p.omega, path);
    read_matrix(in, p.attention.query_weights, dim, dim, path);
    if (p.attention.untied_projections) {
        read_matrix(in, p.attention.key_weights, dim, dim, path);
    }
    read_matrix(in, p.item_short, num_items, dim, path);
    read_matrix(in, p.item_long, num_items, dim, path);
    read_matrix(in, p.users, num_users, dim, path);
    const std::size_t echo_len = read_u64(in, path);
    ckpt.config_echo.resize(echo_len);
    if (echo_len > 0) read_bytes(in, ckpt.config_echo.data(), echo_len, path);
    return ckpt;
}

}  // namespace attrec
