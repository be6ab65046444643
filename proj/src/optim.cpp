#include "attrec/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace attrec {
namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void check_shapes(const Matrix& param, const Matrix& grad, const Matrix& accum,
                  const char* who) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols() ||
        param.rows() != accum.rows() || param.cols() != accum.cols()) {
        throw std::invalid_argument(std::string(who) + ": param/grad/accum shapes differ");
    }
}

}  // namespace

void AdagradState::init(const ModelParams& params) {
    item_short = Matrix(params.num_items(), params.dim());
    item_long = Matrix(params.num_items(), params.dim());
    users = Matrix(params.num_users(), params.dim());
    query_weights = Matrix(params.dim(), params.dim());
    key_weights = params.attention.untied_projections ? Matrix(params.dim(), params.dim())
                                                      : Matrix();
}

void adagrad_step(Matrix& param, const Matrix& grad, Matrix& accum, double lr, double eps) {
    check_shapes(param, grad, accum, "adagrad_step");
    for (std::size_t n = 0; n < param.size(); ++n) {
        const double g = grad.data()[n];
        accum.data()[n] += g * g;
        param.data()[n] -= lr * g / (std::sqrt(accum.data()[n]) + eps);
    }
}

void adagrad_step_rows(Matrix& param, const Matrix& grad,
                       std::span<const std::uint32_t> rows, Matrix& accum, double lr,
                       double eps) {
    check_shapes(param, grad, accum, "adagrad_step_rows");
    for (auto r : rows) {
        if (r >= param.rows()) {
            throw std::out_of_range("adagrad_step_rows: row " + std::to_string(r) +
                                    " out of " + std::to_string(param.rows()));
        }
        auto p = param.row(r);
        auto g = grad.row(r);
        auto a = accum.row(r);
        for (std::size_t c = 0; c < p.size(); ++c) {
            a[c] += g[c] * g[c];
            p[c] -= lr * g[c] / (std::sqrt(a[c]) + eps);
        }
    }
}

std::vector<std::string> validate(const TrainConfig& config) {
    std::vector<std::string> problems;
    if (config.epochs < 1) problems.push_back("epochs must be at least 1");
    if (config.batch_size < 1) problems.push_back("batch-size must be at least 1");
    if (config.window_len < 1) problems.push_back("L must be at least 1");
    if (config.num_targets < 1) problems.push_back("T must be at least 1");
    if (config.dim < 1) problems.push_back("d must be at least 1");
    if (config.use_time_encoding && config.dim % 2 != 0) {
        problems.push_back("d must be even when time encodings are enabled");
    }
    if (!(config.omega >= 0.0 && config.omega <= 1.0)) {
        problems.push_back("omega must lie in [0,1]");
    }
    if (!(config.margin >= 0.0)) problems.push_back("gamma must be non-negative");
    if (!(config.lambda >= 0.0)) problems.push_back("lambda must be non-negative");
    if (!(config.learning_rate > 0.0)) problems.push_back("learning-rate must be positive");
    if (!(config.adagrad_eps > 0.0)) problems.push_back("adagrad-eps must be positive");
    return problems;
}

TrainResult train(const InteractionLog& log, const Split& split, const TrainConfig& config) {
    if (auto problems = validate(config); !problems.empty()) {
        std::string msg = "train: invalid config";
        for (const auto& p : problems) msg += "; " + p;
        throw std::invalid_argument(msg);
    }
    if (split.train.size() != log.num_users()) {
        throw std::invalid_argument("train: split does not match the corpus");
    }

    const auto instances = windowize(split, config.window_len, config.num_targets);
    if (instances.empty()) {
        throw std::runtime_error(
            "train: no training instances; every user's history is shorter than L+T=" +
            std::to_string(config.window_len + config.num_targets));
    }

    Rng rng(config.seed);
    ModelParams params = init_model(log.num_users(), log.num_items(), config.dim,
                                    config.untied_projections, rng);
    params.omega = config.omega;
    params.window_len = config.window_len;
    params.attention_enabled = config.attention_enabled;
    params.attention.use_time_encoding = config.use_time_encoding;
    params.attention.aggregation = config.aggregation;

    AdagradState accum;
    accum.init(params);
    GradBuffer buf;
    buf.init(params);
    LossOptions loss_opts;
    loss_opts.margin = config.margin;
    loss_opts.lambda = config.lambda;
    loss_opts.regularize_embeddings = !config.clip_embedding_norms;

    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.params = params;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            buf.reset();
            for (std::size_t n = begin; n < end; ++n) {
                const TrainingInstance& inst = instances[order[n]];
                std::span<const std::uint32_t> avoid;
                if (config.negatives_exclude_history) avoid = log.sequences[inst.user];
                const auto negatives = sample_negatives(inst, log.num_items(),
                                                        config.num_targets, rng, avoid);
                if (config.check_invariants) {
                    std::unordered_set<std::uint32_t> seen(inst.positives.begin(),
                                                           inst.positives.end());
                    for (auto neg : negatives) {
                        if (!seen.insert(neg).second) {
                            throw std::logic_error("train: negative collides with positives");
                        }
                    }
                }
                epoch_loss += accumulate_instance(params, inst, negatives, loss_opts, buf);
            }
            adagrad_step_rows(params.item_short, buf.d_item_short, buf.touched_short,
                              accum.item_short, config.learning_rate, config.adagrad_eps);
            adagrad_step_rows(params.item_long, buf.d_item_long, buf.touched_long,
                              accum.item_long, config.learning_rate, config.adagrad_eps);
            adagrad_step_rows(params.users, buf.d_users, buf.touched_users, accum.users,
                              config.learning_rate, config.adagrad_eps);
            adagrad_step(params.attention.query_weights, buf.d_query_weights,
                         accum.query_weights, config.learning_rate, config.adagrad_eps);
            if (config.untied_projections) {
                adagrad_step(params.attention.key_weights, buf.d_key_weights,
                             accum.key_weights, config.learning_rate, config.adagrad_eps);
            }
            if (config.clip_embedding_norms) clip_norms(params);
        }

        if (config.check_invariants && config.clip_embedding_norms) {
            for (const Matrix* table : {&params.item_short, &params.item_long, &params.users}) {
                for (double norm : row_l2_norms(*table)) {
                    if (norm > 1.0 + 1e-9) {
                        throw std::logic_error("train: row norm " + fmt_double(norm) +
                                               " escaped the unit ball");
                    }
                }
            }
        }

        const EvalReport val = evaluate(params, split, 50, CandidatePolicy::ExcludeSeen,
                                        EvalTarget::Validation, config.eval_threads);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = epoch_loss / static_cast<double>(instances.size());
        rec.val_hr = val.hit_ratio;
        rec.val_mrr = val.mrr;
        result.trace.push_back(rec);

        // Strict improvement keeps the earliest best epoch on ties.
        if (val.hit_ratio > result.best_val_hr) {
            result.best_val_hr = val.hit_ratio;
            result.best_epoch = epoch;
            result.params = params;
        }
    }
    return result;
}

void write_trace(const TrainResult& result, const std::string& config_echo,
                 const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "attrec.trace 1\n";
    std::size_t start = 0;
    while (start < config_echo.size()) {
        std::size_t end = config_echo.find('\n', start);
        if (end == std::string::npos) end = config_echo.size();
        out << "# " << config_echo.substr(start, end - start) << "\n";
        start = end + 1;
    }
    out << "# columns: epoch\tmean_loss\tval_hr@50\tval_mrr\n";
    for (const auto& rec : result.trace) {
        out << rec.epoch << '\t' << fmt_double(rec.mean_loss) << '\t' << fmt_double(rec.val_hr)
            << '\t' << fmt_double(rec.val_mrr) << "\n";
    }
    out << "# best_epoch " << result.best_epoch << "\n";
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

}  // namespace attrec
