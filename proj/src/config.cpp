#include "attrec/config.hpp"

#include <cstdio>
#include <sstream>

namespace attrec {
namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

const char* fmt_bool(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string resolve_delimiter(const std::string& delimiter) {
    if (delimiter == "tab") return "\t";
    return delimiter;
}

TrainConfig to_train_config(const RunConfig& config) {
    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.seed = config.seed;
    tc.window_len = config.L;
    tc.num_targets = config.T;
    tc.dim = config.d;
    tc.omega = config.omega;
    tc.margin = config.gamma;
    tc.lambda = config.lambda;
    tc.learning_rate = config.learning_rate;
    tc.aggregation = aggregation_from_string(config.aggregation);
    tc.clip_embedding_norms = config.clip_norms;
    tc.use_time_encoding = config.time_encoding;
    tc.untied_projections = config.untied_projections;
    tc.attention_enabled = config.attention;
    tc.negatives_exclude_history = config.exclude_history_negatives;
    tc.eval_threads = config.threads;
    return tc;
}

std::string echo_prepare(const RunConfig& config) {
    std::ostringstream out;
    out << "delimiter = " << config.delimiter << "\n";
    out << "rating-column = " << fmt_bool(config.rating_column) << "\n";
    out << "min-actions = " << config.min_actions << "\n";
    out << "min-rating = " << fmt_double(config.min_rating) << "\n";
    return out.str();
}

std::string echo_train(const RunConfig& config) {
    std::ostringstream out;
    out << "L = " << config.L << "\n";
    out << "T = " << config.T << "\n";
    out << "d = " << config.d << "\n";
    out << "omega = " << fmt_double(config.omega) << "\n";
    out << "gamma = " << fmt_double(config.gamma) << "\n";
    out << "lambda = " << fmt_double(config.lambda) << "\n";
    out << "learning-rate = " << fmt_double(config.learning_rate) << "\n";
    out << "epochs = " << config.epochs << "\n";
    out << "batch-size = " << config.batch_size << "\n";
    out << "seed = " << config.seed << "\n";
    out << "aggregation = " << config.aggregation << "\n";
    out << "time-encoding = " << fmt_bool(config.time_encoding) << "\n";
    out << "untied-projections = " << fmt_bool(config.untied_projections) << "\n";
    out << "attention = " << fmt_bool(config.attention) << "\n";
    out << "clip-norms = " << fmt_bool(config.clip_norms) << "\n";
    out << "exclude-history-negatives = " << fmt_bool(config.exclude_history_negatives)
        << "\n";
    return out.str();
}

std::string echo_eval(const RunConfig& config, const ModelParams& params) {
    std::ostringstream out;
    out << "L = " << params.window_len << "\n";
    out << "d = " << params.dim() << "\n";
    out << "omega = " << fmt_double(params.omega) << "\n";
    out << "aggregation = " << to_string(params.attention.aggregation) << "\n";
    out << "time-encoding = " << fmt_bool(params.attention.use_time_encoding) << "\n";
    out << "untied-projections = " << fmt_bool(params.attention.untied_projections) << "\n";
    out << "attention = " << fmt_bool(params.attention_enabled) << "\n";
    out << "k = " << config.k << "\n";
    out << "policy = " << config.policy << "\n";
    out << "target = " << config.target << "\n";
    out << "per-user-ranks = " << fmt_bool(config.per_user_ranks) << "\n";
    return out.str();
}

}  // namespace attrec
