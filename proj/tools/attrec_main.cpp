#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "attrec/config.hpp"
#include "attrec/corpus.hpp"
#include "attrec/eval.hpp"
#include "attrec/model.hpp"
#include "attrec/optim.hpp"

namespace {

using namespace attrec;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

CLI::Validator omega_validator() {
    return CLI::Validator(
        [](std::string& s) -> std::string {
            double v = 0.0;
            try {
                v = std::stod(s);
            } catch (...) {
                return "omega must be a number";
            }
            if (!(v >= 0.0 && v <= 1.0)) return "omega must lie in [0,1]";
            return {};
        },
        "FLOAT in [0,1]");
}

void add_corpus_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--delimiter", cfg.delimiter,
                    "Field separator: 'tab' or a literal string such as '::'")
        ->capture_default_str();
    cmd->add_flag("--rating-column,!--no-rating-column", cfg.rating_column,
                  "Whether input lines carry a rating column");
    cmd->add_option("--min-actions", cfg.min_actions, "Drop users with fewer events than this")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--min-rating", cfg.min_rating,
                    "Keep only events rated at least this; 0 keeps everything")
        ->capture_default_str();
}

void add_hyper_options(CLI::App* cmd, RunConfig& cfg, bool with_omega_lambda) {
    cmd->add_option("--L", cfg.L, "Context window length")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--T", cfg.T, "Target items per window (negatives match this count)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--d", cfg.d, "Embedding dimension")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    if (with_omega_lambda) {
        cmd->add_option("--omega", cfg.omega, "Weight on the long-term distance")
            ->capture_default_str()
            ->check(omega_validator());
        cmd->add_option("--lambda", cfg.lambda, "Quadratic regularization strength")
            ->capture_default_str()
            ->check(CLI::NonNegativeNumber);
    }
    cmd->add_option("--gamma", cfg.gamma, "Hinge margin")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--learning-rate", cfg.learning_rate, "Adagrad learning rate")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", cfg.epochs, "Training epochs")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", cfg.batch_size, "Instances per optimizer step")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", cfg.seed, "Seed for every random draw in the run")
        ->capture_default_str();
    cmd->add_option("--aggregation", cfg.aggregation, "How attended rows collapse to intent")
        ->capture_default_str()
        ->check(CLI::IsMember({"mean", "sum", "max", "min"}));
    cmd->add_flag("--time-encoding,!--no-time-encoding", cfg.time_encoding,
                  "Add sinusoidal position codes to queries and keys");
    cmd->add_flag("--untied-projections", cfg.untied_projections,
                  "Use separate query and key projection matrices");
    cmd->add_flag("--attention,!--no-attention", cfg.attention,
                  "Disable to replace the attention block with a plain window mean");
    cmd->add_flag("--clip-norms,!--no-clip-norms", cfg.clip_norms,
                  "Project embedding rows onto the unit ball after each step");
    cmd->add_flag("--exclude-history-negatives", cfg.exclude_history_negatives,
                  "Sample negatives avoiding the user's entire history");
    cmd->add_option("--threads", cfg.threads, "Worker threads for evaluation passes")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
}

void add_eval_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--k", cfg.k, "Hit ratio cutoff")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--policy", cfg.policy, "Candidate items per user")
        ->capture_default_str()
        ->check(CLI::IsMember({"exclude-seen", "rank-all"}));
    cmd->add_option("--target", cfg.target, "Which held-out item to score")
        ->capture_default_str()
        ->check(CLI::IsMember({"validation", "test"}));
    cmd->add_flag("--per-user-ranks", cfg.per_user_ranks,
                  "Append one rank line per user to the report");
}

int run_prepare(const RunConfig& cfg) {
    auto events = load_raw(cfg.input, resolve_delimiter(cfg.delimiter), cfg.rating_column);
    const std::size_t raw_count = events.size();
    std::optional<double> threshold;
    if (cfg.min_rating > 0.0) threshold = cfg.min_rating;
    events = to_implicit(std::move(events), threshold);
    InteractionLog log = filter_and_index(events, cfg.min_actions);
    chronological_split(log);  // prove every kept user can be split before writing
    save_log(log, cfg.log_path);
    std::printf("read %zu events, kept %zu users / %zu items / %zu interactions\n", raw_count,
                log.num_users(), log.num_items(), log.num_interactions());
    std::printf("wrote %s\n", cfg.log_path.c_str());
    return 0;
}

int run_train(const RunConfig& cfg) {
    const TrainConfig tc = to_train_config(cfg);
    if (auto problems = validate(tc); !problems.empty()) {
        for (const auto& p : problems) std::cerr << "config error: " << p << "\n";
        return 2;
    }
    const InteractionLog log = load_log(cfg.log_path);
    const Split split = chronological_split(log);
    const TrainResult result = train(log, split, tc);
    const std::string echo = echo_train(cfg);
    write_trace(result, echo, cfg.trace_path);
    save_checkpoint({result.params, echo}, cfg.checkpoint_path);
    std::printf("best epoch %zu: validation hr@50 %s, mrr %s\n", result.best_epoch,
                fmt_double(result.best_val_hr).c_str(),
                fmt_double(result.trace[result.best_epoch - 1].val_mrr).c_str());
    std::printf("wrote %s and %s\n", cfg.checkpoint_path.c_str(), cfg.trace_path.c_str());
    return 0;
}

int run_evaluate(const RunConfig& cfg, const std::string& baseline) {
    if (baseline.empty() && cfg.checkpoint_path.empty()) {
        std::cerr << "evaluate needs --checkpoint (or --baseline pop)\n";
        return 2;
    }
    const InteractionLog log = load_log(cfg.log_path);
    const Split split = chronological_split(log);
    const CandidatePolicy policy = candidate_policy_from_string(cfg.policy);
    const EvalTarget target =
        cfg.target == "validation" ? EvalTarget::Validation : EvalTarget::Test;

    EvalReport report;
    std::string echo;
    if (baseline == "pop") {
        report = evaluate_popularity(split, log.num_items(), cfg.k, policy, target);
        echo = "baseline = pop\nk = " + std::to_string(cfg.k) + "\npolicy = " + cfg.policy +
               "\ntarget = " + cfg.target + "\n";
    } else {
        const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
        report = evaluate(ckpt.params, split, cfg.k, policy, target, cfg.threads);
        echo = echo_eval(cfg, ckpt.params);
    }
    write_report(report, echo, log, cfg.per_user_ranks, cfg.report_path);
    std::printf("hr@%zu %s\n", cfg.k, fmt_double(report.hit_ratio).c_str());
    std::printf("mrr %s\n", fmt_double(report.mrr).c_str());
    std::printf("wrote %s\n", cfg.report_path.c_str());
    return 0;
}

int run_sweep(const RunConfig& cfg) {
    if (cfg.omega_grid.empty() || cfg.lambda_grid.empty()) {
        std::cerr << "config error: omega-grid and lambda-grid must be non-empty\n";
        return 2;
    }
    for (double w : cfg.omega_grid) {
        if (!(w >= 0.0 && w <= 1.0)) {
            std::cerr << "config error: omega must lie in [0,1], grid has " << w << "\n";
            return 2;
        }
    }
    for (double l : cfg.lambda_grid) {
        if (!(l >= 0.0)) {
            std::cerr << "config error: lambda must be non-negative, grid has " << l << "\n";
            return 2;
        }
    }
    TrainConfig tc = to_train_config(cfg);
    if (auto problems = validate(tc); !problems.empty()) {
        for (const auto& p : problems) std::cerr << "config error: " << p << "\n";
        return 2;
    }
    const InteractionLog log = load_log(cfg.log_path);
    const Split split = chronological_split(log);
    const CandidatePolicy policy = candidate_policy_from_string(cfg.policy);

    std::ofstream out(cfg.out_path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot write " << cfg.out_path << "\n";
        return 1;
    }
    out << "attrec.sweep 1\n";
    std::istringstream shared(echo_train(cfg));
    for (std::string line; std::getline(shared, line);) {
        // omega and lambda vary per cell; everything else is shared
        if (line.rfind("omega =", 0) == 0 || line.rfind("lambda =", 0) == 0) continue;
        out << "# " << line << "\n";
    }
    out << "omega\tlambda\tbest_epoch\tval_hr@50\tval_mrr\ttest_hr@" << cfg.k << "\ttest_mrr\n";

    for (double omega : cfg.omega_grid) {
        for (double lambda : cfg.lambda_grid) {
            tc.omega = omega;
            tc.lambda = lambda;
            const TrainResult result = train(log, split, tc);
            const EvalReport test =
                evaluate(result.params, split, cfg.k, policy, EvalTarget::Test, cfg.threads);
            const EpochRecord& best = result.trace[result.best_epoch - 1];
            out << fmt_double(omega) << '\t' << fmt_double(lambda) << '\t'
                << result.best_epoch << '\t' << fmt_double(best.val_hr) << '\t'
                << fmt_double(best.val_mrr) << '\t' << fmt_double(test.hit_ratio) << '\t'
                << fmt_double(test.mrr) << "\n";
            out.flush();
            std::printf("omega %s lambda %s: val hr@50 %s, test hr@%zu %s\n",
                        fmt_double(omega).c_str(), fmt_double(lambda).c_str(),
                        fmt_double(best.val_hr).c_str(), cfg.k,
                        fmt_double(test.hit_ratio).c_str());
        }
    }
    if (!out) {
        std::cerr << "write failed for " << cfg.out_path << "\n";
        return 1;
    }
    std::printf("wrote %s\n", cfg.out_path.c_str());
    return 0;
}

int run_export_attention(const RunConfig& cfg) {
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    if (!ckpt.params.attention_enabled) {
        std::cerr << "checkpoint was trained with attention disabled, nothing to export\n";
        return 1;
    }
    const InteractionLog log = load_log(cfg.log_path);
    auto it = log.user_index.find(cfg.user);
    if (it == log.user_index.end()) {
        std::cerr << "unknown user '" << cfg.user << "' in " << cfg.log_path << "\n";
        return 1;
    }
    const auto& seq = log.sequences[it->second];
    std::vector<std::uint32_t> window(seq.begin(), seq.end());
    if (window.size() > ckpt.params.window_len) {
        window.erase(window.begin(),
                     window.end() - static_cast<std::ptrdiff_t>(ckpt.params.window_len));
    }
    const Matrix win = gather_rows(ckpt.params.item_short, window);
    const AttentionOutput att = attend(win, ckpt.params.attention);

    std::ofstream out(cfg.out_path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot write " << cfg.out_path << "\n";
        return 1;
    }
    char buf[32];
    for (std::size_t i = 0; i < att.affinity.rows(); ++i) {
        for (std::size_t j = 0; j < att.affinity.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.6f", att.affinity(i, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
    std::printf("wrote %zux%zu attention map for user %s to %s\n", att.affinity.rows(),
                att.affinity.cols(), cfg.user.c_str(), cfg.out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attrec: sequential recommendations from self-attention over recent items"};
    app.require_subcommand(1);
    // One config file for the whole tool, given before the subcommand.
    // Options live under a section per subcommand, e.g.
    //   [train]
    //   d = 100
    // Explicit flags always win over file values.
    app.set_config("--config", "", "Read option defaults from an INI-style file");
    RunConfig cfg;
    std::string baseline;

    CLI::App* prepare = app.add_subcommand("prepare", "Index a raw interaction file");
    prepare->add_option("--input", cfg.input, "Raw interaction file")->required();
    prepare->add_option("--log", cfg.log_path, "Corpus output path")->required();
    add_corpus_options(prepare, cfg);

    CLI::App* train_cmd = app.add_subcommand("train", "Train on a prepared corpus");
    train_cmd->add_option("--log", cfg.log_path, "Prepared corpus")->required();
    train_cmd->add_option("--checkpoint", cfg.checkpoint_path, "Checkpoint output path")
        ->required();
    train_cmd->add_option("--trace", cfg.trace_path, "Per-epoch trace output path")->required();
    add_hyper_options(train_cmd, cfg, true);

    CLI::App* eval_cmd =
        app.add_subcommand("evaluate", "Rank held-out items with a checkpoint or baseline");
    eval_cmd->add_option("--log", cfg.log_path, "Prepared corpus")->required();
    eval_cmd->add_option("--checkpoint", cfg.checkpoint_path, "Trained checkpoint");
    eval_cmd->add_option("--report", cfg.report_path, "Report output path")->required();
    eval_cmd->add_option("--baseline", baseline, "Evaluate a baseline instead: 'pop'")
        ->check(CLI::IsMember({"pop"}));
    eval_cmd->add_option("--threads", cfg.threads, "Worker threads")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    add_eval_options(eval_cmd, cfg);

    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "Train a grid of omega/lambda cells and tabulate metrics");
    sweep_cmd->add_option("--log", cfg.log_path, "Prepared corpus")->required();
    sweep_cmd->add_option("--out", cfg.out_path, "TSV output path")->required();
    sweep_cmd->add_option("--omega-grid", cfg.omega_grid, "Comma-separated omega values")
        ->delimiter(',')
        ->capture_default_str();
    sweep_cmd->add_option("--lambda-grid", cfg.lambda_grid, "Comma-separated lambda values")
        ->delimiter(',')
        ->capture_default_str();
    add_hyper_options(sweep_cmd, cfg, false);
    add_eval_options(sweep_cmd, cfg);

    CLI::App* export_cmd = app.add_subcommand(
        "export-attention", "Write one user's latest window affinity matrix as CSV");
    export_cmd->add_option("--checkpoint", cfg.checkpoint_path, "Trained checkpoint")
        ->required();
    export_cmd->add_option("--log", cfg.log_path, "Prepared corpus")->required();
    export_cmd->add_option("--user", cfg.user, "External user id")->required();
    export_cmd->add_option("--out", cfg.out_path, "CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (prepare->parsed()) return run_prepare(cfg);
        if (train_cmd->parsed()) return run_train(cfg);
        if (eval_cmd->parsed()) return run_evaluate(cfg, baseline);
        if (sweep_cmd->parsed()) return run_sweep(cfg);
        if (export_cmd->parsed()) return run_export_attention(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
