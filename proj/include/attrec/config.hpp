#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrec/model.hpp"
#include "attrec/optim.hpp"

namespace attrec {

// Everything the command line or a key=value config file can set, with the
// shipped defaults. Flag names are these field names in kebab-case; the
// short hyperparameter names (L, T, d) stay as-is.
struct RunConfig {
    // corpus
    std::string input;
    std::string delimiter = "tab";  // "tab" or a literal separator such as "::"
    bool rating_column = true;
    std::size_t min_actions = 10;
    double min_rating = 0.0;  // keep only events rated at least this; 0 keeps all

    // artifact paths
    std::string log_path;
    std::string checkpoint_path;
    std::string trace_path;
    std::string report_path;
    std::string out_path;

    // model + training
    std::size_t L = 5;
    std::size_t T = 3;
    std::size_t d = 100;
    double omega = 0.3;
    double gamma = 0.5;
    double lambda = 0.001;
    double learning_rate = 0.05;
    std::size_t epochs = 50;
    std::size_t batch_size = 1000;
    std::uint64_t seed = 42;
    std::string aggregation = "mean";
    bool time_encoding = true;
    bool untied_projections = false;
    bool attention = true;
    bool clip_norms = false;
    bool exclude_history_negatives = false;

    // evaluation
    std::size_t k = 50;
    std::string policy = "exclude-seen";
    std::string target = "test";
    std::size_t threads = 1;
    bool per_user_ranks = false;

    // sweep grids
    std::vector<double> omega_grid = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> lambda_grid = {0.1, 0.01, 0.001, 0.0001};

    // export-attention
    std::string user;
};

/// The literal separator string for the configured delimiter name.
std::string resolve_delimiter(const std::string& delimiter);

TrainConfig to_train_config(const RunConfig& config);

// Canonical key=value blocks embedded into artifacts. Only semantic keys go
// in; file paths stay out so equal experiments produce equal artifacts no
// matter where they are written.
std::string echo_prepare(const RunConfig& config);
std::string echo_train(const RunConfig& config);
/// Evaluation echo pulls the model-structure keys from the checkpoint that
/// is actually being scored, not from command-line defaults.
std::string echo_eval(const RunConfig& config, const ModelParams& params);

}  // namespace attrec
