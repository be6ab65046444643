#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attrec/corpus.hpp"
#include "attrec/model.hpp"

namespace attrec {

// Which items compete against the ground truth. ExcludeSeen drops the
// user's training items (and, when scoring the test target, the validation
// item) from the candidate pool; the ground truth itself always stays in.
// RankAll scores the whole catalog.
enum class CandidatePolicy { ExcludeSeen, RankAll };

enum class EvalTarget { Validation, Test };

CandidatePolicy candidate_policy_from_string(std::string_view name);
std::string_view to_string(CandidatePolicy policy);
std::string_view to_string(EvalTarget target);

struct EvalReport {
    double hit_ratio = 0.0;
    double mrr = 0.0;
    std::size_t cutoff = 0;
    CandidatePolicy policy = CandidatePolicy::ExcludeSeen;
    EvalTarget target = EvalTarget::Test;
    std::vector<std::uint32_t> ranks;  // per user, 1-based
};

/// Sorts candidate items by ascending score (smaller distance = better),
/// breaking exact ties by ascending item index. Returns the candidates in
/// rank order.
std::vector<std::uint32_t> rank_items(const ModelParams& params, std::uint32_t user,
                                      std::span<const double> intent,
                                      std::span<const std::uint32_t> candidates);

/// Fraction of ranks at or under the cutoff.
double hit_ratio_at(std::span<const std::uint32_t> ranks, std::size_t k);

/// Mean of 1/rank.
double mean_reciprocal_rank(std::span<const std::uint32_t> ranks);

/// Ranks every user's held-out target. The context window is the last
/// window_len items of the training sequence (for the test target, the
/// validation item is appended first); shorter histories use whatever is
/// there. `threads` only fans out the per-user loop, results are identical
/// at any thread count.
EvalReport evaluate(const ModelParams& params, const Split& split, std::size_t k,
                    CandidatePolicy policy, EvalTarget target, std::size_t threads = 1);

/// Items sorted by training-set interaction count, most popular first, ties
/// by ascending item index.
std::vector<std::uint32_t> popularity_ranking(const Split& split, std::size_t num_items);

/// Non-personalized baseline: every user gets the same popularity order,
/// restricted to their candidate set.
EvalReport evaluate_popularity(const Split& split, std::size_t num_items, std::size_t k,
                               CandidatePolicy policy, EvalTarget target);

/// Plain-text metrics report. The config echo goes in as '#'-prefixed
/// header lines; per-user ranks are optional and use external user ids.
void write_report(const EvalReport& report, const std::string& config_echo,
                  const InteractionLog& log, bool per_user_ranks,
                  const std::filesystem::path& path);

}  // namespace attrec
