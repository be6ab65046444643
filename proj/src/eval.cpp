#include "attrec/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace attrec {
namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Context the intent is computed from: the tail of the training history,
// plus the validation item when the model is asked about the test target.
std::vector<std::uint32_t> eval_window(const Split& split, std::uint32_t user, EvalTarget target,
                                       std::size_t window_len) {
    std::vector<std::uint32_t> seq = split.train[user];
    if (target == EvalTarget::Test) seq.push_back(split.validation_target[user]);
    if (seq.size() > window_len) {
        seq.erase(seq.begin(), seq.end() - static_cast<std::ptrdiff_t>(window_len));
    }
    return seq;
}

std::vector<char> excluded_items(const Split& split, std::uint32_t user, EvalTarget target,
                                 CandidatePolicy policy, std::uint32_t ground_truth,
                                 std::size_t num_items) {
    std::vector<char> excluded(num_items, 0);
    if (policy == CandidatePolicy::ExcludeSeen) {
        for (auto item : split.train[user]) excluded[item] = 1;
        if (target == EvalTarget::Test) excluded[split.validation_target[user]] = 1;
        excluded[ground_truth] = 0;  // the answer always competes
    }
    return excluded;
}

}  // namespace

CandidatePolicy candidate_policy_from_string(std::string_view name) {
    if (name == "exclude-seen") return CandidatePolicy::ExcludeSeen;
    if (name == "rank-all") return CandidatePolicy::RankAll;
    throw std::invalid_argument("unknown candidate policy '" + std::string(name) +
                                "', expected exclude-seen or rank-all");
}

std::string_view to_string(CandidatePolicy policy) {
    return policy == CandidatePolicy::ExcludeSeen ? "exclude-seen" : "rank-all";
}

std::string_view to_string(EvalTarget target) {
    return target == EvalTarget::Validation ? "validation" : "test";
}

std::vector<std::uint32_t> rank_items(const ModelParams& params, std::uint32_t user,
                                      std::span<const double> intent,
                                      std::span<const std::uint32_t> candidates) {
    if (candidates.empty()) {
        throw std::invalid_argument("rank_items: candidate set is empty");
    }
    std::vector<std::pair<double, std::uint32_t>> scored;
    scored.reserve(candidates.size());
    for (auto item : candidates) {
        scored.emplace_back(score_item(params, user, item, intent), item);
    }
    // Ascending distance; exact score ties fall back to item index so the
    // order never depends on sort internals.
    std::sort(scored.begin(), scored.end());
    std::vector<std::uint32_t> out;
    out.reserve(scored.size());
    for (const auto& [s, item] : scored) out.push_back(item);
    return out;
}

double hit_ratio_at(std::span<const std::uint32_t> ranks, std::size_t k) {
    if (ranks.empty()) {
        throw std::invalid_argument("hit_ratio_at: no ranks");
    }
    std::size_t hits = 0;
    for (auto r : ranks) {
        if (r == 0) throw std::invalid_argument("hit_ratio_at: ranks are 1-based");
        if (r <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mean_reciprocal_rank(std::span<const std::uint32_t> ranks) {
    if (ranks.empty()) {
        throw std::invalid_argument("mean_reciprocal_rank: no ranks");
    }
    double sum = 0.0;
    for (auto r : ranks) {
        if (r == 0) throw std::invalid_argument("mean_reciprocal_rank: ranks are 1-based");
        sum += 1.0 / static_cast<double>(r);
    }
    return sum / static_cast<double>(ranks.size());
}

EvalReport evaluate(const ModelParams& params, const Split& split, std::size_t k,
                    CandidatePolicy policy, EvalTarget target, std::size_t threads) {
    const std::size_t num_users = split.train.size();
    const std::size_t num_items = params.num_items();
    if (num_users == 0 || num_users != params.num_users()) {
        throw std::invalid_argument("evaluate: split does not match the model's user count");
    }

    EvalReport report;
    report.cutoff = k;
    report.policy = policy;
    report.target = target;
    report.ranks.assign(num_users, 0);

    auto rank_user = [&](std::uint32_t user) {
        const std::uint32_t truth = target == EvalTarget::Test
                                        ? split.test_target[user]
                                        : split.validation_target[user];
        const auto window = eval_window(split, user, target, params.window_len);
        const auto intent = compute_intent(params, window).intent;
        const auto excluded = excluded_items(split, user, target, policy, truth, num_items);
        const double truth_score = score_item(params, user, truth, intent);
        // Rank = 1 + number of candidates strictly ahead of the truth,
        // where "ahead" is (score, index) lexicographic.
        std::size_t ahead = 0;
        for (std::uint32_t item = 0; item < num_items; ++item) {
            if (excluded[item] || item == truth) continue;
            const double s = score_item(params, user, item, intent);
            if (s < truth_score || (s == truth_score && item < truth)) ++ahead;
        }
        report.ranks[user] = static_cast<std::uint32_t>(ahead + 1);
    };

    const std::size_t workers = std::min(threads == 0 ? 1 : threads, num_users);
    if (workers <= 1) {
        for (std::uint32_t u = 0; u < num_users; ++u) rank_user(u);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t u = w; u < num_users; u += workers) {
                    rank_user(static_cast<std::uint32_t>(u));
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    report.hit_ratio = hit_ratio_at(report.ranks, k);
    report.mrr = mean_reciprocal_rank(report.ranks);
    return report;
}

std::vector<std::uint32_t> popularity_ranking(const Split& split, std::size_t num_items) {
    std::vector<std::size_t> counts(num_items, 0);
    for (const auto& seq : split.train) {
        for (auto item : seq) {
            if (item >= num_items) {
                throw std::out_of_range("popularity_ranking: item index out of range");
            }
            ++counts[item];
        }
    }
    std::vector<std::uint32_t> order(num_items);
    for (std::uint32_t i = 0; i < num_items; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (counts[a] != counts[b]) return counts[a] > counts[b];
        return a < b;
    });
    return order;
}

EvalReport evaluate_popularity(const Split& split, std::size_t num_items, std::size_t k,
                               CandidatePolicy policy, EvalTarget target) {
    const auto order = popularity_ranking(split, num_items);
    std::vector<std::uint32_t> position(num_items);
    for (std::uint32_t p = 0; p < order.size(); ++p) position[order[p]] = p;

    EvalReport report;
    report.cutoff = k;
    report.policy = policy;
    report.target = target;
    report.ranks.assign(split.train.size(), 0);
    for (std::uint32_t user = 0; user < split.train.size(); ++user) {
        const std::uint32_t truth = target == EvalTarget::Test
                                        ? split.test_target[user]
                                        : split.validation_target[user];
        const auto excluded =
            excluded_items(split, user, target, policy, truth, num_items);
        std::size_t ahead = 0;
        for (std::uint32_t item = 0; item < num_items; ++item) {
            if (excluded[item] || item == truth) continue;
            if (position[item] < position[truth]) ++ahead;
        }
        report.ranks[user] = static_cast<std::uint32_t>(ahead + 1);
    }
    report.hit_ratio = hit_ratio_at(report.ranks, k);
    report.mrr = mean_reciprocal_rank(report.ranks);
    return report;
}

void write_report(const EvalReport& report, const std::string& config_echo,
                  const InteractionLog& log, bool per_user_ranks,
                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "attrec.report 1\n";
    std::size_t start = 0;
    while (start < config_echo.size()) {
        std::size_t end = config_echo.find('\n', start);
        if (end == std::string::npos) end = config_echo.size();
        out << "# " << config_echo.substr(start, end - start) << "\n";
        start = end + 1;
    }
    out << "target " << to_string(report.target) << "\n";
    out << "policy " << to_string(report.policy) << "\n";
    out << "users " << report.ranks.size() << "\n";
    out << "hr@" << report.cutoff << " " << fmt_double(report.hit_ratio) << "\n";
    out << "mrr " << fmt_double(report.mrr) << "\n";
    if (per_user_ranks) {
        for (std::size_t u = 0; u < report.ranks.size(); ++u) {
            out << "rank " << log.user_ids[u] << " " << report.ranks[u] << "\n";
        }
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

}  // namespace attrec
