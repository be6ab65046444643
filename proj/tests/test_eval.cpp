#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "attrec/eval.hpp"
#include "support/oracles.hpp"

using namespace attrec;
namespace fs = std::filesystem;

namespace {

ModelParams random_model(std::size_t users, std::size_t items, std::size_t dim,
                         std::uint64_t seed, std::size_t window_len) {
    Rng rng(seed);
    ModelParams m = init_model(users, items, dim, false, rng);
    m.window_len = window_len;
    m.omega = 0.4;
    return m;
}

// Random but legal split: every user gets a training history plus the two
// held-out targets.
Split random_split(std::size_t users, std::size_t items, std::uint64_t seed) {
    Rng rng(seed);
    Split split;
    split.train.resize(users);
    split.validation_target.resize(users);
    split.test_target.resize(users);
    for (std::size_t u = 0; u < users; ++u) {
        const std::size_t len = 1 + rng.below(6);
        for (std::size_t n = 0; n < len; ++n) {
            split.train[u].push_back(static_cast<std::uint32_t>(rng.below(items)));
        }
        split.validation_target[u] = static_cast<std::uint32_t>(rng.below(items));
        split.test_target[u] = static_cast<std::uint32_t>(rng.below(items));
    }
    return split;
}

// Independent walk: materialize the candidate list, score it through the
// public scorer, and count who beats the truth.
std::vector<std::uint32_t> oracle_ranks(const ModelParams& params, const Split& split,
                                        CandidatePolicy policy, EvalTarget target) {
    std::vector<std::uint32_t> ranks;
    for (std::uint32_t u = 0; u < split.train.size(); ++u) {
        const std::uint32_t truth = target == EvalTarget::Test ? split.test_target[u]
                                                               : split.validation_target[u];
        std::vector<std::uint32_t> history = split.train[u];
        if (target == EvalTarget::Test) history.push_back(split.validation_target[u]);
        std::vector<std::uint32_t> window = history;
        if (window.size() > params.window_len) {
            window.assign(history.end() - params.window_len, history.end());
        }
        const auto intent = compute_intent(params, window).intent;

        std::vector<std::uint32_t> candidates;
        for (std::uint32_t item = 0; item < params.num_items(); ++item) {
            if (policy == CandidatePolicy::ExcludeSeen && item != truth &&
                std::find(history.begin(), history.end(), item) != history.end()) {
                continue;
            }
            candidates.push_back(item);
        }
        std::vector<double> scores;
        for (auto item : candidates) scores.push_back(score_item(params, u, item, intent));
        const double truth_score = score_item(params, u, truth, intent);
        ranks.push_back(oracle::reference_rank(scores, candidates, truth_score, truth));
    }
    return ranks;
}

}  // namespace

TEST_CASE("hit_ratio_at and mean_reciprocal_rank hand values") {
    const std::vector<std::uint32_t> ranks{1, 51, 50};
    CHECK(hit_ratio_at(ranks, 50) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(hit_ratio_at(ranks, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(mean_reciprocal_rank(ranks) ==
          doctest::Approx((1.0 + 1.0 / 51.0 + 1.0 / 50.0) / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(hit_ratio_at(std::vector<std::uint32_t>{}, 5), std::invalid_argument);
    CHECK_THROWS_AS(mean_reciprocal_rank(std::vector<std::uint32_t>{0}),
                    std::invalid_argument);
}

TEST_CASE("rank_items sorts by score with index tie-breaks") {
    ModelParams m;
    m.item_short = Matrix(3, 1);
    m.item_long = Matrix(3, 1);
    m.users = Matrix(1, 1);
    m.attention.query_weights = Matrix(1, 1);
    m.omega = 0.0;  // score = ||intent - X||^2 only
    m.item_short(0, 0) = 1.0;
    m.item_short(1, 0) = 0.2;
    m.item_short(2, 0) = -1.0;  // same distance to 0 as item 0
    const std::vector<double> intent{0.0};
    const std::vector<std::uint32_t> candidates{0, 1, 2};
    const auto order = rank_items(m, 0, intent, candidates);
    CHECK(order == std::vector<std::uint32_t>{1, 0, 2});
    CHECK_THROWS_AS(static_cast<void>(rank_items(m, 0, intent, {})), std::invalid_argument);
}

TEST_CASE("evaluate matches the brute-force oracle on random instances") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const std::size_t users = 12, items = 30;
        const ModelParams params = random_model(users, items, 4, seed * 100, 3);
        const Split split = random_split(users, items, seed * 100 + 7);
        for (const auto policy : {CandidatePolicy::ExcludeSeen, CandidatePolicy::RankAll}) {
            for (const auto target : {EvalTarget::Test, EvalTarget::Validation}) {
                const EvalReport got = evaluate(params, split, 10, policy, target);
                const auto want = oracle_ranks(params, split, policy, target);
                REQUIRE(got.ranks == want);
                CHECK(got.hit_ratio == oracle::reference_hit_ratio(want, 10));
                CHECK(got.mrr == oracle::reference_mrr(want));
            }
        }
    }
}

TEST_CASE("exclude-seen removes training items but keeps the answer") {
    // One user, three items. Training item 0 would outrank the truth, so
    // the policies disagree on the final rank.
    ModelParams m;
    m.item_short = Matrix(3, 1);
    m.item_long = Matrix(3, 1);
    m.users = Matrix(1, 1);
    m.attention.query_weights = Matrix(1, 1);
    m.attention.use_time_encoding = false;
    m.window_len = 1;
    m.omega = 0.0;
    m.item_short(0, 0) = 1.0;   // trained item, closest to the intent
    m.item_short(1, 0) = 1.4;   // truth
    m.item_short(2, 0) = 10.0;  // far away
    Split split;
    split.train = {{0}};
    split.validation_target = {1};
    split.test_target = {1};

    const auto excl =
        evaluate(m, split, 1, CandidatePolicy::ExcludeSeen, EvalTarget::Validation);
    const auto all = evaluate(m, split, 1, CandidatePolicy::RankAll, EvalTarget::Validation);
    CHECK(excl.ranks == std::vector<std::uint32_t>{1});
    CHECK(all.ranks == std::vector<std::uint32_t>{2});

    // A truth that also sits in the training history still competes.
    split.validation_target = {0};
    const auto self =
        evaluate(m, split, 1, CandidatePolicy::ExcludeSeen, EvalTarget::Validation);
    CHECK(self.ranks == std::vector<std::uint32_t>{1});
}

TEST_CASE("test-target windows append the validation item") {
    // window_len 1 means the intent is exactly the last item's embedding:
    // the validation item for the test pass, the last training item for the
    // validation pass.
    ModelParams m;
    m.item_short = Matrix(4, 1);
    m.item_long = Matrix(4, 1);
    m.users = Matrix(1, 1);
    m.attention.query_weights = Matrix(1, 1);
    m.attention.use_time_encoding = false;
    m.window_len = 1;
    m.omega = 0.0;
    m.item_short(0, 0) = 0.0;  // train
    m.item_short(1, 0) = 5.0;  // validation target
    m.item_short(2, 0) = 4.9;  // test truth: close to item 1, far from item 0
    m.item_short(3, 0) = 0.1;  // decoy next to item 0
    Split split;
    split.train = {{0}};
    split.validation_target = {1};
    split.test_target = {2};

    const auto report = evaluate(m, split, 1, CandidatePolicy::ExcludeSeen, EvalTarget::Test);
    // Intent = embedding of item 1 (5.0): truth (4.9) beats decoy (0.1).
    CHECK(report.ranks == std::vector<std::uint32_t>{1});
}

TEST_CASE("evaluate is identical across thread counts") {
    const std::size_t users = 40, items = 60;
    const ModelParams params = random_model(users, items, 6, 55, 4);
    const Split split = random_split(users, items, 56);
    const auto one = evaluate(params, split, 10, CandidatePolicy::ExcludeSeen,
                              EvalTarget::Test, 1);
    const auto four = evaluate(params, split, 10, CandidatePolicy::ExcludeSeen,
                               EvalTarget::Test, 4);
    CHECK(one.ranks == four.ranks);
    CHECK(one.hit_ratio == four.hit_ratio);
    CHECK(one.mrr == four.mrr);
}

TEST_CASE("popularity_ranking counts training interactions with index ties") {
    Split split;
    split.train = {{2, 2, 1}, {2, 3}};
    split.validation_target = {0, 0};
    split.test_target = {0, 0};
    // counts: item0=0, item1=1, item2=3, item3=1, item4=0
    const auto order = popularity_ranking(split, 5);
    CHECK(order == std::vector<std::uint32_t>{2, 1, 3, 0, 4});
}

TEST_CASE("evaluate_popularity agrees with per-user enumeration") {
    const std::size_t users = 15, items = 25;
    const Split split = random_split(users, items, 77);
    const auto order = popularity_ranking(split, items);
    std::vector<std::uint32_t> position(items);
    for (std::uint32_t p = 0; p < order.size(); ++p) position[order[p]] = p;

    for (const auto policy : {CandidatePolicy::ExcludeSeen, CandidatePolicy::RankAll}) {
        const auto report = evaluate_popularity(split, items, 5, policy, EvalTarget::Test);
        for (std::uint32_t u = 0; u < users; ++u) {
            const std::uint32_t truth = split.test_target[u];
            std::vector<std::uint32_t> candidates;
            std::vector<std::uint32_t> history = split.train[u];
            history.push_back(split.validation_target[u]);
            for (std::uint32_t item = 0; item < items; ++item) {
                if (policy == CandidatePolicy::ExcludeSeen && item != truth &&
                    std::find(history.begin(), history.end(), item) != history.end()) {
                    continue;
                }
                candidates.push_back(item);
            }
            std::uint32_t ahead = 0;
            for (auto item : candidates) {
                if (item != truth && position[item] < position[truth]) ++ahead;
            }
            CHECK(report.ranks[u] == ahead + 1);
        }
    }
}

TEST_CASE("reports carry metrics, echo and optional per-user ranks") {
    InteractionLog log;
    log.user_ids = {"alice", "bob"};
    log.item_ids = {"x", "y", "z"};
    log.sequences = {{0, 1, 2}, {1, 2, 0}};

    EvalReport report;
    report.cutoff = 10;
    report.policy = CandidatePolicy::ExcludeSeen;
    report.target = EvalTarget::Test;
    report.ranks = {3, 12};
    report.hit_ratio = 0.5;
    report.mrr = (1.0 / 3.0 + 1.0 / 12.0) / 2.0;

    const auto path = fs::temp_directory_path() / "attrec_eval_report.txt";
    write_report(report, "omega = 0.4\nseed = 1\n", log, true, path);

    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    CHECK(text.find("attrec.report 1\n") == 0);
    CHECK(text.find("# omega = 0.4\n") != std::string::npos);
    CHECK(text.find("# seed = 1\n") != std::string::npos);
    CHECK(text.find("policy exclude-seen\n") != std::string::npos);
    CHECK(text.find("target test\n") != std::string::npos);
    CHECK(text.find("hr@10 0.5\n") != std::string::npos);
    CHECK(text.find("rank alice 3\n") != std::string::npos);
    CHECK(text.find("rank bob 12\n") != std::string::npos);

    // Without the flag the per-user lines stay out.
    write_report(report, "", log, false, path);
    std::ifstream in2(path);
    std::stringstream ss2;
    ss2 << in2.rdbuf();
    CHECK(ss2.str().find("rank ") == std::string::npos);
    fs::remove(path);
}
