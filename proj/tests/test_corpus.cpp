#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "attrec/corpus.hpp"
#include "support/oracles.hpp"

using namespace attrec;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
    const fs::path path = fs::temp_directory_path() / ("attrec_corpus_" + name);
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RawEvent ev(const std::string& user, const std::string& item, double rating,
            std::int64_t ts) {
    return {user, item, rating, ts};
}

}  // namespace

TEST_CASE("load_raw parses tab separated rating lines") {
    const auto path = temp_file("ok.tsv",
                                "196\t242\t3\t881250949\n"
                                "186\t302\t3\t891717742\n");
    const auto events = load_raw(path, "\t", true);
    REQUIRE(events.size() == 2);
    CHECK(events[0].user == "196");
    CHECK(events[0].item == "242");
    CHECK(events[0].rating == 3.0);
    CHECK(events[0].timestamp == 881250949);
    CHECK(events[1].user == "186");
    fs::remove(path);
}

TEST_CASE("load_raw handles :: delimiters and missing rating columns") {
    const auto ml1m = temp_file("ml1m.dat", "1::1193::5::978300760\n");
    const auto events = load_raw(ml1m, "::", true);
    REQUIRE(events.size() == 1);
    CHECK(events[0].user == "1");
    CHECK(events[0].item == "1193");
    CHECK(events[0].rating == 5.0);
    fs::remove(ml1m);

    const auto bare = temp_file("bare.tsv", "a\tx\t100\nb\ty\t200\n");
    const auto nr = load_raw(bare, "\t", false);
    REQUIRE(nr.size() == 2);
    CHECK_FALSE(nr[0].rating.has_value());
    CHECK(nr[0].timestamp == 100);
    fs::remove(bare);
}

TEST_CASE("load_raw reports malformed input with line numbers") {
    const auto missing = temp_file("missing.tsv", "196\t242\t3\t1\n186\t302\t3\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_raw(missing, "\t", true)),
                         doctest::Contains(":2:"), std::runtime_error);
    fs::remove(missing);

    const auto badts = temp_file("badts.tsv", "196\t242\t3\tnotatime\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_raw(badts, "\t", true)),
                         doctest::Contains("timestamp"), std::runtime_error);
    fs::remove(badts);

    const auto empty = temp_file("empty.tsv", "");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_raw(empty, "\t", true)),
                         doctest::Contains("no events"), std::runtime_error);
    fs::remove(empty);

    CHECK_THROWS_AS(static_cast<void>(load_raw(fs::path("/nonexistent/x.tsv"), "\t", true)),
                    std::runtime_error);
}

TEST_CASE("to_implicit keeps every event and drops ratings") {
    std::vector<RawEvent> events{ev("a", "x", 1.0, 1), ev("a", "y", 5.0, 2)};
    const auto implicit = to_implicit(events);
    REQUIRE(implicit.size() == 2);  // low ratings still count as positives
    CHECK_FALSE(implicit[0].rating.has_value());
    CHECK_FALSE(implicit[1].rating.has_value());
}

TEST_CASE("to_implicit can threshold when asked") {
    std::vector<RawEvent> events{ev("a", "x", 1.0, 1), ev("a", "y", 4.0, 2),
                                 ev("a", "z", 5.0, 3)};
    const auto kept = to_implicit(events, 4.0);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].item == "y");
    CHECK(kept[1].item == "z");
}

TEST_CASE("filter_and_index deduplicates, filters once and indexes by appearance") {
    std::vector<RawEvent> events{
        ev("u2", "b", 1, 10), ev("u2", "b", 1, 10),  // exact repeat collapses
        ev("u1", "a", 1, 5),  ev("u2", "a", 1, 11),
        ev("u2", "c", 1, 12), ev("u1", "b", 1, 6),
        ev("u2", "a", 1, 13),  // same user+item, new timestamp: kept
    };
    // u2 has 4 distinct events, u1 only 2.
    const auto log = filter_and_index(events, 3);
    REQUIRE(log.num_users() == 1);
    CHECK(log.user_ids[0] == "u2");
    CHECK(log.num_interactions() == 4);
    // Items index in order of first appearance among kept events.
    REQUIRE(log.num_items() == 3);
    CHECK(log.item_ids[0] == "b");
    CHECK(log.item_ids[1] == "a");
    CHECK(log.item_ids[2] == "c");
    // Chronological: b(10), a(11), c(12), a(13).
    CHECK(log.sequences[0] == std::vector<std::uint32_t>{0, 1, 2, 1});
}

TEST_CASE("filtering is a single pass, not iterated to a fixed point") {
    // u1 has 3 events; u2 has 3 events but shares nothing. Dropping users
    // never shrinks other users' counts, and a user at exactly the
    // threshold stays even if neighbours vanish.
    std::vector<RawEvent> events{
        ev("u1", "a", 1, 1), ev("u1", "b", 1, 2), ev("u1", "c", 1, 3),
        ev("u2", "a", 1, 4), ev("u2", "b", 1, 5),
    };
    const auto log = filter_and_index(events, 3);
    CHECK(log.num_users() == 1);
    CHECK(log.user_ids[0] == "u1");
    // Items of dropped users never enter the index.
    CHECK(log.num_items() == 3);
}

TEST_CASE("timestamp ties keep file order") {
    std::vector<RawEvent> events{
        ev("u", "first", 1, 100), ev("u", "second", 1, 100), ev("u", "third", 1, 99),
    };
    const auto log = filter_and_index(events, 3);
    REQUIRE(log.num_users() == 1);
    // third sorts ahead on timestamp; the tie keeps first before second.
    CHECK(log.sequences[0] ==
          std::vector<std::uint32_t>{log.item_index.at("third"), log.item_index.at("first"),
                                     log.item_index.at("second")});
}

TEST_CASE("filter_and_index rejects silly arguments and empty results") {
    std::vector<RawEvent> events{ev("u", "a", 1, 1)};
    CHECK_THROWS_AS(filter_and_index(events, 0), std::invalid_argument);
    CHECK_THROWS_WITH_AS(filter_and_index(events, 5), doctest::Contains("no users"),
                         std::runtime_error);
}

TEST_CASE("chronological_split peels the last two events") {
    std::vector<RawEvent> events{
        ev("u", "a", 1, 1), ev("u", "b", 1, 2), ev("u", "c", 1, 3), ev("u", "d", 1, 4),
    };
    const auto log = filter_and_index(events, 4);
    const auto split = chronological_split(log);
    CHECK(split.train[0] == std::vector<std::uint32_t>{0, 1});
    CHECK(split.validation_target[0] == 2);
    CHECK(split.test_target[0] == 3);
}

TEST_CASE("chronological_split names users that are too short") {
    std::vector<RawEvent> events{ev("short", "a", 1, 1), ev("short", "b", 1, 2)};
    const auto log = filter_and_index(events, 2);
    CHECK_THROWS_WITH_AS(chronological_split(log), doctest::Contains("short"),
                         std::runtime_error);
}

TEST_CASE("windowize slides with stride one and skips short histories") {
    Split split;
    split.train = {{0, 1, 2, 3, 4, 5}, {6, 7}, {8, 9, 10}};
    split.validation_target = {0, 0, 0};
    split.test_target = {0, 0, 0};

    const auto instances = windowize(split, 2, 1);
    // User 0: 6-2-1+1 = 4 windows; user 1: none; user 2: 1 window.
    std::size_t expected = 0;
    for (const auto& tr : split.train) {
        if (tr.size() >= 3) expected += tr.size() - 3 + 1;
    }
    REQUIRE(instances.size() == expected);
    REQUIRE(instances.size() == 5);
    CHECK(instances[0].user == 0);
    CHECK(instances[0].context == std::vector<std::uint32_t>{0, 1});
    CHECK(instances[0].positives == std::vector<std::uint32_t>{2});
    CHECK(instances[1].context == std::vector<std::uint32_t>{1, 2});
    CHECK(instances[3].context == std::vector<std::uint32_t>{3, 4});
    CHECK(instances[3].positives == std::vector<std::uint32_t>{5});
    CHECK(instances[4].user == 2);
    CHECK(instances[4].context == std::vector<std::uint32_t>{8, 9});
    CHECK(instances[4].positives == std::vector<std::uint32_t>{10});

    CHECK_THROWS_AS(windowize(split, 0, 1), std::invalid_argument);
}

TEST_CASE("windowize matches the counting formula on varied lengths") {
    Split split;
    split.validation_target = {0, 0, 0, 0};
    split.test_target = {0, 0, 0, 0};
    split.train = {{}, {1, 2, 3, 4, 5, 6, 7}, {1, 2, 3, 4, 5, 6, 7, 8, 9}, {1, 2, 3}};
    const std::size_t L = 5, T = 3;
    std::size_t expected = 0;
    for (const auto& tr : split.train) {
        if (tr.size() >= L + T) expected += tr.size() - L - T + 1;
    }
    CHECK(windowize(split, L, T).size() == expected);
}

TEST_CASE("sample_negatives avoids positives and stays distinct") {
    TrainingInstance inst;
    inst.positives = {3, 7};
    Rng rng(5);
    for (int round = 0; round < 200; ++round) {
        const auto negs = sample_negatives(inst, 12, 4, rng);
        REQUIRE(negs.size() == 4);
        std::set<std::uint32_t> seen;
        for (auto n : negs) {
            CHECK(n < 12);
            CHECK(n != 3);
            CHECK(n != 7);
            CHECK(seen.insert(n).second);  // without replacement
        }
    }
}

TEST_CASE("sample_negatives respects extra exclusions and refuses the impossible") {
    TrainingInstance inst;
    inst.positives = {0};
    const std::vector<std::uint32_t> history{1, 2, 3};
    Rng rng(6);
    for (int round = 0; round < 100; ++round) {
        const auto negs = sample_negatives(inst, 6, 2, rng, history);
        for (auto n : negs) CHECK(n >= 4);
    }
    CHECK_THROWS_AS(static_cast<void>(sample_negatives(inst, 3, 3, rng)),
                    std::invalid_argument);
}

TEST_CASE("sample_negatives draws roughly uniformly over allowed items") {
    TrainingInstance inst;
    inst.positives = {5};
    Rng rng(9);
    std::vector<std::size_t> counts(21, 0);
    const std::size_t draws = 20000;
    for (std::size_t n = 0; n < draws; ++n) {
        ++counts[sample_negatives(inst, 21, 1, rng)[0]];
    }
    CHECK(counts[5] == 0);
    counts.erase(counts.begin() + 5);
    // 19 degrees of freedom; 43.82 is the p=0.001 cutoff.
    CHECK(oracle::chi_square_uniform(counts, double(draws) / 20) < 43.82);
}

TEST_CASE("sample_negatives is reproducible per seed") {
    TrainingInstance inst;
    inst.positives = {1};
    Rng a(77), b(77);
    CHECK(sample_negatives(inst, 50, 5, a) == sample_negatives(inst, 50, 5, b));
}

TEST_CASE("log save/load round-trips byte for byte") {
    std::vector<RawEvent> events{
        ev("alice", "x1", 1, 3), ev("alice", "x2", 1, 4), ev("alice", "x3", 1, 5),
        ev("bob", "x2", 1, 1),   ev("bob", "x4", 1, 2),   ev("bob", "x1", 1, 9),
    };
    const auto log = filter_and_index(events, 3);
    const auto p1 = fs::temp_directory_path() / "attrec_corpus_roundtrip1.log";
    const auto p2 = fs::temp_directory_path() / "attrec_corpus_roundtrip2.log";
    save_log(log, p1);
    const auto loaded = load_log(p1);
    CHECK(loaded.sequences == log.sequences);
    CHECK(loaded.user_ids == log.user_ids);
    CHECK(loaded.item_ids == log.item_ids);
    CHECK(loaded.user_index == log.user_index);
    CHECK(loaded.item_index == log.item_index);
    save_log(loaded, p2);
    CHECK(slurp(p1) == slurp(p2));
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("load_log rejects foreign files") {
    const auto path = temp_file("notalog.txt", "something else entirely\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_log(path)), doctest::Contains("version 1"),
                         std::runtime_error);
    fs::remove(path);
}
