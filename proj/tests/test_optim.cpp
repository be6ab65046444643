#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "attrec/optim.hpp"
#include "support/synth.hpp"

using namespace attrec;
namespace fs = std::filesystem;

namespace {

// Small corpus the whole training path can chew through in milliseconds.
InteractionLog small_log(std::uint64_t seed = 1) {
    synth::Spec spec;
    spec.num_users = 60;
    spec.num_items = 80;
    spec.min_len = 8;
    spec.max_len = 16;
    spec.seed = seed;
    return synth::log(spec);
}

TrainConfig small_config() {
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 128;
    tc.seed = 42;
    tc.window_len = 2;
    tc.num_targets = 1;
    tc.dim = 8;
    tc.lambda = 0.001;
    return tc;
}

}  // namespace

TEST_CASE("adagrad_step hand-computed updates") {
    Matrix param(1, 2), grad(1, 2), accum(1, 2);
    param(0, 0) = 1.0;
    param(0, 1) = -2.0;
    grad(0, 0) = 2.0;
    grad(0, 1) = 0.0;
    const double lr = 0.05, eps = 1e-8;

    adagrad_step(param, grad, accum, lr, eps);
    CHECK(accum(0, 0) == 4.0);
    CHECK(param(0, 0) == doctest::Approx(1.0 - 0.05 * 2.0 / (2.0 + eps)).epsilon(1e-15));
    // Zero gradient: accumulator and parameter bit-identical.
    CHECK(accum(0, 1) == 0.0);
    CHECK(param(0, 1) == -2.0);

    adagrad_step(param, grad, accum, lr, eps);
    CHECK(accum(0, 0) == 8.0);
    CHECK(param(0, 0) == doctest::Approx(1.0 - 0.05 * 2.0 / (2.0 + eps) -
                                         0.05 * 2.0 / (std::sqrt(8.0) + eps))
                             .epsilon(1e-15));
}

TEST_CASE("adagrad_step_rows leaves unlisted rows alone") {
    Matrix param(3, 2), grad(3, 2), accum(3, 2);
    for (std::size_t n = 0; n < param.size(); ++n) {
        param.data()[n] = double(n);
        grad.data()[n] = 1.0;
    }
    const Matrix before = param;
    const std::vector<std::uint32_t> rows{1};
    adagrad_step_rows(param, grad, rows, accum, 0.1, 1e-8);
    CHECK(param(0, 0) == before(0, 0));
    CHECK(param(2, 1) == before(2, 1));
    CHECK(param(1, 0) != before(1, 0));
    CHECK(accum(1, 0) == 1.0);
    CHECK(accum(0, 0) == 0.0);

    const std::vector<std::uint32_t> bad{7};
    CHECK_THROWS_AS(adagrad_step_rows(param, grad, bad, accum, 0.1, 1e-8),
                    std::out_of_range);
    Matrix wrong(2, 2);
    CHECK_THROWS_AS(adagrad_step(param, wrong, accum, 0.1, 1e-8), std::invalid_argument);
}

TEST_CASE("validate flags every bad field at once") {
    TrainConfig tc;
    tc.epochs = 0;
    tc.omega = 1.5;
    tc.dim = 7;  // odd while time encodings are on
    tc.learning_rate = 0.0;
    const auto problems = validate(tc);
    REQUIRE(problems.size() == 4);
    auto has = [&](const char* needle) {
        return std::any_of(problems.begin(), problems.end(), [&](const std::string& p) {
            return p.find(needle) != std::string::npos;
        });
    };
    CHECK(has("epochs"));
    CHECK(has("omega must lie in [0,1]"));
    CHECK(has("even"));
    CHECK(has("learning-rate"));

    tc.use_time_encoding = false;  // odd dims fine without the sinusoids
    tc.epochs = 1;
    tc.omega = 0.5;
    tc.learning_rate = 0.05;
    CHECK(validate(tc).empty());
}

TEST_CASE("train produces a full trace and picks the best validation epoch") {
    const auto log = small_log();
    const auto split = chronological_split(log);
    const auto result = train(log, split, small_config());

    REQUIRE(result.trace.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) CHECK(result.trace[e].epoch == e + 1);

    double best = -1.0;
    std::size_t best_epoch = 0;
    for (const auto& rec : result.trace) {
        if (rec.val_hr > best) {
            best = rec.val_hr;
            best_epoch = rec.epoch;
        }
    }
    CHECK(result.best_epoch == best_epoch);  // earliest max wins
    CHECK(result.best_val_hr == best);
    CHECK(result.params.dim() == 8);
    CHECK(result.params.window_len == 2);
}

TEST_CASE("training loss comes down on the synthetic corpus") {
    const auto log = small_log(7);
    const auto split = chronological_split(log);
    TrainConfig tc = small_config();
    tc.epochs = 12;
    const auto result = train(log, split, tc);
    CHECK(result.trace.back().mean_loss < 0.6 * result.trace.front().mean_loss);
}

TEST_CASE("equal seeds give bitwise-equal runs, different seeds do not") {
    const auto log = small_log();
    const auto split = chronological_split(log);
    const TrainConfig tc = small_config();
    const auto a = train(log, split, tc);
    const auto b = train(log, split, tc);
    CHECK(a.params.item_short == b.params.item_short);
    CHECK(a.params.item_long == b.params.item_long);
    CHECK(a.params.users == b.params.users);
    CHECK(a.params.attention.query_weights == b.params.attention.query_weights);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
        CHECK(a.trace[e].mean_loss == b.trace[e].mean_loss);
        CHECK(a.trace[e].val_hr == b.trace[e].val_hr);
    }

    TrainConfig other = tc;
    other.seed = 43;
    const auto c = train(log, split, other);
    CHECK(a.params.item_short != c.params.item_short);
}

TEST_CASE("norm clipping keeps every embedding row inside the unit ball") {
    const auto log = small_log(3);
    const auto split = chronological_split(log);
    TrainConfig tc = small_config();
    tc.clip_embedding_norms = true;
    tc.check_invariants = true;  // per-epoch sweep throws on violation
    tc.epochs = 5;
    const auto result = train(log, split, tc);
    for (const Matrix* table :
         {&result.params.item_short, &result.params.item_long, &result.params.users}) {
        for (double norm : row_l2_norms(*table)) CHECK(norm <= 1.0 + 1e-9);
    }
}

TEST_CASE("train rejects corpora with no usable windows") {
    const auto log = small_log();
    const auto split = chronological_split(log);
    TrainConfig tc = small_config();
    tc.window_len = 500;
    CHECK_THROWS_WITH_AS(static_cast<void>(train(log, split, tc)),
                         doctest::Contains("no training instances"), std::runtime_error);

    tc = small_config();
    tc.omega = 2.0;
    CHECK_THROWS_AS(static_cast<void>(train(log, split, tc)), std::invalid_argument);
}

TEST_CASE("the no-attention ablation trains and differs from the full model") {
    const auto log = small_log(5);
    const auto split = chronological_split(log);

    // Two-item windows are a degenerate case: the masked softmax saturates
    // to an exact row swap, so attention followed by the mean IS the window
    // mean and both variants march in lockstep.
    TrainConfig tc = small_config();
    REQUIRE(tc.window_len == 2);
    const auto full2 = train(log, split, tc);
    tc.attention_enabled = false;
    const auto flat2 = train(log, split, tc);
    CHECK(full2.params.item_short == flat2.params.item_short);

    // From three items up the affinity weights depend on the inputs and the
    // variants separate.
    tc = small_config();
    tc.window_len = 3;
    const auto full = train(log, split, tc);
    tc.attention_enabled = false;
    const auto flat = train(log, split, tc);
    CHECK_FALSE(flat.params.attention_enabled);
    CHECK(full.params.item_short != flat.params.item_short);
}

TEST_CASE("trace files carry the echo header and one row per epoch") {
    const auto log = small_log();
    const auto split = chronological_split(log);
    const auto result = train(log, split, small_config());
    const auto path = fs::temp_directory_path() / "attrec_optim_trace.tsv";
    write_trace(result, "seed = 42\nomega = 0.3", path);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "attrec.trace 1");
    REQUIRE(std::getline(in, line));
    CHECK(line == "# seed = 42");
    REQUIRE(std::getline(in, line));
    CHECK(line == "# omega = 0.3");
    REQUIRE(std::getline(in, line));
    CHECK(line.rfind("# columns:", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.rfind("#", 0) == 0) continue;
        ++rows;
        std::istringstream ss(line);
        std::size_t epoch = 0;
        double loss = 0, hr = 0, mrr = 0;
        REQUIRE((ss >> epoch >> loss >> hr >> mrr));
        CHECK(epoch == rows);
        CHECK(loss == doctest::Approx(result.trace[rows - 1].mean_loss).epsilon(1e-9));
    }
    CHECK(rows == result.trace.size());
    fs::remove(path);
}
