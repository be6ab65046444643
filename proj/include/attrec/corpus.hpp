#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "attrec/matrix.hpp"

namespace attrec {

// One line of a raw interaction file: user, item, optional rating, timestamp.
struct RawEvent {
    std::string user;
    std::string item;
    std::optional<double> rating;
    std::int64_t timestamp = 0;
};

// Indexed corpus: per-user chronological item sequences plus the id maps
// back to the external string ids.
struct InteractionLog {
    std::vector<std::vector<std::uint32_t>> sequences;  // [user] -> items, oldest first
    std::vector<std::string> user_ids;                  // internal -> external
    std::vector<std::string> item_ids;
    std::unordered_map<std::string, std::uint32_t> user_index;  // external -> internal
    std::unordered_map<std::string, std::uint32_t> item_index;

    std::size_t num_users() const { return sequences.size(); }
    std::size_t num_items() const { return item_ids.size(); }
    std::size_t num_interactions() const;
};

// Leave-last-two split: per user the final item is the test target, the one
// before it the validation target, everything earlier is training history.
struct Split {
    std::vector<std::vector<std::uint32_t>> train;
    std::vector<std::uint32_t> validation_target;
    std::vector<std::uint32_t> test_target;
};

// One sliding-window example: the `context` items (oldest first) are what
// the model attends over, `positives` are the items that actually followed.
struct TrainingInstance {
    std::uint32_t user = 0;
    std::vector<std::uint32_t> context;
    std::vector<std::uint32_t> positives;
};

/// Parses a raw event file. `delimiter` is a literal separator string,
/// typically "\t" or "::". Ratings column is optional per line set by
/// `has_rating` (4 columns user/item/rating/timestamp vs 3 without rating).
/// Malformed lines and an empty file are hard errors naming the line.
std::vector<RawEvent> load_raw(const std::filesystem::path& path,
                               const std::string& delimiter = "\t",
                               bool has_rating = true);

/// Implicit-feedback conversion: every event counts as a positive and the
/// rating is dropped. When `min_rating` is set, events rated below it are
/// removed first (off by default; kept as a knob for experiments).
std::vector<RawEvent> to_implicit(std::vector<RawEvent> events,
                                  std::optional<double> min_rating = std::nullopt);

/// Deduplicates exact (user, item, timestamp) repeats keeping the first
/// occurrence, drops users with fewer than `min_actions` events in a single
/// pass (no iterative refiltering), assigns dense indices by first
/// appearance in file order, and sorts each user's events by timestamp with
/// ties left in file order.
InteractionLog filter_and_index(const std::vector<RawEvent>& events, std::size_t min_actions);

/// Splits every sequence into train / validation target / test target.
/// A sequence shorter than 3 is a hard error naming the offending user.
Split chronological_split(const InteractionLog& log);

/// Enumerates sliding windows over each training sequence: `window_len`
/// context items followed by `num_targets` positives, stride 1. Users whose
/// training history is shorter than window_len + num_targets contribute
/// nothing.
std::vector<TrainingInstance> windowize(const Split& split, std::size_t window_len,
                                        std::size_t num_targets);

/// Draws `count` distinct items uniformly from the catalog excluding the
/// instance's positives and anything in `also_exclude` (used for the
/// exclude-full-history variant). Throws when the exclusions leave fewer
/// than `count` items.
std::vector<std::uint32_t> sample_negatives(const TrainingInstance& instance,
                                            std::size_t num_items, std::size_t count, Rng& rng,
                                            std::span<const std::uint32_t> also_exclude = {});

/// Writes / reads the indexed corpus as versioned plain text. A loaded log
/// saves back byte-identically.
void save_log(const InteractionLog& log, const std::filesystem::path& path);
InteractionLog load_log(const std::filesystem::path& path);

}  // namespace attrec
