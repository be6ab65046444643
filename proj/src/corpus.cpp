#include "attrec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace attrec {
namespace {

std::vector<std::string> split_fields(const std::string& line, const std::string& delim) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t hit = line.find(delim, pos);
        if (hit == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, hit - pos));
        pos = hit + delim.size();
    }
}

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t lineno,
                             const std::string& why) {
    throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + why);
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t lineno) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        line_error(path, lineno, "bad rating '" + s + "'");
    }
    return value;
}

std::int64_t parse_i64(const std::string& s, const std::filesystem::path& path,
                       std::size_t lineno) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        line_error(path, lineno, "bad timestamp '" + s + "'");
    }
    return value;
}

}  // namespace

std::size_t InteractionLog::num_interactions() const {
    std::size_t n = 0;
    for (const auto& seq : sequences) n += seq.size();
    return n;
}

std::vector<RawEvent> load_raw(const std::filesystem::path& path, const std::string& delimiter,
                               bool has_rating) {
    if (delimiter.empty()) {
        throw std::invalid_argument("load_raw: delimiter must not be empty");
    }
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::vector<RawEvent> events;
    std::string line;
    std::size_t lineno = 0;
    const std::size_t want = has_rating ? 4 : 3;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto fields = split_fields(line, delimiter);
        if (fields.size() != want) {
            line_error(path, lineno,
                       "expected " + std::to_string(want) + " fields, got " +
                           std::to_string(fields.size()));
        }
        if (fields[0].empty() || fields[1].empty()) {
            line_error(path, lineno, "empty user or item id");
        }
        RawEvent ev;
        ev.user = fields[0];
        ev.item = fields[1];
        if (has_rating) {
            ev.rating = parse_double(fields[2], path, lineno);
            ev.timestamp = parse_i64(fields[3], path, lineno);
        } else {
            ev.timestamp = parse_i64(fields[2], path, lineno);
        }
        events.push_back(std::move(ev));
    }
    if (events.empty()) {
        throw std::runtime_error(path.string() + ": no events");
    }
    return events;
}

std::vector<RawEvent> to_implicit(std::vector<RawEvent> events, std::optional<double> min_rating) {
    if (min_rating) {
        std::erase_if(events, [&](const RawEvent& ev) {
            return ev.rating && *ev.rating < *min_rating;
        });
    }
    for (auto& ev : events) ev.rating.reset();
    return events;
}

InteractionLog filter_and_index(const std::vector<RawEvent>& events, std::size_t min_actions) {
    if (min_actions < 1) {
        throw std::invalid_argument("filter_and_index: min_actions must be at least 1");
    }

    // Exact repeats of (user, item, timestamp) collapse to their first
    // occurrence before anything is counted.
    std::vector<const RawEvent*> kept;
    kept.reserve(events.size());
    std::unordered_set<std::string> seen;
    seen.reserve(events.size());
    for (const auto& ev : events) {
        std::string key = ev.user;
        key += '\x1f';
        key += ev.item;
        key += '\x1f';
        key += std::to_string(ev.timestamp);
        if (seen.insert(std::move(key)).second) kept.push_back(&ev);
    }

    std::unordered_map<std::string, std::size_t> counts;
    for (const auto* ev : kept) ++counts[ev->user];

    // Single filtering pass: dropping short users does not re-trigger
    // filtering of anyone else.
    InteractionLog log;
    std::vector<std::vector<std::pair<std::int64_t, std::uint32_t>>> stamped;
    for (const auto* ev : kept) {
        if (counts[ev->user] < min_actions) continue;
        auto [uit, unew] = log.user_index.try_emplace(
            ev->user, static_cast<std::uint32_t>(log.user_ids.size()));
        if (unew) {
            log.user_ids.push_back(ev->user);
            stamped.emplace_back();
        }
        auto [iit, inew] = log.item_index.try_emplace(
            ev->item, static_cast<std::uint32_t>(log.item_ids.size()));
        if (inew) log.item_ids.push_back(ev->item);
        stamped[uit->second].emplace_back(ev->timestamp, iit->second);
    }
    if (stamped.empty()) {
        throw std::runtime_error("filter_and_index: no users left (min_actions=" +
                                 std::to_string(min_actions) + ")");
    }

    log.sequences.resize(stamped.size());
    for (std::size_t u = 0; u < stamped.size(); ++u) {
        // stable_sort keeps equal timestamps in file order.
        std::stable_sort(stamped[u].begin(), stamped[u].end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        log.sequences[u].reserve(stamped[u].size());
        for (const auto& [ts, item] : stamped[u]) log.sequences[u].push_back(item);
    }
    return log;
}

Split chronological_split(const InteractionLog& log) {
    Split split;
    split.train.resize(log.num_users());
    split.validation_target.resize(log.num_users());
    split.test_target.resize(log.num_users());
    for (std::size_t u = 0; u < log.num_users(); ++u) {
        const auto& seq = log.sequences[u];
        if (seq.size() < 3) {
            throw std::runtime_error("chronological_split: user '" + log.user_ids[u] + "' has " +
                                     std::to_string(seq.size()) +
                                     " events, need at least 3 for train/validation/test");
        }
        split.train[u].assign(seq.begin(), seq.end() - 2);
        split.validation_target[u] = seq[seq.size() - 2];
        split.test_target[u] = seq[seq.size() - 1];
    }
    return split;
}

std::vector<TrainingInstance> windowize(const Split& split, std::size_t window_len,
                                        std::size_t num_targets) {
    if (window_len < 1 || num_targets < 1) {
        throw std::invalid_argument("windowize: window_len and num_targets must be at least 1");
    }
    std::vector<TrainingInstance> instances;
    for (std::size_t u = 0; u < split.train.size(); ++u) {
        const auto& tr = split.train[u];
        if (tr.size() < window_len + num_targets) continue;
        const std::size_t last_start = tr.size() - window_len - num_targets;
        for (std::size_t start = 0; start <= last_start; ++start) {
            TrainingInstance inst;
            inst.user = static_cast<std::uint32_t>(u);
            inst.context.assign(tr.begin() + start, tr.begin() + start + window_len);
            inst.positives.assign(tr.begin() + start + window_len,
                                  tr.begin() + start + window_len + num_targets);
            instances.push_back(std::move(inst));
        }
    }
    return instances;
}

std::vector<std::uint32_t> sample_negatives(const TrainingInstance& instance,
                                            std::size_t num_items, std::size_t count, Rng& rng,
                                            std::span<const std::uint32_t> also_exclude) {
    std::unordered_set<std::uint32_t> excluded(instance.positives.begin(),
                                               instance.positives.end());
    excluded.insert(also_exclude.begin(), also_exclude.end());
    if (num_items < excluded.size() + count) {
        throw std::invalid_argument("sample_negatives: need " + std::to_string(count) +
                                    " negatives but only " +
                                    std::to_string(num_items - excluded.size()) +
                                    " items are not excluded");
    }
    std::vector<std::uint32_t> negatives;
    negatives.reserve(count);
    while (negatives.size() < count) {
        auto draw = static_cast<std::uint32_t>(rng.below(num_items));
        if (excluded.insert(draw).second) negatives.push_back(draw);
    }
    return negatives;
}

void save_log(const InteractionLog& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "attrec.log 1\n";
    out << "users " << log.num_users() << "\n";
    out << "items " << log.num_items() << "\n";
    for (const auto& id : log.user_ids) out << "u " << id << "\n";
    for (const auto& id : log.item_ids) out << "i " << id << "\n";
    for (const auto& seq : log.sequences) {
        out << "s " << seq.size();
        for (auto item : seq) out << ' ' << item;
        out << "\n";
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

InteractionLog load_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::string line;
    auto next_line = [&](const char* what) -> std::string& {
        if (!std::getline(in, line)) {
            throw std::runtime_error(path.string() + ": truncated, expected " + std::string(what));
        }
        return line;
    };
    if (next_line("header") != "attrec.log 1") {
        throw std::runtime_error(path.string() + ": not an attrec.log version 1 file");
    }
    auto read_count = [&](const std::string& tag) -> std::size_t {
        next_line(tag.c_str());
        if (line.rfind(tag + " ", 0) != 0) {
            throw std::runtime_error(path.string() + ": expected '" + tag + " <n>', got '" +
                                     line + "'");
        }
        return static_cast<std::size_t>(std::stoull(line.substr(tag.size() + 1)));
    };
    const std::size_t num_users = read_count("users");
    const std::size_t num_items = read_count("items");

    InteractionLog log;
    auto read_id = [&](char tag, std::vector<std::string>& ids,
                       std::unordered_map<std::string, std::uint32_t>& index) {
        next_line("id line");
        if (line.size() < 2 || line[0] != tag || line[1] != ' ') {
            throw std::runtime_error(path.string() + ": malformed id line '" + line + "'");
        }
        std::string id = line.substr(2);
        index.emplace(id, static_cast<std::uint32_t>(ids.size()));
        ids.push_back(std::move(id));
    };
    for (std::size_t u = 0; u < num_users; ++u) read_id('u', log.user_ids, log.user_index);
    for (std::size_t i = 0; i < num_items; ++i) read_id('i', log.item_ids, log.item_index);

    log.sequences.resize(num_users);
    for (std::size_t u = 0; u < num_users; ++u) {
        next_line("sequence line");
        std::istringstream ss(line);
        std::string tag;
        std::size_t len = 0;
        if (!(ss >> tag >> len) || tag != "s") {
            throw std::runtime_error(path.string() + ": malformed sequence line '" + line + "'");
        }
        log.sequences[u].resize(len);
        for (std::size_t k = 0; k < len; ++k) {
            if (!(ss >> log.sequences[u][k]) || log.sequences[u][k] >= num_items) {
                throw std::runtime_error(path.string() + ": bad item index in sequence " +
                                         std::to_string(u));
            }
        }
    }
    return log;
}

}  // namespace attrec
