#include "attrirec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "attrirec/errors.hpp"
#include "attrirec/io.hpp"
#include "attrirec/random.hpp"

namespace attrirec {

using nlohmann::json;

int binarize(int rating) {
    if (rating < 1 || rating > 5) {
        throw InputError("rating " + std::to_string(rating) + " outside [1,5]");
    }
    return rating >= 4 ? 1 : 0;
}

namespace {

struct CsvRecord {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

// RFC 4180 style: fields may be double-quoted, quotes doubled inside,
// quoted fields may span lines.
std::vector<CsvRecord> parse_csv(const std::string& text, const std::string& origin) {
    std::vector<CsvRecord> records;
    std::size_t line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
        CsvRecord record;
        record.line = line;
        std::string field;
        bool in_quotes = false;
        bool field_was_quoted = false;
        bool done = false;
        while (!done) {
            if (i >= text.size()) {
                if (in_quotes) {
                    throw InputError(origin + ": unterminated quoted field at line " +
                                     std::to_string(record.line));
                }
                record.fields.push_back(std::move(field));
                break;
            }
            const char c = text[i++];
            if (in_quotes) {
                if (c == '"') {
                    if (i < text.size() && text[i] == '"') {
                        field.push_back('"');
                        ++i;
                    } else {
                        in_quotes = false;
                    }
                } else {
                    if (c == '\n') {
                        ++line;
                    }
                    field.push_back(c);
                }
                continue;
            }
            switch (c) {
            case '"':
                if (!field.empty() || field_was_quoted) {
                    throw InputError(origin + ": stray quote at line " + std::to_string(line));
                }
                in_quotes = true;
                field_was_quoted = true;
                break;
            case ',':
                record.fields.push_back(std::move(field));
                field.clear();
                field_was_quoted = false;
                break;
            case '\r':
                break;
            case '\n':
                record.fields.push_back(std::move(field));
                ++line;
                done = true;
                break;
            default:
                field.push_back(c);
            }
        }
        const bool blank = record.fields.size() == 1 && record.fields[0].empty();
        if (!blank) {
            records.push_back(std::move(record));
        }
    }
    return records;
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n\r") == std::string::npos) {
        return value;
    }
    std::string out = "\"";
    for (const char c : value) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out += '"';
    return out;
}

template <typename T>
bool parse_integer(const std::string& text, T& out) {
    if (text.empty()) {
        return false;
    }
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::string location(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ": line " + std::to_string(line);
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    const std::string text = read_text_file(path);
    std::istringstream stream(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(stream, line)) {
        ++number;
        if (trim_view(line).empty()) {
            continue;
        }
        json value;
        try {
            value = json::parse(line);
        } catch (const json::exception& e) {
            throw InputError(location(path, number) + ": invalid JSON (" + e.what() + ")");
        }
        if (!value.is_object()) {
            throw InputError(location(path, number) + ": expected a JSON object");
        }
        try {
            fn(value, number);
        } catch (const json::exception& e) {
            throw InputError(location(path, number) + ": " + e.what());
        }
    }
}

std::vector<std::string> string_array(const json& value, const char* key) {
    std::vector<std::string> out;
    if (!value.contains(key) || value.at(key).is_null()) {
        return out;
    }
    for (const auto& entry : value.at(key)) {
        out.push_back(entry.get<std::string>());
    }
    return out;
}

std::string string_or_empty(const json& value, const char* key) {
    if (!value.contains(key) || value.at(key).is_null()) {
        return {};
    }
    return value.at(key).get<std::string>();
}

} // namespace

std::vector<Interaction> load_ratings(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    const auto records = parse_csv(text, path.string());
    if (records.empty()) {
        throw InputError(path.string() + ": missing header line");
    }
    const auto& header = records.front().fields;
    const std::vector<std::string> base = {"user_id", "item_id", "rating", "timestamp"};
    bool has_reason = false;
    if (header.size() == 5 && std::equal(base.begin(), base.end(), header.begin()) &&
        header[4] == "reason") {
        has_reason = true;
    } else if (header != base) {
        throw InputError(path.string() + ": header must be user_id,item_id,rating,timestamp[,reason]");
    }

    std::vector<Interaction> out;
    out.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::size_t n = rec.fields.size();
        if (!(n == 4 || (has_reason && n == 5))) {
            throw InputError(path.string() + ": wrong column count at line " + std::to_string(rec.line));
        }
        Interaction row;
        row.user_id = rec.fields[0];
        row.item_id = rec.fields[1];
        if (!parse_integer(rec.fields[2], row.rating)) {
            throw InputError(path.string() + ": non-integer rating at line " + std::to_string(rec.line));
        }
        if (!parse_integer(rec.fields[3], row.timestamp)) {
            throw InputError(path.string() + ": non-integer timestamp at line " + std::to_string(rec.line));
        }
        if (row.rating < 1 || row.rating > 5) {
            throw InputError(path.string() + ": rating out of range at line " + std::to_string(rec.line));
        }
        if (n == 5) {
            row.reason = rec.fields[4];
        }
        out.push_back(std::move(row));
    }
    return out;
}

void write_ratings(const std::filesystem::path& path, const std::vector<Interaction>& interactions) {
    std::string text = "user_id,item_id,rating,timestamp,reason\n";
    for (const auto& row : interactions) {
        text += csv_field(row.user_id);
        text += ',';
        text += csv_field(row.item_id);
        text += ',';
        text += std::to_string(row.rating);
        text += ',';
        text += std::to_string(row.timestamp);
        text += ',';
        text += csv_field(row.reason);
        text += '\n';
    }
    write_text_file_atomic(path, text);
}

std::vector<ItemRecord> load_items(const std::filesystem::path& path) {
    std::vector<ItemRecord> items;
    for_each_json_line(path, [&](const json& value, std::size_t line) {
        ItemRecord item;
        if (!value.contains("item_id")) {
            throw InputError(location(path, line) + ": missing item_id");
        }
        item.item_id = value.at("item_id").get<std::string>();
        item.title = string_or_empty(value, "title");
        item.description = string_or_empty(value, "description");
        item.attribute_tags = string_array(value, "attributes");
        item.domain = string_or_empty(value, "domain");
        if (value.contains("visual") && !value.at("visual").is_null()) {
            item.visual_feature = value.at("visual").get<std::vector<double>>();
        }
        items.push_back(std::move(item));
    });
    return items;
}

void write_items(const std::filesystem::path& path, const std::vector<ItemRecord>& items) {
    std::string text;
    for (const auto& item : items) {
        json value = {
            {"item_id", item.item_id},
            {"title", item.title},
            {"description", item.description},
            {"attributes", item.attribute_tags},
        };
        if (item.visual_feature) {
            value["visual"] = *item.visual_feature;
        }
        value["domain"] = item.domain;
        text += value.dump();
        text += '\n';
    }
    write_text_file_atomic(path, text);
}

std::vector<UserProfile> load_users(const std::filesystem::path& path) {
    std::vector<UserProfile> users;
    for_each_json_line(path, [&](const json& value, std::size_t line) {
        UserProfile user;
        if (!value.contains("user_id")) {
            throw InputError(location(path, line) + ": missing user_id");
        }
        user.user_id = value.at("user_id").get<std::string>();
        user.demographic_tags = string_array(value, "groups");
        user.domain = string_or_empty(value, "domain");
        users.push_back(std::move(user));
    });
    return users;
}

void write_users(const std::filesystem::path& path, const std::vector<UserProfile>& users) {
    std::string text;
    for (const auto& user : users) {
        const json value = {
            {"user_id", user.user_id},
            {"groups", user.demographic_tags},
            {"domain", user.domain},
        };
        text += value.dump();
        text += '\n';
    }
    write_text_file_atomic(path, text);
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
    const std::array<double, 3> parts = {ratios.train, ratios.valid, ratios.test};
    for (const double p : parts) {
        if (!(p > 0.0) || !std::isfinite(p)) {
            throw InputError("split ratios must be positive");
        }
    }
    if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
        throw InputError("split ratios must sum to 1");
    }
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = static_cast<double>(n) * parts[k];
        sizes[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[k] = exact - static_cast<double>(sizes[k]);
        assigned += sizes[k];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-12; });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
        ++sizes[order[k]];
        ++assigned;
    }
    while (assigned > n) {
        // Only reachable through the 1e-9 floor slack; shave from test first.
        for (std::size_t k = 3; k-- > 0 && assigned > n;) {
            if (sizes[k] > 0) {
                --sizes[k];
                --assigned;
            }
        }
    }
    return sizes;
}

DatasetSplit make_splits(const std::vector<Interaction>& interactions, const SplitRatios& ratios,
                         std::size_t coldstart_threshold, std::uint64_t seed) {
    if (interactions.empty()) {
        throw InputError("cannot split an empty interaction log");
    }
    const auto sizes = split_sizes(interactions.size(), ratios);

    std::map<std::string, std::vector<std::size_t>> by_user;
    for (std::size_t i = 0; i < interactions.size(); ++i) {
        by_user[interactions[i].user_id].push_back(i);
    }
    std::vector<std::vector<std::size_t>*> queues;
    queues.reserve(by_user.size());
    for (auto& [user, rows] : by_user) {
        // Oldest first, so the back is the latest.
        std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
            return interactions[a].timestamp < interactions[b].timestamp;
        });
        queues.push_back(&rows);
    }
    Rng rng(seed);
    rng.shuffle(std::span(queues));

    std::vector<int> assignment(interactions.size(), 0); // 0 train, 1 valid, 2 test
    std::vector<std::size_t> taken(queues.size(), 0);
    std::size_t need_test = sizes[2];
    std::size_t need_valid = sizes[1];
    while (need_test + need_valid > 0) {
        bool progressed = false;
        for (std::size_t q = 0; q < queues.size() && need_test + need_valid > 0; ++q) {
            auto& rows = *queues[q];
            if (taken[q] >= rows.size()) {
                continue;
            }
            const std::size_t row = rows[rows.size() - 1 - taken[q]];
            ++taken[q];
            progressed = true;
            if (need_test > 0) {
                assignment[row] = 2;
                --need_test;
            } else {
                assignment[row] = 1;
                --need_valid;
            }
        }
        if (!progressed) {
            break;
        }
    }

    DatasetSplit split;
    std::map<std::string, std::size_t> train_count;
    std::set<std::string> train_items;
    for (const auto& [user, rows] : by_user) {
        train_count[user] = 0;
    }
    for (std::size_t i = 0; i < interactions.size(); ++i) {
        switch (assignment[i]) {
        case 0:
            split.train.push_back(i);
            ++train_count[interactions[i].user_id];
            train_items.insert(interactions[i].item_id);
            break;
        case 1:
            split.valid.push_back(i);
            break;
        default:
            split.test.push_back(i);
        }
    }
    for (const auto& [user, count] : train_count) {
        if (count < coldstart_threshold) {
            split.coldstart_users.insert(user);
        }
    }
    for (const auto& row : interactions) {
        if (!train_items.contains(row.item_id)) {
            split.coldstart_items.insert(row.item_id);
        }
    }
    return split;
}

Corpus::Corpus(std::vector<UserProfile> users, std::vector<ItemRecord> items,
               std::vector<Interaction> interactions)
    : users_(std::move(users)), items_(std::move(items)), interactions_(std::move(interactions)) {
    for (std::size_t u = 0; u < users_.size(); ++u) {
        const auto& user = users_[u];
        if (!user_lookup_.emplace(user.user_id, u).second) {
            throw InputError("duplicate user_id " + user.user_id);
        }
        std::set<std::string> seen(user.demographic_tags.begin(), user.demographic_tags.end());
        if (seen.size() != user.demographic_tags.size()) {
            throw InputError("duplicate demographic tag for user " + user.user_id);
        }
    }
    std::set<std::string> vocab;
    for (std::size_t i = 0; i < items_.size(); ++i) {
        const auto& item = items_[i];
        if (!item_lookup_.emplace(item.item_id, i).second) {
            throw InputError("duplicate item_id " + item.item_id);
        }
        vocab.insert(item.attribute_tags.begin(), item.attribute_tags.end());
        if (item.visual_feature) {
            const std::size_t dim = item.visual_feature->size();
            if (dim == 0) {
                throw InputError("empty visual feature for item " + item.item_id);
            }
            if (visual_dim_ == 0) {
                visual_dim_ = dim;
            } else if (dim != visual_dim_) {
                throw InputError("visual feature of item " + item.item_id + " has dimension " +
                                 std::to_string(dim) + ", expected " + std::to_string(visual_dim_));
            }
        }
    }
    attributes_.assign(vocab.begin(), vocab.end());
    for (std::size_t a = 0; a < attributes_.size(); ++a) {
        attribute_lookup_.emplace(attributes_[a], a);
    }
    item_attributes_.resize(items_.size());
    for (std::size_t i = 0; i < items_.size(); ++i) {
        for (const auto& tag : items_[i].attribute_tags) {
            const std::size_t a = attribute_lookup_.at(tag);
            auto& list = item_attributes_[i];
            if (std::find(list.begin(), list.end(), a) == list.end()) {
                list.push_back(a);
            }
        }
    }
    interaction_user_.reserve(interactions_.size());
    interaction_item_.reserve(interactions_.size());
    for (std::size_t r = 0; r < interactions_.size(); ++r) {
        const auto& row = interactions_[r];
        const auto u = user_lookup_.find(row.user_id);
        if (u == user_lookup_.end()) {
            throw InputError("interaction " + std::to_string(r) + " references unknown user " + row.user_id);
        }
        const auto i = item_lookup_.find(row.item_id);
        if (i == item_lookup_.end()) {
            throw InputError("interaction " + std::to_string(r) + " references unknown item " + row.item_id);
        }
        if (row.rating < 1 || row.rating > 5) {
            throw InputError("interaction " + std::to_string(r) + " has rating outside [1,5]");
        }
        interaction_user_.push_back(u->second);
        interaction_item_.push_back(i->second);
    }
}

std::optional<std::size_t> Corpus::user_index(const std::string& id) const {
    const auto it = user_lookup_.find(id);
    if (it == user_lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::size_t> Corpus::item_index(const std::string& id) const {
    const auto it = item_lookup_.find(id);
    if (it == item_lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::size_t> Corpus::attribute_index(const std::string& name) const {
    const auto it = attribute_lookup_.find(name);
    if (it == attribute_lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

Corpus Corpus::without_visual() const {
    auto items = items_;
    for (auto& item : items) {
        item.visual_feature.reset();
    }
    return Corpus(users_, std::move(items), interactions_);
}

} // namespace attrirec
