#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace attrirec {

struct UserProfile {
    std::string user_id;
    std::vector<std::string> demographic_tags;
    std::string domain;

    bool operator==(const UserProfile&) const = default;
};

struct ItemRecord {
    std::string item_id;
    std::string title;
    std::string description;
    std::vector<std::string> attribute_tags;
    std::optional<std::vector<double>> visual_feature;
    std::string domain;

    bool operator==(const ItemRecord&) const = default;
};

// An empty reason means no ground-truth attribution was recorded.
struct Interaction {
    std::string user_id;
    std::string item_id;
    int rating = 0;
    std::int64_t timestamp = 0;
    std::string reason;

    bool operator==(const Interaction&) const = default;
};

// 1 iff rating >= 4. Throws InputError outside [1,5].
int binarize(int rating);

std::vector<Interaction> load_ratings(const std::filesystem::path& path);
void write_ratings(const std::filesystem::path& path, const std::vector<Interaction>& interactions);

std::vector<ItemRecord> load_items(const std::filesystem::path& path);
void write_items(const std::filesystem::path& path, const std::vector<ItemRecord>& items);

std::vector<UserProfile> load_users(const std::filesystem::path& path);
void write_users(const std::filesystem::path& path, const std::vector<UserProfile>& users);

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    std::vector<std::size_t> test;
    std::set<std::string> coldstart_users;
    std::set<std::string> coldstart_items;

    bool operator==(const DatasetSplit&) const = default;
};

// Largest-remainder sizes for n rows; leftover rows go to the largest
// fractional parts, ties resolved in train, valid, test order.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

// Leave-latest-out split. Users are visited round-robin in a seeded order;
// each visit takes that user's latest unassigned interaction, filling test
// first and then valid. Whatever remains is train.
DatasetSplit make_splits(const std::vector<Interaction>& interactions,
                         const SplitRatios& ratios = {},
                         std::size_t coldstart_threshold = 5,
                         std::uint64_t seed = 0);

// Indexed view over a loaded dataset. Attribute vocabulary is the sorted
// union of item attribute tags.
class Corpus {
public:
    Corpus(std::vector<UserProfile> users, std::vector<ItemRecord> items,
           std::vector<Interaction> interactions);

    const std::vector<UserProfile>& users() const { return users_; }
    const std::vector<ItemRecord>& items() const { return items_; }
    const std::vector<Interaction>& interactions() const { return interactions_; }
    const std::vector<std::string>& attributes() const { return attributes_; }

    std::optional<std::size_t> user_index(const std::string& id) const;
    std::optional<std::size_t> item_index(const std::string& id) const;
    std::optional<std::size_t> attribute_index(const std::string& name) const;

    std::size_t user_of(std::size_t interaction) const { return interaction_user_[interaction]; }
    std::size_t item_of(std::size_t interaction) const { return interaction_item_[interaction]; }

    // Attribute indices of an item, in the item's tag order.
    const std::vector<std::size_t>& item_attributes(std::size_t item) const {
        return item_attributes_[item];
    }

    // Dimension shared by every present visual feature; 0 when none exist.
    std::size_t visual_dim() const { return visual_dim_; }

    // Removes every visual feature.
    Corpus without_visual() const;

private:
    std::vector<UserProfile> users_;
    std::vector<ItemRecord> items_;
    std::vector<Interaction> interactions_;
    std::vector<std::string> attributes_;
    std::unordered_map<std::string, std::size_t> user_lookup_;
    std::unordered_map<std::string, std::size_t> item_lookup_;
    std::unordered_map<std::string, std::size_t> attribute_lookup_;
    std::vector<std::size_t> interaction_user_;
    std::vector<std::size_t> interaction_item_;
    std::vector<std::vector<std::size_t>> item_attributes_;
    std::size_t visual_dim_ = 0;
};

} // namespace attrirec
