#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "attrirec/data.hpp"

namespace attrirec {

struct SyntheticConfig {
    std::size_t n_users = 2000;
    std::size_t n_items = 500;
    std::size_t n_interactions = 40000;
    std::size_t n_groups = 8;
    std::size_t n_attributes = 12;
    std::size_t latent_dim = 8;
    double noise_std = 0.1;
    std::uint64_t seed = 7;

    std::size_t visual_dim = 16;
    // Share of items that carry a visual feature.
    double visual_coverage = 0.9;
    // Share of users that get only 5-8 interactions.
    double coldstart_user_fraction = 0.1;
    // Share of items released in the final 5% of the time range.
    double new_item_fraction = 0.05;
    // Expected share of a user's interactions outside their home domain.
    double cross_domain_rate = 0.15;
    // Extra affinity each user has for one personal attribute of their own,
    // independent of their groups.
    double personal_affinity = 3.0;
    // Interaction sampling weight is exp(exposure_bias * utility).
    double exposure_bias = 1.5;

    // Throws InputError on invalid values.
    void validate() const;
};

// The planted generative structure, for tests that need ground truth.
struct SyntheticTruth {
    std::vector<std::string> attribute_names;
    std::vector<std::string> group_names;
    std::vector<std::vector<double>> group_affinity;      // group x attribute
    std::vector<std::vector<std::size_t>> user_groups;     // group indices per user
    std::vector<std::size_t> user_personal;                // personal attribute per user
    double personal_affinity = 0.0;
    std::vector<std::vector<std::size_t>> item_attributes; // attribute indices per item
    std::vector<std::vector<double>> user_latent;
    std::vector<std::vector<double>> item_latent;

    // Mean planted affinity of the user's groups for one attribute, plus the
    // personal boost when it is the user's own attribute.
    double user_affinity(std::size_t user, std::size_t attribute) const;

    // Noise-free utility: mean user affinity over the item's attributes
    // plus the latent dot product.
    double utility(std::size_t user, std::size_t item) const;

    // Item attributes ordered by descending user affinity (ties by index).
    std::vector<std::size_t> ranked_attributes(std::size_t user, std::size_t item) const;
};

struct SyntheticDataset {
    std::vector<UserProfile> users;
    std::vector<ItemRecord> items;
    std::vector<Interaction> interactions;
    SyntheticTruth truth;
};

// rating = clamp(round(3 + 1.25 * (utility + noise)), 1, 5).
int planted_rating(double utility_plus_noise);

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

} // namespace attrirec
