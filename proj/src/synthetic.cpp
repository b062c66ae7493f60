#include "attrirec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "attrirec/errors.hpp"
#include "attrirec/instruction.hpp"
#include "attrirec/random.hpp"

namespace attrirec {

namespace {

constexpr std::int64_t kEpochStart = 1'600'000'000;
constexpr std::int64_t kTimeSpan = 365LL * 24 * 3600;
// New items launch here; every older-item interaction happens before it.
constexpr std::int64_t kLaunch = kEpochStart + kTimeSpan - kTimeSpan / 20;
// At most this many new items per user, so they stay each user's latest.
constexpr std::size_t kMaxNewPerUser = 2;

const std::vector<std::string>& genre_words() {
    static const std::vector<std::string> words = {
        "action",   "adventure", "animation", "comedy",    "crime",  "documentary", "drama",
        "family",   "fantasy",   "history",   "horror",    "music",  "mystery",     "romance",
        "scifi",    "thriller",  "war",       "western",   "noir",   "sports",      "biography",
        "musical",  "satire",    "heist",     "spy",       "superhero", "zombie",   "cyberpunk",
        "mythology", "parody",   "tragedy",   "slapstick"};
    return words;
}

const std::vector<std::string>& title_words() {
    static const std::vector<std::string> words = {
        "Silent", "Crimson", "Hollow", "Golden", "Broken", "Distant", "Electric", "Midnight",
        "Paper",  "Iron",    "Velvet", "Frozen", "Wild",   "Quiet",   "Burning",  "Lost"};
    return words;
}

const std::vector<std::string>& title_nouns() {
    static const std::vector<std::string> words = {
        "Harbor", "Signal", "Empire", "Garden", "Circuit", "River", "Letter", "Mirror",
        "Frontier", "Orchard", "Station", "Tide", "Archive", "Comet", "Canyon", "Lantern"};
    return words;
}

const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {
        "story", "journey", "tale", "chronicle", "portrait", "saga", "episode", "account",
        "about", "with",    "following", "across", "through", "unusual", "familiar", "bold"};
    return words;
}

std::string padded_id(char prefix, std::size_t index, std::size_t count) {
    const int width = static_cast<int>(std::to_string(count).size());
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%c%0*zu", prefix, width, index);
    return buffer;
}

// Largest-remainder integer allocation of total across weights, each entry
// capped at cap.
std::vector<std::size_t> allocate(std::size_t total, const std::vector<double>& weights,
                                  std::size_t cap) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<bool> capped(n, false);
    std::size_t remaining = total;
    while (remaining > 0) {
        double mass = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (!capped[k]) {
                mass += weights[k];
            }
        }
        if (mass <= 0.0) {
            break;
        }
        std::vector<double> frac(n, -1.0);
        std::size_t handed = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (capped[k]) {
                continue;
            }
            const double exact = static_cast<double>(remaining) * weights[k] / mass;
            const auto whole = static_cast<std::size_t>(std::floor(exact));
            counts[k] += whole;
            handed += whole;
            frac[k] = exact - static_cast<double>(whole);
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
        std::size_t leftover = remaining - handed;
        for (std::size_t k = 0; k < n && leftover > 0; ++k) {
            if (frac[order[k]] >= 0.0) {
                ++counts[order[k]];
                --leftover;
            }
        }
        remaining = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (counts[k] > cap) {
                remaining += counts[k] - cap;
                counts[k] = cap;
                capped[k] = true;
            } else if (counts[k] == cap) {
                capped[k] = true;
            }
        }
    }
    return counts;
}

} // namespace

void SyntheticConfig::validate() const {
    auto fail = [](const std::string& what) { throw InputError("invalid synthetic config: " + what); };
    if (n_users == 0) fail("n_users must be positive");
    if (n_items == 0) fail("n_items must be positive");
    if (n_interactions == 0) fail("n_interactions must be positive");
    if (n_groups == 0) fail("n_groups must be positive");
    if (n_attributes == 0) fail("n_attributes must be positive");
    if (latent_dim == 0) fail("latent_dim must be positive");
    if (visual_dim == 0) fail("visual_dim must be positive");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) fail("noise_std must be >= 0");
    auto unit = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in [0,1]");
    };
    unit(visual_coverage, "visual_coverage");
    unit(coldstart_user_fraction, "coldstart_user_fraction");
    unit(new_item_fraction, "new_item_fraction");
    if (!(cross_domain_rate >= 0.0 && cross_domain_rate < 1.0)) fail("cross_domain_rate must lie in [0,1)");
    if (!std::isfinite(exposure_bias)) fail("exposure_bias must be finite");
    if (!std::isfinite(personal_affinity)) fail("personal_affinity must be finite");
    if (n_interactions > n_users * n_items) fail("n_interactions exceeds n_users * n_items");
}

double SyntheticTruth::user_affinity(std::size_t user, std::size_t attribute) const {
    const auto& groups = user_groups[user];
    double sum = 0.0;
    for (const std::size_t g : groups) {
        sum += group_affinity[g][attribute];
    }
    const double group = groups.empty() ? 0.0 : sum / static_cast<double>(groups.size());
    const bool personal = user < user_personal.size() && user_personal[user] == attribute;
    return group + (personal ? personal_affinity : 0.0);
}

double SyntheticTruth::utility(std::size_t user, std::size_t item) const {
    const auto& attrs = item_attributes[item];
    double affinity = 0.0;
    for (const std::size_t a : attrs) {
        affinity += user_affinity(user, a);
    }
    if (!attrs.empty()) {
        affinity /= static_cast<double>(attrs.size());
    }
    double latent = 0.0;
    for (std::size_t k = 0; k < user_latent[user].size(); ++k) {
        latent += user_latent[user][k] * item_latent[item][k];
    }
    return affinity + latent;
}

std::vector<std::size_t> SyntheticTruth::ranked_attributes(std::size_t user, std::size_t item) const {
    auto attrs = item_attributes[item];
    std::stable_sort(attrs.begin(), attrs.end(), [&](std::size_t a, std::size_t b) {
        const double fa = user_affinity(user, a);
        const double fb = user_affinity(user, b);
        return fa != fb ? fa > fb : a < b;
    });
    return attrs;
}

int planted_rating(double utility_plus_noise) {
    const double raw = std::round(3.0 + 1.25 * utility_plus_noise);
    return static_cast<int>(std::clamp(raw, 1.0, 5.0));
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    Rng rng(config.seed);
    SyntheticDataset data;
    auto& truth = data.truth;

    const auto& genres = genre_words();
    for (std::size_t a = 0; a < config.n_attributes; ++a) {
        truth.attribute_names.push_back(a < genres.size() ? genres[a] : "attr" + std::to_string(a));
    }
    for (std::size_t g = 0; g < config.n_groups; ++g) {
        truth.group_names.push_back(padded_id('g', g, config.n_groups));
    }

    // Each group loves one attribute and hates another; the rest is mild.
    truth.group_affinity.assign(config.n_groups, std::vector<double>(config.n_attributes, 0.0));
    for (std::size_t g = 0; g < config.n_groups; ++g) {
        auto& row = truth.group_affinity[g];
        for (auto& v : row) {
            v = std::clamp(rng.normal(0.0, 0.5), -1.0, 1.0);
        }
        const std::size_t loved = g % config.n_attributes;
        row[loved] = 2.0;
        if (config.n_attributes > 1) {
            const std::size_t hated = (g + 1 + config.n_attributes / 2) % config.n_attributes;
            if (hated != loved) {
                row[hated] = -2.0;
            }
        }
    }

    const double latent_scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
    auto latent_vector = [&] {
        std::vector<double> v(config.latent_dim);
        for (auto& x : v) {
            x = rng.normal(0.0, latent_scale);
        }
        return v;
    };

    const std::vector<std::string> domains = {"movies", "books"};
    const std::size_t primary_items = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(config.n_items))));

    // Users.
    truth.user_groups.resize(config.n_users);
    truth.personal_affinity = config.personal_affinity;
    for (std::size_t u = 0; u < config.n_users; ++u) {
        UserProfile user;
        user.user_id = padded_id('u', u, config.n_users);
        const std::size_t first = rng.below(config.n_groups);
        truth.user_groups[u].push_back(first);
        if (config.n_groups > 1 && rng.uniform() < 0.5) {
            std::size_t second = rng.below(config.n_groups - 1);
            if (second >= first) {
                ++second;
            }
            truth.user_groups[u].push_back(second);
        }
        for (const std::size_t g : truth.user_groups[u]) {
            user.demographic_tags.push_back(truth.group_names[g]);
        }
        truth.user_personal.push_back(rng.below(config.n_attributes));
        user.domain = (primary_items < config.n_items && rng.uniform() < 0.25) ? domains[1] : domains[0];
        truth.user_latent.push_back(latent_vector());
        data.users.push_back(std::move(user));
    }

    // Items.
    std::vector<std::vector<double>> projection(config.visual_dim, std::vector<double>(config.latent_dim));
    for (auto& row : projection) {
        for (auto& x : row) {
            x = rng.normal(0.0, 1.0);
        }
    }
    std::vector<std::int64_t> release(config.n_items, kEpochStart);
    const auto& adjectives = title_words();
    const auto& nouns = title_nouns();
    const auto& fillers = filler_words();
    truth.item_attributes.resize(config.n_items);
    for (std::size_t i = 0; i < config.n_items; ++i) {
        ItemRecord item;
        item.item_id = padded_id('i', i, config.n_items);
        item.domain = i < primary_items ? domains[0] : domains[1];
        const std::size_t n_tags = 1 + rng.below(std::min<std::size_t>(3, config.n_attributes));
        auto& tags = truth.item_attributes[i];
        while (tags.size() < n_tags) {
            const std::size_t a = rng.below(config.n_attributes);
            if (std::find(tags.begin(), tags.end(), a) == tags.end()) {
                tags.push_back(a);
            }
        }
        for (const std::size_t a : tags) {
            item.attribute_tags.push_back(truth.attribute_names[a]);
        }
        item.title = adjectives[rng.below(adjectives.size())] + " " + nouns[rng.below(nouns.size())] + " " +
                     std::to_string(i);
        std::string description = "A";
        for (std::size_t k = 0; k < tags.size(); ++k) {
            description += (k == 0 ? " " : " and ") + truth.attribute_names[tags[k]];
        }
        for (int k = 0; k < 3; ++k) {
            description += " " + fillers[rng.below(fillers.size())];
        }
        item.description = description + ".";
        truth.item_latent.push_back(latent_vector());
        if (rng.uniform() < config.visual_coverage) {
            std::vector<double> visual(config.visual_dim);
            for (std::size_t k = 0; k < config.visual_dim; ++k) {
                double x = 0.0;
                for (std::size_t j = 0; j < config.latent_dim; ++j) {
                    x += projection[k][j] * truth.item_latent[i][j];
                }
                visual[k] = x + rng.normal(0.0, 0.1);
            }
            item.visual_feature = std::move(visual);
        }
        if (rng.uniform() < config.new_item_fraction) {
            release[i] = kLaunch;
        }
        data.items.push_back(std::move(item));
    }

    // Per-user interaction counts: cold-start users get 5-8, the rest share
    // the remainder under log-normal activity weights.
    std::vector<double> weights(config.n_users);
    std::vector<bool> cold(config.n_users, false);
    std::vector<std::size_t> cold_counts(config.n_users, 0);
    std::size_t cold_total = 0;
    for (std::size_t u = 0; u < config.n_users; ++u) {
        cold[u] = rng.uniform() < config.coldstart_user_fraction;
        cold_counts[u] = 5 + rng.below(4);
        weights[u] = std::exp(rng.normal(0.0, 0.5));
        if (cold[u]) {
            cold_total += std::min(cold_counts[u], config.n_items);
        }
    }
    const std::size_t n_warm = static_cast<std::size_t>(std::count(cold.begin(), cold.end(), false));
    std::vector<std::size_t> counts;
    if (cold_total + 9 * n_warm <= config.n_interactions && n_warm > 0) {
        std::vector<double> warm_weights(config.n_users, 0.0);
        for (std::size_t u = 0; u < config.n_users; ++u) {
            if (!cold[u]) {
                warm_weights[u] = weights[u];
            }
        }
        counts = allocate(config.n_interactions - cold_total, warm_weights, config.n_items);
        for (std::size_t u = 0; u < config.n_users; ++u) {
            if (cold[u]) {
                counts[u] = std::min(cold_counts[u], config.n_items);
            }
        }
        std::size_t sum = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
        if (sum != config.n_interactions) {
            counts = allocate(config.n_interactions, weights, config.n_items);
        }
    } else {
        counts = allocate(config.n_interactions, weights, config.n_items);
    }

    const double home_share = static_cast<double>(primary_items) / static_cast<double>(config.n_items);
    std::vector<std::pair<double, std::size_t>> keys(config.n_items);
    for (std::size_t u = 0; u < config.n_users; ++u) {
        if (counts[u] == 0) {
            continue;
        }
        const bool home_primary = data.users[u].domain == domains[0];
        const double home_items = home_primary ? home_share : 1.0 - home_share;
        double other_weight = 1.0;
        if (home_items < 1.0 && home_items > 0.0) {
            other_weight = config.cross_domain_rate / (1.0 - config.cross_domain_rate) * home_items /
                           (1.0 - home_items);
        }
        // Weighted sampling without replacement via exponential keys.
        for (std::size_t i = 0; i < config.n_items; ++i) {
            const bool same = data.items[i].domain == data.users[u].domain;
            double w = std::exp(config.exposure_bias * truth.utility(u, i)) * (same ? 1.0 : other_weight);
            double uval = rng.uniform();
            while (uval <= 0.0) {
                uval = rng.uniform();
            }
            const double key = w > 0.0 ? std::log(uval) / w : -INFINITY;
            keys[i] = {key, i};
        }
        std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        std::vector<std::size_t> chosen;
        std::size_t new_taken = 0;
        for (std::size_t k = 0; k < keys.size() && chosen.size() < counts[u]; ++k) {
            const std::size_t i = keys[k].second;
            if (release[i] != kEpochStart) {
                if (new_taken == kMaxNewPerUser) {
                    continue;
                }
                ++new_taken;
            }
            chosen.push_back(i);
        }
        // Tiny catalogs may need the skipped new items after all.
        for (std::size_t k = 0; k < keys.size() && chosen.size() < counts[u]; ++k) {
            const std::size_t i = keys[k].second;
            if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
                chosen.push_back(i);
            }
        }
        for (const std::size_t i : chosen) {
            Interaction row;
            row.user_id = data.users[u].user_id;
            row.item_id = data.items[i].item_id;
            const double noisy = truth.utility(u, i) + (config.noise_std > 0.0 ? rng.normal(0.0, config.noise_std) : 0.0);
            row.rating = planted_rating(noisy);
            const bool is_new = release[i] != kEpochStart;
            const std::int64_t start = is_new ? kLaunch : kEpochStart;
            const std::int64_t span = is_new ? kEpochStart + kTimeSpan - kLaunch : kLaunch - 1 - kEpochStart;
            row.timestamp = start + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span) + 1));
            const auto ranked = truth.ranked_attributes(u, i);
            std::vector<std::string> named;
            for (std::size_t r = 0; r < ranked.size() && r < 2; ++r) {
                named.push_back(truth.attribute_names[ranked[r]]);
            }
            row.reason = render_attribution_reason(row.rating >= 4 ? Polarity::liked : Polarity::disliked, named);
            data.interactions.push_back(std::move(row));
        }
    }
    // Chronological log order, ties by user then item.
    std::stable_sort(data.interactions.begin(), data.interactions.end(),
                     [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
    return data;
}

} // namespace attrirec
