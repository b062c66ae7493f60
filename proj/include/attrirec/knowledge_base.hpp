#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attrirec/data.hpp"

namespace attrirec {

struct TemporalProfile {
    double base_popularity = 0.0;    // in [0,1]
    double half_life_seconds = 1.0;  // > 0

    bool operator==(const TemporalProfile&) const = default;
};

struct KbBuildMeta {
    double smoothing = 5.0;
    double prior = 0.5;              // global positive rate of the source data
    std::size_t source_interactions = 0;
    std::int64_t build_timestamp = 0; // latest source timestamp

    bool operator==(const KbBuildMeta&) const = default;
};

template <typename V>
using StringMap = std::map<std::string, V>;

// Demographic affinities, cross-domain attribute correlations and temporal
// popularity profiles.
struct KnowledgeBase {
    StringMap<StringMap<double>> demo_affinity;                      // group -> attribute -> phi
    StringMap<double> group_weights;                                 // group -> w_g (before per-user normalization)
    StringMap<StringMap<StringMap<StringMap<double>>>> cross_corr;   // src -> dst -> src attr -> dst attr
    StringMap<TemporalProfile> temporal;                             // attribute -> profile
    KbBuildMeta meta;

    bool operator==(const KnowledgeBase&) const = default;
};

struct ZeroShotMix {
    double demo = 0.6;
    double cross = 0.2;
    double temporal = 0.2;

    // Throws InputError unless the weights are nonnegative and sum to 1.
    void validate() const;
};

// rows index into corpus.interactions(); only those rows are counted.
// phi_g(a) = (positives + m * prior) / (exposures + m).
KnowledgeBase build_kb(const Corpus& corpus, const std::vector<std::size_t>& rows, double smoothing = 5.0);

// sum over the user's groups of w_g * phi_g(item), with phi_g(item) the mean
// over item attributes and w_g normalized over the user's groups. A user with
// no groups gets the prior. Throws InputError for an attribute-less item.
double demo_score(const UserProfile& user, const ItemRecord& item, const KnowledgeBase& kb);

struct SourceEvent {
    std::vector<std::string> attributes;
    int label = 0;
};

// Correlation-weighted transfer of the user's centered source-domain
// positive rates onto each target attribute, mapped to [0,1] and averaged.
// Throws InputError when the history holds no positive.
double cross_score(const std::vector<SourceEvent>& source_history, const std::string& source_domain,
                   const ItemRecord& item, const KnowledgeBase& kb);

// Mean over item attributes of base * 2^(-dt / half_life), dt clamped at 0.
double temporal_score(const ItemRecord& item, std::int64_t query_timestamp, const KnowledgeBase& kb);

struct CrossContext {
    std::vector<SourceEvent> history;
    std::string source_domain;
};

// Convex blend of whichever components are available, weights renormalized
// over them. With nothing available, returns the prior.
double zero_shot_score(const UserProfile& user, const ItemRecord& item, std::int64_t timestamp,
                       const KnowledgeBase& kb, const ZeroShotMix& mix = {},
                       const std::optional<CrossContext>& cross = std::nullopt);

inline constexpr int kKnowledgeBaseVersion = 1;

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path);

// Throws InputError on a version mismatch or malformed content.
KnowledgeBase load_kb(const std::filesystem::path& path);

} // namespace attrirec
