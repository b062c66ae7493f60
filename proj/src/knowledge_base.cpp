#include "attrirec/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "attrirec/errors.hpp"
#include "attrirec/io.hpp"

namespace attrirec {

using nlohmann::json;

void ZeroShotMix::validate() const {
    for (const double w : {demo, cross, temporal}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw InputError("zero-shot mix weights must be nonnegative");
        }
    }
    if (std::abs(demo + cross + temporal - 1.0) > 1e-9) {
        throw InputError("zero-shot mix weights must sum to 1");
    }
}

namespace {

struct Counts {
    double positives = 0.0;
    double exposures = 0.0;
};

double pearson(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 2) {
        return 0.0;
    }
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [x, y] : pairs) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(pairs.size());
    my /= static_cast<double>(pairs.size());
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (const auto& [x, y] : pairs) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        return 0.0;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace

KnowledgeBase build_kb(const Corpus& corpus, const std::vector<std::size_t>& rows, double smoothing) {
    if (rows.empty()) {
        throw InputError("cannot build a knowledge base from an empty train set");
    }
    if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) {
        throw InputError("smoothing must be nonnegative");
    }
    const auto& log = corpus.interactions();
    const auto& items = corpus.items();
    const auto& users = corpus.users();

    KnowledgeBase kb;
    kb.meta.smoothing = smoothing;
    kb.meta.source_interactions = rows.size();

    double positives = 0.0;
    std::int64_t t_min = log[rows.front()].timestamp;
    std::int64_t t_max = t_min;
    for (const std::size_t r : rows) {
        positives += binarize(log[r].rating);
        t_min = std::min(t_min, log[r].timestamp);
        t_max = std::max(t_max, log[r].timestamp);
    }
    const double prior = positives / static_cast<double>(rows.size());
    kb.meta.prior = prior;
    kb.meta.build_timestamp = t_max;

    // Demographic affinities.
    std::set<std::string> groups;
    for (const auto& user : users) {
        groups.insert(user.demographic_tags.begin(), user.demographic_tags.end());
    }
    StringMap<StringMap<Counts>> counts;
    for (const std::size_t r : rows) {
        const int label = binarize(log[r].rating);
        const auto& user = users[corpus.user_of(r)];
        const auto& item = items[corpus.item_of(r)];
        for (const auto& g : user.demographic_tags) {
            for (const std::size_t a : corpus.item_attributes(corpus.item_of(r))) {
                auto& c = counts[g][corpus.attributes()[a]];
                c.positives += label;
                c.exposures += 1.0;
            }
        }
        (void)item;
    }
    for (const auto& g : groups) {
        kb.group_weights[g] = 1.0;
        auto& row = kb.demo_affinity[g];
        for (const auto& attr : corpus.attributes()) {
            const Counts c = counts.contains(g) && counts[g].contains(attr) ? counts[g][attr] : Counts{};
            const double denom = c.exposures + smoothing;
            row[attr] = denom > 0.0 ? (c.positives + smoothing * prior) / denom : prior;
        }
    }

    // Cross-domain correlations over users active in more than one domain.
    // rates[user][domain][attribute] = (positives, exposures)
    std::map<std::size_t, StringMap<StringMap<Counts>>> rates;
    std::set<std::string> domains;
    for (const std::size_t r : rows) {
        const std::size_t i = corpus.item_of(r);
        const auto& domain = items[i].domain;
        domains.insert(domain);
        auto& per_domain = rates[corpus.user_of(r)][domain];
        const int label = binarize(log[r].rating);
        for (const std::size_t a : corpus.item_attributes(i)) {
            auto& c = per_domain[corpus.attributes()[a]];
            c.positives += label;
            c.exposures += 1.0;
        }
    }
    if (domains.size() > 1) {
        for (const auto& src : domains) {
            for (const auto& dst : domains) {
                if (src == dst) {
                    continue;
                }
                auto& table = kb.cross_corr[src][dst];
                for (const auto& a : corpus.attributes()) {
                    for (const auto& b : corpus.attributes()) {
                        std::vector<std::pair<double, double>> pairs;
                        for (const auto& [user, per_domain] : rates) {
                            const auto s = per_domain.find(src);
                            const auto t = per_domain.find(dst);
                            if (s == per_domain.end() || t == per_domain.end()) {
                                continue;
                            }
                            const auto sa = s->second.find(a);
                            const auto tb = t->second.find(b);
                            if (sa == s->second.end() || tb == t->second.end()) {
                                continue;
                            }
                            pairs.emplace_back(sa->second.positives / sa->second.exposures,
                                               tb->second.positives / tb->second.exposures);
                        }
                        table[a][b] = pearson(pairs);
                    }
                }
            }
        }
    }

    // Temporal profiles: recent share and a half-life matched across halves.
    const double span = std::max<double>(1.0, static_cast<double>(t_max - t_min));
    const double mid = static_cast<double>(t_min) + 0.5 * static_cast<double>(t_max - t_min);
    StringMap<double> early;
    StringMap<double> late;
    double late_positives = 0.0;
    for (const std::size_t r : rows) {
        if (binarize(log[r].rating) == 0) {
            continue;
        }
        const bool is_late = static_cast<double>(log[r].timestamp) >= mid;
        if (is_late) {
            late_positives += 1.0;
        }
        for (const std::size_t a : corpus.item_attributes(corpus.item_of(r))) {
            (is_late ? late : early)[corpus.attributes()[a]] += 1.0;
        }
    }
    for (const auto& attr : corpus.attributes()) {
        TemporalProfile profile;
        const double c1 = early.contains(attr) ? early[attr] : 0.0;
        const double c2 = late.contains(attr) ? late[attr] : 0.0;
        profile.base_popularity = late_positives > 0.0 ? std::clamp(c2 / late_positives, 0.0, 1.0) : 0.0;
        profile.half_life_seconds = span;
        if (c1 > 0.0 && c2 > 0.0 && c2 < c1) {
            profile.half_life_seconds = 0.5 * span / std::log2(c1 / c2);
        }
        kb.temporal[attr] = profile;
    }
    return kb;
}

double demo_score(const UserProfile& user, const ItemRecord& item, const KnowledgeBase& kb) {
    if (item.attribute_tags.empty()) {
        throw InputError("demo_score needs an item with at least one attribute");
    }
    const double prior = kb.meta.prior;
    double weight_sum = 0.0;
    for (const auto& g : user.demographic_tags) {
        const auto it = kb.group_weights.find(g);
        weight_sum += it == kb.group_weights.end() ? 1.0 : it->second;
    }
    if (user.demographic_tags.empty() || weight_sum <= 0.0) {
        return prior;
    }
    double total = 0.0;
    for (const auto& g : user.demographic_tags) {
        const auto wit = kb.group_weights.find(g);
        const double w = (wit == kb.group_weights.end() ? 1.0 : wit->second) / weight_sum;
        const auto git = kb.demo_affinity.find(g);
        double phi = 0.0;
        for (const auto& attr : item.attribute_tags) {
            double value = prior;
            if (git != kb.demo_affinity.end()) {
                const auto ait = git->second.find(attr);
                if (ait != git->second.end()) {
                    value = ait->second;
                }
            }
            phi += value;
        }
        total += w * phi / static_cast<double>(item.attribute_tags.size());
    }
    return std::clamp(total, 0.0, 1.0);
}

double cross_score(const std::vector<SourceEvent>& source_history, const std::string& source_domain,
                   const ItemRecord& item, const KnowledgeBase& kb) {
    StringMap<Counts> rates;
    bool any_positive = false;
    for (const auto& event : source_history) {
        any_positive = any_positive || event.label != 0;
        for (const auto& a : event.attributes) {
            auto& c = rates[a];
            c.positives += event.label != 0 ? 1.0 : 0.0;
            c.exposures += 1.0;
        }
    }
    if (!any_positive) {
        throw InputError("cross_score needs at least one source-domain positive");
    }
    if (item.attribute_tags.empty()) {
        return 0.5;
    }
    const StringMap<StringMap<double>>* table = nullptr;
    if (const auto s = kb.cross_corr.find(source_domain); s != kb.cross_corr.end()) {
        if (const auto t = s->second.find(item.domain); t != s->second.end()) {
            table = &t->second;
        }
    }
    double total = 0.0;
    for (const auto& b : item.attribute_tags) {
        double num = 0.0;
        double den = 0.0;
        if (table != nullptr) {
            for (const auto& [a, c] : rates) {
                const auto row = table->find(a);
                if (row == table->end()) {
                    continue;
                }
                const auto cell = row->second.find(b);
                if (cell == row->second.end()) {
                    continue;
                }
                const double centered = 2.0 * c.positives / c.exposures - 1.0;
                num += cell->second * centered;
                den += std::abs(cell->second);
            }
        }
        const double transfer = den > 0.0 ? num / den : 0.0;
        total += 0.5 * (transfer + 1.0);
    }
    return std::clamp(total / static_cast<double>(item.attribute_tags.size()), 0.0, 1.0);
}

double temporal_score(const ItemRecord& item, std::int64_t query_timestamp, const KnowledgeBase& kb) {
    if (item.attribute_tags.empty()) {
        return 0.0;
    }
    const double dt = std::max<double>(0.0, static_cast<double>(query_timestamp - kb.meta.build_timestamp));
    double total = 0.0;
    for (const auto& attr : item.attribute_tags) {
        const auto it = kb.temporal.find(attr);
        if (it == kb.temporal.end()) {
            continue;
        }
        total += it->second.base_popularity * std::exp2(-dt / it->second.half_life_seconds);
    }
    return std::clamp(total / static_cast<double>(item.attribute_tags.size()), 0.0, 1.0);
}

double zero_shot_score(const UserProfile& user, const ItemRecord& item, std::int64_t timestamp,
                       const KnowledgeBase& kb, const ZeroShotMix& mix, const std::optional<CrossContext>& cross) {
    struct Component {
        double weight;
        double value;
    };
    std::vector<Component> parts;
    if (!item.attribute_tags.empty()) {
        parts.push_back({mix.demo, demo_score(user, item, kb)});
        const bool known = std::any_of(item.attribute_tags.begin(), item.attribute_tags.end(),
                                       [&](const std::string& a) { return kb.temporal.contains(a); });
        if (known && timestamp >= 0) {
            parts.push_back({mix.temporal, temporal_score(item, timestamp, kb)});
        }
    }
    if (cross && cross->source_domain != item.domain &&
        std::any_of(cross->history.begin(), cross->history.end(), [](const SourceEvent& e) { return e.label != 0; })) {
        parts.push_back({mix.cross, cross_score(cross->history, cross->source_domain, item, kb)});
    }
    if (parts.empty()) {
        return kb.meta.prior;
    }
    double weight = 0.0;
    for (const auto& p : parts) {
        weight += p.weight;
    }
    double total = 0.0;
    for (const auto& p : parts) {
        total += (weight > 0.0 ? p.weight / weight : 1.0 / static_cast<double>(parts.size())) * p.value;
    }
    return std::clamp(total, 0.0, 1.0);
}

void save_kb(const KnowledgeBase& kb, const std::filesystem::path& path) {
    json temporal = json::object();
    for (const auto& [attr, profile] : kb.temporal) {
        temporal[attr] = {{"base_popularity", profile.base_popularity},
                          {"half_life_seconds", profile.half_life_seconds}};
    }
    const json doc = {
        {"version", kKnowledgeBaseVersion},
        {"build_meta",
         {{"smoothing", kb.meta.smoothing},
          {"prior", kb.meta.prior},
          {"source_interactions", kb.meta.source_interactions},
          {"build_timestamp", kb.meta.build_timestamp}}},
        {"demo_affinity", kb.demo_affinity},
        {"group_weights", kb.group_weights},
        {"cross_corr", kb.cross_corr},
        {"temporal", temporal},
    };
    write_text_file_atomic(path, doc.dump() + "\n");
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": malformed knowledge base (" + e.what() + ")");
    }
    try {
        if (!doc.is_object() || !doc.contains("version")) {
            throw InputError(path.string() + ": knowledge base has no version field");
        }
        if (doc.at("version").get<int>() != kKnowledgeBaseVersion) {
            throw InputError(path.string() + ": unsupported knowledge base version " + doc.at("version").dump());
        }
        KnowledgeBase kb;
        const auto& meta = doc.at("build_meta");
        kb.meta.smoothing = meta.at("smoothing").get<double>();
        kb.meta.prior = meta.at("prior").get<double>();
        kb.meta.source_interactions = meta.at("source_interactions").get<std::size_t>();
        kb.meta.build_timestamp = meta.at("build_timestamp").get<std::int64_t>();
        kb.demo_affinity = doc.at("demo_affinity").get<decltype(kb.demo_affinity)>();
        kb.group_weights = doc.at("group_weights").get<decltype(kb.group_weights)>();
        kb.cross_corr = doc.at("cross_corr").get<decltype(kb.cross_corr)>();
        for (const auto& [attr, value] : doc.at("temporal").items()) {
            kb.temporal[attr] = {value.at("base_popularity").get<double>(), value.at("half_life_seconds").get<double>()};
        }
        for (const auto& [g, row] : kb.demo_affinity) {
            for (const auto& [a, phi] : row) {
                if (!(phi >= 0.0 && phi <= 1.0)) {
                    throw InputError(path.string() + ": affinity outside [0,1]");
                }
            }
        }
        for (const auto& [a, profile] : kb.temporal) {
            if (!(profile.half_life_seconds > 0.0)) {
                throw InputError(path.string() + ": half-life must be positive");
            }
        }
        return kb;
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": malformed knowledge base (" + e.what() + ")");
    }
}

} // namespace attrirec
