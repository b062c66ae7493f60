#include "attrirec/features.hpp"

#include <algorithm>

#include "attrirec/errors.hpp"
#include "attrirec/instruction.hpp"

namespace attrirec {

FeatureTable build_features(const Corpus& corpus, const EncoderConfig& config) {
    if (corpus.visual_dim() != 0 && corpus.visual_dim() != config.visual_dim) {
        throw InputError("dataset visual dimension " + std::to_string(corpus.visual_dim()) +
                         " does not match encoder visual_dim " + std::to_string(config.visual_dim));
    }
    FeatureTable table;
    const auto& items = corpus.items();
    table.text.reserve(items.size());
    table.visual.reserve(items.size());
    table.text_nonzero.reserve(items.size());
    for (const auto& item : items) {
        std::string content;
        for (const auto& tag : item.attribute_tags) {
            content += tag;
            content += ' ';
        }
        content += item.description;
        auto text = encode_text(content, config);
        std::vector<std::size_t> nonzero;
        for (std::size_t k = 0; k < text.vector.size(); ++k) {
            if (text.vector[k] != 0.0) {
                nonzero.push_back(k);
            }
        }
        table.text.push_back(std::move(text));
        table.text_nonzero.push_back(std::move(nonzero));
        table.visual.push_back(encode_visual(item.visual_feature, config));
    }
    return table;
}

HistoryIndex::HistoryIndex(const Corpus& corpus, const std::vector<std::size_t>& train_rows)
    : corpus_(&corpus), by_user_(corpus.users().size()) {
    for (const std::size_t row : train_rows) {
        by_user_[corpus.user_of(row)].push_back(row);
    }
    const auto& log = corpus.interactions();
    for (auto& rows : by_user_) {
        std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
            return log[a].timestamp != log[b].timestamp ? log[a].timestamp < log[b].timestamp : a < b;
        });
    }
}

namespace {

std::vector<HistoryEntry> tail(const Corpus& corpus, const std::vector<std::size_t>& rows, std::size_t end,
                               std::size_t max_history) {
    const std::size_t begin = end > max_history ? end - max_history : 0;
    std::vector<HistoryEntry> out;
    out.reserve(end - begin);
    for (std::size_t k = begin; k < end; ++k) {
        const std::size_t row = rows[k];
        out.push_back({corpus.item_of(row), binarize(corpus.interactions()[row].rating) != 0 ? 1 : -1});
    }
    return out;
}

} // namespace

std::vector<HistoryEntry> HistoryIndex::history(std::size_t user, std::size_t max_history) const {
    const auto& rows = by_user_[user];
    return tail(*corpus_, rows, rows.size(), max_history);
}

std::vector<HistoryEntry> HistoryIndex::history_excluding(std::size_t user, std::size_t row,
                                                          std::size_t max_history) const {
    std::vector<std::size_t> others;
    others.reserve(by_user_[user].size());
    for (const std::size_t r : by_user_[user]) {
        if (r != row) {
            others.push_back(r);
        }
    }
    return tail(*corpus_, others, others.size(), max_history);
}

std::vector<TrainingExample> build_examples(const Corpus& corpus, const HistoryIndex& history,
                                            const std::vector<std::size_t>& rows, bool rows_are_train,
                                            std::size_t max_history) {
    std::vector<TrainingExample> out;
    out.reserve(rows.size());
    const auto& log = corpus.interactions();
    for (const std::size_t row : rows) {
        const auto& interaction = log[row];
        TrainingExample ex;
        ex.user = corpus.user_of(row);
        ex.item = corpus.item_of(row);
        ex.rating = interaction.rating;
        ex.label = binarize(interaction.rating);
        ex.timestamp = interaction.timestamp;
        ex.truth_attrs = reason_attributes(interaction.reason, corpus.attributes());
        const auto& user_domain = corpus.users()[ex.user].domain;
        const auto& item_domain = corpus.items()[ex.item].domain;
        ex.cross_domain = !user_domain.empty() && !item_domain.empty() && user_domain != item_domain;
        ex.history = rows_are_train ? history.history_excluding(ex.user, row, max_history)
                                    : history.history(ex.user, max_history);
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace attrirec
