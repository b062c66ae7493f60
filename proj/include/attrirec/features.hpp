#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "attrirec/data.hpp"
#include "attrirec/encoders.hpp"

namespace attrirec {

// Encoded text and visual features of every catalog item, plus the nonzero
// positions of each text vector (hashed bags are sparse).
struct FeatureTable {
    std::vector<ModalityFeature> text;
    std::vector<ModalityFeature> visual;
    std::vector<std::vector<std::size_t>> text_nonzero;

    std::size_t size() const { return text.size(); }
};

// Text is the attribute tags followed by the description; titles carry
// per-item tokens that only add noise. Throws InputError when a visual feature
// does not match config.visual_dim.
FeatureTable build_features(const Corpus& corpus, const EncoderConfig& config);

struct HistoryEntry {
    std::size_t item = 0;
    int sign = 1; // +1 liked, -1 disliked

    bool operator==(const HistoryEntry&) const = default;
};

struct TrainingExample {
    std::size_t user = 0;
    std::size_t item = 0;
    int label = 0;
    int rating = 3;
    std::vector<std::size_t> truth_attrs; // empty: no attribution supervision
    bool cross_domain = false;
    std::vector<HistoryEntry> history;    // chronological, most recent last
    std::int64_t timestamp = 0;

    bool operator==(const TrainingExample&) const = default;
};

// History of a user: their train interactions, mapped to signed items,
// chronological, at most max_history most recent.
// Refers to the corpus, which must outlive the index.
class HistoryIndex {
public:
    HistoryIndex(const Corpus& corpus, const std::vector<std::size_t>& train_rows);

    std::vector<HistoryEntry> history(std::size_t user, std::size_t max_history) const;
    // Same, leaving out one train row.
    std::vector<HistoryEntry> history_excluding(std::size_t user, std::size_t row, std::size_t max_history) const;

    // Train rows of a user, chronological.
    const std::vector<std::size_t>& rows(std::size_t user) const { return by_user_[user]; }

private:
    const Corpus* corpus_;
    std::vector<std::vector<std::size_t>> by_user_;
};

// One example per listed interaction row. A train row sees the user's other
// train interactions; any other row sees all of them.
std::vector<TrainingExample> build_examples(const Corpus& corpus, const HistoryIndex& history,
                                            const std::vector<std::size_t>& rows, bool rows_are_train,
                                            std::size_t max_history = 20);

} // namespace attrirec
