#include "attrirec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "attrirec/errors.hpp"

namespace attrirec {

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw InputError("auc: scores and labels differ in length");
    }
    std::size_t n_pos = 0;
    for (const int label : labels) {
        if (label != 0 && label != 1) {
            throw InputError("auc: labels must be 0 or 1");
        }
        n_pos += static_cast<std::size_t>(label);
    }
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw InputError("auc needs at least one positive and one negative");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of 1-based ranks of the positives, tied blocks sharing their mean rank.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::size_t block_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            block_pos += static_cast<std::size_t>(labels[order[j]]);
            ++j;
        }
        const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
        rank_sum += mean_rank * static_cast<double>(block_pos);
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

namespace {

std::size_t checked_k(std::span<const int> ranked_labels, std::size_t k) {
    if (k == 0) {
        throw InputError("k must be at least 1");
    }
    if (std::none_of(ranked_labels.begin(), ranked_labels.end(), [](int l) { return l != 0; })) {
        throw InputError("ranking metrics need at least one positive");
    }
    return std::min(k, ranked_labels.size());
}

} // namespace

double ndcg_at_k(std::span<const int> ranked_labels, std::size_t k) {
    const std::size_t kk = checked_k(ranked_labels, k);
    double dcg = 0.0;
    for (std::size_t i = 0; i < kk; ++i) {
        if (ranked_labels[i] != 0) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    const auto positives = static_cast<std::size_t>(
        std::count_if(ranked_labels.begin(), ranked_labels.end(), [](int l) { return l != 0; }));
    double ideal = 0.0;
    for (std::size_t i = 0; i < std::min(kk, positives); ++i) {
        ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / ideal;
}

double hit_at_k(std::span<const int> ranked_labels, std::size_t k) {
    const std::size_t kk = checked_k(ranked_labels, k);
    for (std::size_t i = 0; i < kk; ++i) {
        if (ranked_labels[i] != 0) {
            return 1.0;
        }
    }
    return 0.0;
}

} // namespace attrirec
