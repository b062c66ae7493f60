#pragma once

#include <cstddef>
#include <span>

namespace attrirec {

// Probability that a random positive outscores a random negative, ties
// counting one half. Rank-sum with averaged tie ranks. Throws InputError
// on mismatched lengths or single-class labels.
double auc(std::span<const double> scores, std::span<const int> labels);

// Labels in ranked order. k beyond the list length is clamped. Both throw
// InputError when k == 0 or the list holds no positive.
double ndcg_at_k(std::span<const int> ranked_labels, std::size_t k);
double hit_at_k(std::span<const int> ranked_labels, std::size_t k);

} // namespace attrirec
