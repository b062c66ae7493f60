#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace attrirec {

struct LossWeights {
    double alpha = 1.0; // prediction
    double beta = 0.5;  // attribution (reason surrogate)
    double gamma = 0.5; // prediction/explanation consistency

    // Throws InputError if any weight is negative or all are zero.
    void validate() const;
};

struct LossBreakdown {
    double l_pred = 0.0;
    double l_reason = 0.0;
    double l_consistency = 0.0;
    double total = 0.0;
};

inline constexpr double kProbabilityClamp = 1e-12;

// Binary cross-entropy with p clamped to [1e-12, 1 - 1e-12].
double pred_loss(double p_like, int label);

// Mean negative log-probability of the truth attributes. The differentiable
// stand-in for BLEU during training. Throws InputError on an empty truth
// set or an out-of-vocabulary index.
double reason_loss(std::span<const double> attr_dist, std::span<const std::size_t> truth_attrs);

// Squared gap between the preference and polarity heads.
double consistency_loss(double p_like, double p_polarity);

LossBreakdown combine(const LossWeights& weights, double l_pred, double l_reason, double l_consistency);

// Sentence BLEU: modified n-gram precisions for n = 1..min(max_n, |candidate|),
// add-one smoothed for n >= 2, geometric mean times the brevity penalty.
// Throws InputError if the reference is empty.
double bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            std::size_t max_n = 4);

// bleu over the shared tokenizer.
double bleu_text(const std::string& candidate, const std::string& reference, std::size_t max_n = 4);

} // namespace attrirec
