#include "attrirec/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "attrirec/errors.hpp"
#include "attrirec/text.hpp"

namespace attrirec {

void LossWeights::validate() const {
    for (const double w : {alpha, beta, gamma}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw InputError("loss weights must be finite and nonnegative");
        }
    }
    if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) {
        throw InputError("loss weights must not all be zero");
    }
}

double pred_loss(double p_like, int label) {
    const double p = std::clamp(p_like, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return label != 0 ? -std::log(p) : -std::log(1.0 - p);
}

double reason_loss(std::span<const double> attr_dist, std::span<const std::size_t> truth_attrs) {
    if (truth_attrs.empty()) {
        throw InputError("reason loss needs at least one truth attribute");
    }
    double sum = 0.0;
    for (const std::size_t a : truth_attrs) {
        if (a >= attr_dist.size()) {
            throw InputError("truth attribute outside the vocabulary");
        }
        sum -= std::log(std::max(attr_dist[a], kProbabilityClamp));
    }
    return sum / static_cast<double>(truth_attrs.size());
}

double consistency_loss(double p_like, double p_polarity) {
    const double gap = p_like - p_polarity;
    return gap * gap;
}

LossBreakdown combine(const LossWeights& weights, double l_pred, double l_reason, double l_consistency) {
    LossBreakdown out;
    out.l_pred = l_pred;
    out.l_reason = l_reason;
    out.l_consistency = l_consistency;
    out.total = weights.alpha * l_pred + weights.beta * l_reason + weights.gamma * l_consistency;
    return out;
}

double bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            std::size_t max_n) {
    if (reference.empty()) {
        throw InputError("BLEU reference must not be empty");
    }
    if (candidate.empty() || max_n == 0) {
        return 0.0;
    }
    const std::size_t orders = std::min(max_n, candidate.size());
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= orders; ++n) {
        std::map<std::vector<std::string>, std::size_t> ref_counts;
        for (std::size_t i = 0; i + n <= reference.size(); ++i) {
            ++ref_counts[std::vector<std::string>(reference.begin() + static_cast<std::ptrdiff_t>(i),
                                                  reference.begin() + static_cast<std::ptrdiff_t>(i + n))];
        }
        std::map<std::vector<std::string>, std::size_t> cand_counts;
        for (std::size_t i = 0; i + n <= candidate.size(); ++i) {
            ++cand_counts[std::vector<std::string>(candidate.begin() + static_cast<std::ptrdiff_t>(i),
                                                   candidate.begin() + static_cast<std::ptrdiff_t>(i + n))];
        }
        double matched = 0.0;
        double total = 0.0;
        for (const auto& [gram, count] : cand_counts) {
            total += static_cast<double>(count);
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) {
                matched += static_cast<double>(std::min(count, it->second));
            }
        }
        if (n >= 2) {
            matched += 1.0;
            total += 1.0;
        }
        if (matched == 0.0) {
            return 0.0;
        }
        log_sum += std::log(matched / total);
    }
    const double length_ratio = static_cast<double>(reference.size()) / static_cast<double>(candidate.size());
    const double brevity = std::exp(std::min(0.0, 1.0 - length_ratio));
    return brevity * std::exp(log_sum / static_cast<double>(orders));
}

double bleu_text(const std::string& candidate, const std::string& reference, std::size_t max_n) {
    return bleu(tokenize(candidate), tokenize(reference), max_n);
}

} // namespace attrirec
